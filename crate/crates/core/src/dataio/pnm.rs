//! Binary PPM (P6) and PGM (P5) with maxval 255. Intensities quantize as
//! `round(255 v)` and read back as `byte / 255`.

use std::fs;
use std::path::Path;

use super::{end_of_header, next_token, parse_token, read_bytes};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::imaging::Image;

pub fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn encode_image(image: &Image) -> Vec<u8> {
    let tag = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{tag}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| quantize(*v)));
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let (tag, pos) = next_token(bytes, 0).ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let channels = match tag {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::MalformedHeader(format!("unsupported netpbm variant {other:?}"))),
    };
    let (width, pos) = parse_token::<usize>(bytes, pos, "width")?;
    let (height, pos) = parse_token::<usize>(bytes, pos, "height")?;
    let (maxval, pos) = parse_token::<u32>(bytes, pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!("maxval must be 255, got {maxval}")));
    }
    let pos = end_of_header(bytes, pos)?;
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() != expected {
        return Err(Error::MalformedHeader(format!(
            "payload has {} bytes, header announces {expected}",
            payload.len()
        )));
    }
    Image::from_data(width, height, channels, payload.iter().map(|b| *b as f64 / 255.0).collect())
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    Ok(fs::write(path, encode_image(image))?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(&read_bytes(path)?)
}

/// Masks are PGMs with 255 for set cells and 0 elsewhere; on read any byte
/// above 127 counts as set.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data = mask.as_slice().iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
    write_image(path, &Image::from_data(mask.width(), mask.height(), 1, data)?)
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    let image = read_image(path)?;
    if image.channels() != 1 {
        return Err(Error::MalformedHeader("mask must be a single-channel PGM".into()));
    }
    Mask::from_vec(image.width(), image.height(), image.data().iter().map(|v| *v > 0.5).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_and_half_gray() {
        let black = Image::new(4, 3, 3).unwrap();
        assert_eq!(decode_image(&encode_image(&black)).unwrap(), black);

        let half = Image::from_data(1, 1, 1, vec![0.5]).unwrap();
        let bytes = encode_image(&half);
        assert_eq!(*bytes.last().unwrap(), 128);
        let back = decode_image(&bytes).unwrap();
        assert_eq!(back.data()[0], 128.0 / 255.0);
        assert!((back.data()[0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn write_read_write_is_idempotent() {
        let img = Image::from_fn(7, 5, 3, |x, y, px| {
            for (c, v) in px.iter_mut().enumerate() {
                *v = ((x * 13 + y * 29 + c * 3) % 101) as f64 / 100.0;
            }
        })
        .unwrap();
        let once = encode_image(&img);
        let twice = encode_image(&decode_image(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn rejects_ascii_and_bad_headers() {
        assert!(matches!(decode_image(b"P3\n1 1\n255\n0 0 0\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_image(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_image(b"P5\n2 2\n255\n\0\0"), Err(Error::MalformedHeader(_))));
        let commented = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        assert_eq!(decode_image(commented).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask = Mask::from_vec(3, 2, vec![true, false, true, false, false, true]).unwrap();
        write_mask(&path, &mask).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
    }
}
