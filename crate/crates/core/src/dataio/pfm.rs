//! Portable float maps. Values are stored as `f32`; rows run bottom-to-top on
//! disk and are flipped at this boundary. Invalid cells are written as NaN and
//! any non-finite value reads back as invalid.

use nalgebra::Vector2;
use std::fs;
use std::path::Path;

use super::{end_of_header, next_token, parse_token, read_bytes};
use crate::error::{Error, Result};
use crate::grid::{FlowField, ScalarMap};

/// Raw PFM payload, rows top-to-bottom, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub fn encode_pfm(pfm: &Pfm) -> Vec<u8> {
    let tag = if pfm.channels == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", pfm.width, pfm.height).into_bytes();
    let row = pfm.width * pfm.channels;
    for y in (0..pfm.height).rev() {
        for v in &pfm.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Pfm> {
    let (tag, pos) = next_token(bytes, 0).ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    let channels = match tag {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::MalformedHeader(format!("unknown PFM tag {other:?}"))),
    };
    let (width, pos) = parse_token::<usize>(bytes, pos, "width")?;
    let (height, pos) = parse_token::<usize>(bytes, pos, "height")?;
    let (scale, pos) = parse_token::<f64>(bytes, pos, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("scale must be nonzero, got {scale}")));
    }
    let pos = end_of_header(bytes, pos)?;
    let little = scale < 0.0;
    let row = width * channels;
    let expected = row * height * 4;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::MalformedHeader(format!(
            "payload has {} bytes, header announces {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::SizeMismatch(format!("{} trailing bytes after payload", payload.len() - expected)));
    }
    let mut data = vec![0f32; row * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(Pfm { width, height, channels, data })
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    decode_pfm(&read_bytes(path)?)
}

pub fn write_pfm(path: &Path, pfm: &Pfm) -> Result<()> {
    Ok(fs::write(path, encode_pfm(pfm))?)
}

pub fn scalar_map_to_pfm(map: &ScalarMap) -> Pfm {
    let data = (0..map.len())
        .map(|i| if map.valid()[i] { map.values()[i] as f32 } else { f32::NAN })
        .collect();
    Pfm { width: map.width(), height: map.height(), channels: 1, data }
}

pub fn pfm_to_scalar_map(pfm: &Pfm) -> Result<ScalarMap> {
    if pfm.channels != 1 {
        return Err(Error::SizeMismatch(format!("expected a 1-channel map, found {} channels", pfm.channels)));
    }
    let values: Vec<f64> = pfm.data.iter().map(|v| if v.is_finite() { *v as f64 } else { 0.0 }).collect();
    let valid = pfm.data.iter().map(|v| v.is_finite()).collect();
    ScalarMap::from_parts(pfm.width, pfm.height, values, valid)
}

/// Flow is stored as a 3-channel map with a zero third channel.
pub fn flow_field_to_pfm(flow: &FlowField) -> Pfm {
    let mut data = Vec::with_capacity(flow.len() * 3);
    for i in 0..flow.len() {
        if flow.valid()[i] {
            let u = flow.values()[i];
            data.extend_from_slice(&[u.x as f32, u.y as f32, 0.0]);
        } else {
            data.extend_from_slice(&[f32::NAN, f32::NAN, 0.0]);
        }
    }
    Pfm { width: flow.width(), height: flow.height(), channels: 3, data }
}

pub fn pfm_to_flow_field(pfm: &Pfm) -> Result<FlowField> {
    if pfm.channels != 3 {
        return Err(Error::SizeMismatch(format!("expected a 3-channel flow map, found {} channels", pfm.channels)));
    }
    let mut values = Vec::with_capacity(pfm.width * pfm.height);
    let mut valid = Vec::with_capacity(pfm.width * pfm.height);
    for px in pfm.data.chunks_exact(3) {
        let ok = px[0].is_finite() && px[1].is_finite();
        valid.push(ok);
        values.push(if ok { Vector2::new(px[0] as f64, px[1] as f64) } else { Vector2::zeros() });
    }
    FlowField::from_parts(pfm.width, pfm.height, values, valid)
}

pub fn write_scalar_map(path: &Path, map: &ScalarMap) -> Result<()> {
    write_pfm(path, &scalar_map_to_pfm(map))
}

pub fn read_scalar_map(path: &Path) -> Result<ScalarMap> {
    pfm_to_scalar_map(&read_pfm(path)?)
}

pub fn write_flow_field(path: &Path, flow: &FlowField) -> Result<()> {
    write_pfm(path, &flow_field_to_pfm(flow))
}

pub fn read_flow_field(path: &Path) -> Result<FlowField> {
    pfm_to_flow_field(&read_pfm(path)?)
}
