//! Raster sampling and backward warping.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{apply_homography, Homography};
use crate::grid::{check_dims, FlowField, Mask};

/// Row-major float raster with 1 or 3 interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_data(width, height, channels, vec![0.0; width * height * channels])
    }

    /// Validates the layout; values are clamped into `[0, 1]`.
    pub fn from_data(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::SizeMismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("image has non-finite samples".into()));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { width, height, channels, data })
    }

    /// Builds an image from a per-pixel function writing `channels` values.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, &mut [f64]) + Sync,
    {
        let mut data = vec![0.0; width * height * channels];
        data.par_chunks_mut(width * channels).enumerate().for_each(|(y, row)| {
            for (x, px) in row.chunks_mut(channels).enumerate() {
                f(x, y, px);
            }
        });
        Self::from_data(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Channel mean at `(x, y)`.
    pub fn gray(&self, x: usize, y: usize) -> f64 {
        let px = self.pixel(x, y);
        px.iter().sum::<f64>() / px.len() as f64
    }

    pub fn to_gray(&self) -> Image {
        let data = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.gray(x, y))
            .collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn check_congruent(&self, other: &Image) -> Result<()> {
        check_dims(self.width, self.height, other.width, other.height)?;
        if self.channels != other.channels {
            return Err(Error::GridMismatch(format!("{} vs {} channels", self.channels, other.channels)));
        }
        Ok(())
    }

    /// Bilinear interpolation into `out`. Returns `false` (leaving `out`
    /// untouched) when a neighbor with nonzero weight lies outside the image;
    /// this makes every point of `[0, w-1] x [0, h-1]` sampleable.
    pub fn sample_into(&self, p: Vector2<f64>, out: &mut [f64]) -> bool {
        self.sample_masked_into(p, None, out)
    }

    fn sample_masked_into(&self, p: Vector2<f64>, mask: Option<&Mask>, out: &mut [f64]) -> bool {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return false;
        }
        let (x0, y0) = (p.x.floor(), p.y.floor());
        let (fx, fy) = (p.x - x0, p.y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return false;
        }
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        if let Some(m) = mask {
            if taps.iter().any(|&(x, y, w)| w > 0.0 && !m.get(x, y)) {
                return false;
            }
        }
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let mut acc = 0.0;
            for &(x, y, w) in &taps {
                if w > 0.0 {
                    acc += w * self.data[(y * self.width + x) * self.channels + c];
                }
            }
            *o = acc.clamp(0.0, 1.0);
        }
        true
    }
}

/// Bilinear sample at `p`; `None` when the 4-neighborhood leaves the image.
pub fn bilinear_sample(image: &Image, p: Vector2<f64>) -> Option<Vec<f64>> {
    let mut out = vec![0.0; image.channels()];
    image.sample_into(p, &mut out).then_some(out)
}

fn resample<F>(src: &Image, src_mask: Option<&Mask>, width: usize, height: usize, preimage: F) -> (Image, Mask)
where
    F: Fn(usize, usize) -> Option<Vector2<f64>> + Sync,
{
    let c = src.channels();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut data = vec![0.0; width * c];
            let mut valid = vec![false; width];
            for x in 0..width {
                if let Some(q) = preimage(x, y) {
                    valid[x] = src.sample_masked_into(q, src_mask, &mut data[x * c..(x + 1) * c]);
                }
            }
            (data, valid)
        })
        .collect();
    let mut data = Vec::with_capacity(width * height * c);
    let mut bits = Vec::with_capacity(width * height);
    for (d, v) in rows {
        data.extend(d);
        bits.extend(v);
    }
    let image = Image { width, height, channels: c, data };
    (image, Mask::from_vec(width, height, bits).expect("row sizes are fixed"))
}

/// `I_s^w[p] = I_s(H^-1 p)` on the target grid (same size as the source).
pub fn warp_by_homography(source: &Image, h_source_to_target: &Homography) -> Result<(Image, Mask)> {
    let inv = h_source_to_target.inverse()?;
    Ok(resample(source, None, source.width(), source.height(), |x, y| {
        apply_homography(&inv, Vector2::new(x as f64, y as f64)).ok()
    }))
}

/// `I_t'[p] = I_s^w(p - u_res[p])`, i.e. the warped source sampled at `p^w`.
pub fn reconstruct_target(warped: &Image, flow: &FlowField) -> Result<(Image, Mask)> {
    reconstruct_target_masked(warped, None, flow)
}

/// As [`reconstruct_target`], additionally refusing taps outside `warped_mask`.
pub fn reconstruct_target_masked(
    warped: &Image,
    warped_mask: Option<&Mask>,
    flow: &FlowField,
) -> Result<(Image, Mask)> {
    check_dims(warped.width(), warped.height(), flow.width(), flow.height())?;
    if let Some(m) = warped_mask {
        check_dims(warped.width(), warped.height(), m.width(), m.height())?;
    }
    Ok(resample(warped, warped_mask, warped.width(), warped.height(), |x, y| {
        let u = flow.get(x, y)?;
        Some(Vector2::new(x as f64, y as f64) - u)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn ramp(w: usize, h: usize, c: usize) -> Image {
        Image::from_fn(w, h, c, |x, y, px| {
            for (k, v) in px.iter_mut().enumerate() {
                *v = ((x * 7 + y * 13 + k * 5) % 23) as f64 / 22.0;
            }
        })
        .unwrap()
    }

    #[test]
    fn sample_integer_and_center() {
        let img = ramp(5, 4, 3);
        assert_eq!(bilinear_sample(&img, Vector2::new(2.0, 1.0)).unwrap(), img.pixel(2, 1));
        assert_eq!(bilinear_sample(&img, Vector2::new(4.0, 3.0)).unwrap(), img.pixel(4, 3));
        let s = bilinear_sample(&img, Vector2::new(1.5, 2.5)).unwrap();
        for (c, v) in s.iter().enumerate() {
            let mean = (img.pixel(1, 2)[c] + img.pixel(2, 2)[c] + img.pixel(1, 3)[c] + img.pixel(2, 3)[c]) / 4.0;
            assert!((v - mean).abs() < 1e-15);
        }
        assert!(bilinear_sample(&img, Vector2::new(-0.5, 0.0)).is_none());
        assert!(bilinear_sample(&img, Vector2::new(4.01, 0.0)).is_none());
        assert!(bilinear_sample(&img, Vector2::new(f64::NAN, 0.0)).is_none());
    }

    #[test]
    fn identity_warp_is_bitwise_identity() {
        let img = ramp(9, 7, 3);
        let (w, m) = warp_by_homography(&img, &Homography::identity()).unwrap();
        assert_eq!(w, img);
        assert_eq!(m.count(), 63);
    }

    #[test]
    fn integer_shift_warp() {
        let img = ramp(10, 8, 1);
        // source pixel (x, y) lands on (x + 2, y - 1)
        let h = Homography(Matrix3::new(1.0, 0.0, 2.0, 0.0, 1.0, -1.0, 0.0, 0.0, 1.0));
        let (w, m) = warp_by_homography(&img, &h).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                let inside = x >= 2 && y + 1 < 8;
                assert_eq!(m.get(x, y), inside);
                if inside {
                    assert_eq!(w.pixel(x, y), img.pixel(x - 2, y + 1));
                }
            }
        }
    }

    #[test]
    fn singular_warp_rejected() {
        let img = ramp(4, 4, 1);
        let h = Homography(Matrix3::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0));
        assert!(matches!(warp_by_homography(&img, &h), Err(Error::SingularHomography)));
    }

    #[test]
    fn warp_is_intensity_bounded() {
        let img = ramp(16, 12, 3);
        let h = Homography(Matrix3::new(1.02, 0.05, -0.7, -0.03, 0.97, 0.4, 0.001, -0.002, 1.0));
        let (w, m) = warp_by_homography(&img, &h).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = img.data().iter().skip(c).step_by(3).copied().collect();
            let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
            for y in 0..12 {
                for x in 0..16 {
                    if m.get(x, y) {
                        let v = w.pixel(x, y)[c];
                        assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn reconstruct_zero_flow_and_invalid_flow() {
        let img = ramp(6, 5, 3);
        let zero = FlowField::filled(6, 5, Vector2::zeros());
        let (r, m) = reconstruct_target(&img, &zero).unwrap();
        assert_eq!(r, img);
        assert_eq!(m.count(), 30);
        let none = FlowField::empty(6, 5);
        let (_, m) = reconstruct_target(&img, &none).unwrap();
        assert_eq!(m.count(), 0);
        assert!(matches!(reconstruct_target(&img, &FlowField::empty(5, 5)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn reconstruct_samples_at_p_minus_u() {
        let img = ramp(8, 6, 1);
        let flow = FlowField::filled(8, 6, Vector2::new(1.0, -1.0));
        let (r, m) = reconstruct_target(&img, &flow).unwrap();
        assert!(m.get(3, 2));
        assert_eq!(r.pixel(3, 2), img.pixel(2, 3));
        assert!(!m.get(0, 2));
    }

    #[test]
    fn masked_reconstruction_refuses_invalid_taps() {
        let img = ramp(6, 5, 1);
        let mut mask = Mask::new(6, 5, true);
        mask.set(2, 2, false);
        let flow = FlowField::filled(6, 5, Vector2::new(-0.5, 0.0));
        let (_, m) = reconstruct_target_masked(&img, Some(&mask), &flow).unwrap();
        assert!(!m.get(1, 2) && !m.get(2, 2));
        assert!(m.get(3, 2));
    }
}
