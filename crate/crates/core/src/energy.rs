//! Photometric, sparse-gamma and smoothness energies and their weighted total.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_dims, FlowField, GammaMap, Mask, ScalarMap};
use crate::imaging::Image;

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_sm: f64,
    /// SSIM share of the photometric term.
    pub alpha: f64,
    /// Edge-awareness of the smoothness term.
    pub beta: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self { lambda_s: 1.0, lambda_p: 1.0, lambda_sm: 0.1, alpha: 0.85, beta: 1.0 }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_s, self.lambda_p, self.lambda_sm, self.alpha, self.beta];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("energy weights must be finite and nonnegative: {self:?}")));
        }
        if self.alpha > 1.0 {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub sparse: f64,
    pub photometric: f64,
    pub smoothness: f64,
}

/// Per-pixel SSIM over a 3x3 box window (truncated at the border), averaged
/// over channels.
pub fn ssim_map(a: &Image, b: &Image) -> Result<ScalarMap> {
    ssim_map_masked(a, b, None)
}

/// As [`ssim_map`], with windows restricted to `mask` cells. Pixels outside the
/// mask are invalid in the output.
pub fn ssim_map_masked(a: &Image, b: &Image, mask: Option<&Mask>) -> Result<ScalarMap> {
    a.check_congruent(b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if let Some(m) = mask {
        check_dims(w, h, m.width(), m.height())?;
    }
    let inside = |x: usize, y: usize| mask.is_none_or(|m| m.get(x, y));
    Ok(ScalarMap::par_from_fn(w, h, |x, y| {
        if !inside(x, y) {
            return None;
        }
        let mut total = 0.0;
        for c in 0..ch {
            let mut window = [(0.0, 0.0); 9];
            let mut len = 0;
            for yy in y.saturating_sub(1)..(y + 2).min(h) {
                for xx in x.saturating_sub(1)..(x + 2).min(w) {
                    if inside(xx, yy) {
                        window[len] = (a.pixel(xx, yy)[c], b.pixel(xx, yy)[c]);
                        len += 1;
                    }
                }
            }
            let window = &window[..len];
            let n = len as f64;
            let ma = window.iter().map(|v| v.0).sum::<f64>() / n;
            let mb = window.iter().map(|v| v.1).sum::<f64>() / n;
            let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
            for (va, vb) in window {
                let (da, db) = (va - ma, vb - mb);
                var_a += da * da;
                var_b += db * db;
                cov += da * db;
            }
            let (var_a, var_b, cov) = (var_a / n, var_b / n, cov / n);
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2));
        }
        Some(total / ch as f64)
    }))
}

/// Mean over `mask` of `alpha (1 - SSIM) / 2 + (1 - alpha) |a - b|`, with the L1
/// term averaged over channels. SSIM windows are restricted to the mask.
pub fn photometric_energy(a: &Image, b: &Image, mask: &Mask, alpha: f64) -> Result<f64> {
    a.check_congruent(b)?;
    check_dims(a.width(), a.height(), mask.width(), mask.height())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let ssim = if alpha > 0.0 { Some(ssim_map_masked(a, b, Some(mask))?) } else { None };
    let ch = a.channels() as f64;
    let rows: Vec<f64> = (0..a.height())
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            for x in 0..a.width() {
                if !mask.get(x, y) {
                    continue;
                }
                let l1 = a.pixel(x, y).iter().zip(b.pixel(x, y)).map(|(p, q)| (p - q).abs()).sum::<f64>() / ch;
                let structural = ssim.as_ref().map_or(0.0, |s| alpha * (1.0 - s.value(x, y)) / 2.0);
                acc += structural + (1.0 - alpha) * l1;
            }
            acc
        })
        .collect();
    Ok(rows.iter().sum::<f64>() / count as f64)
}

/// Sum of `|gamma - gamma*|` over jointly valid cells.
pub fn sparse_gamma_energy(gamma: &GammaMap, reference: &GammaMap) -> Result<f64> {
    gamma.check_congruent(reference)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y, g) in gamma.iter_valid() {
        if let Some(r) = reference.get(x, y) {
            sum += (g - r).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum)
}

/// Edge-aware second-order smoothness of a flow field.
///
/// For each direction, `|u(p - d) - 2 u(p) + u(p + d)|^2 exp(-beta |I(p + d) - I(p - d)| / 2)`
/// with `I` the channel-mean intensity. Only pixels at least one cell away from
/// every border contribute, and all three flow cells must be valid.
pub fn smoothness_energy(flow: &FlowField, image: &Image, beta: f64) -> Result<f64> {
    check_dims(flow.width(), flow.height(), image.width(), image.height())?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!("beta must be finite and nonnegative, got {beta}")));
    }
    let (w, h) = (flow.width(), flow.height());
    if w < 3 || h < 3 {
        return Ok(0.0);
    }
    let gray = image.to_gray();
    let intensity = |x: usize, y: usize| gray.pixel(x, y)[0];
    let rows: Vec<f64> = (1..h - 1)
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            for x in 1..w - 1 {
                let Some(center) = flow.get(x, y) else { continue };
                let stencils = [((x - 1, y), (x + 1, y)), ((x, y - 1), (x, y + 1))];
                for ((x0, y0), (x1, y1)) in stencils {
                    if let (Some(prev), Some(next)) = (flow.get(x0, y0), flow.get(x1, y1)) {
                        let second = prev - center * 2.0 + next;
                        let gradient = (intensity(x1, y1) - intensity(x0, y0)) / 2.0;
                        acc += second.norm_squared() * (-beta * gradient.abs()).exp();
                    }
                }
            }
            acc
        })
        .collect();
    Ok(rows.iter().sum())
}

pub fn total_energy(parts: &EnergyParts, weights: &EnergyWeights) -> f64 {
    weights.lambda_s * parts.sparse + weights.lambda_p * parts.photometric + weights.lambda_sm * parts.smoothness
}
