//! Geometry baseline: flow -> gamma by per-pixel inversion of the residual-flow
//! model, plus a block-matching flow estimator.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{epipole, CameraIntrinsics, PlaneParams, RigidMotion, EPS_SINGULAR};
use crate::grid::{check_dims, FlowField, GammaMap, Mask, ScalarMap};
use crate::imaging::Image;

/// Pixels closer than this to the epipole (px) are not solved.
pub const EPIPOLE_EXCLUSION: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub gamma: GammaMap,
    /// Magnitude of the flow component orthogonal to the epipolar line, on solved cells.
    pub orthogonal_residual: ScalarMap,
    pub degenerate_epipole: usize,
    pub singular: usize,
    pub solved: usize,
}

impl SolverReport {
    pub fn skipped(&self) -> usize {
        self.degenerate_epipole + self.singular
    }
}

/// Least-squares gamma along `d = p - e`.
///
/// With `s = (u . d) / (d . d)` the model `u = -k / (1 - k) d` gives
/// `k = s / (s - 1)` and `gamma = k h_c / T_z`.
pub fn solve_gamma_at(u: Vector2<f64>, p: Vector2<f64>, e: Vector2<f64>, t_z: f64, h_c: f64) -> Result<f64> {
    Ok(solve_with_residual(u, p, e, t_z, h_c)?.0)
}

fn solve_with_residual(u: Vector2<f64>, p: Vector2<f64>, e: Vector2<f64>, t_z: f64, h_c: f64) -> Result<(f64, f64)> {
    let d = p - e;
    let dd = d.norm_squared();
    if dd.sqrt() < EPIPOLE_EXCLUSION {
        return Err(Error::EpipoleDegeneracy(EPIPOLE_EXCLUSION));
    }
    let s = u.dot(&d) / dd;
    if (s - 1.0).abs() < EPS_SINGULAR {
        return Err(Error::SingularRatio(s));
    }
    let ratio = s / (s - 1.0);
    let orthogonal = (u - d * s).norm();
    Ok((ratio * h_c / t_z, orthogonal))
}

/// Lateral-motion case: `u = gamma / h_c (t_x, t_y)`, solved along the
/// in-image translation direction.
pub fn solve_gamma_tz0(u: Vector2<f64>, t: Vector3<f64>, h_c: f64) -> Result<f64> {
    Ok(solve_tz0_with_residual(u, t, h_c)?.0)
}

fn solve_tz0_with_residual(u: Vector2<f64>, t: Vector3<f64>, h_c: f64) -> Result<(f64, f64)> {
    let txy = Vector2::new(t.x, t.y);
    let len = txy.norm();
    if !(len > 0.0) {
        return Err(Error::ZeroTranslation);
    }
    let dir = txy / len;
    let along = u.dot(&dir);
    Ok((h_c * along / len, (u - dir * along).norm()))
}

/// Dense per-pixel inversion. Branches once on epipole definedness; cells
/// hitting a degeneracy are masked and counted.
pub fn solve_gamma_map(
    flow: &FlowField,
    motion: &RigidMotion,
    plane: &PlaneParams,
    k: &CameraIntrinsics,
) -> Result<SolverReport> {
    if flow.width() != k.width || flow.height() != k.height {
        return Err(Error::GridMismatch(format!(
            "flow is {}x{}, camera is {}x{}",
            flow.width(),
            flow.height(),
            k.width,
            k.height
        )));
    }
    let h_c = plane.camera_height;
    let e = epipole(k, motion);
    let t = k.matrix() * motion.translation;
    let t_z = motion.translation.z;

    let solutions: Vec<Option<Result<(f64, f64)>>> = (0..flow.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % flow.width(), i / flow.width());
            let u = *flow.get(x, y)?;
            let p = Vector2::new(x as f64, y as f64);
            Some(match e.point() {
                Some(e) => solve_with_residual(u, p, e, t_z, h_c),
                None => solve_tz0_with_residual(u, t, h_c),
            })
        })
        .collect();

    let (w, h) = (flow.width(), flow.height());
    let mut gamma = GammaMap::empty(w, h);
    let mut residual = ScalarMap::empty(w, h);
    let (mut degenerate_epipole, mut singular, mut solved) = (0, 0, 0);
    for (i, s) in solutions.into_iter().enumerate() {
        let (x, y) = (i % w, i / w);
        match s {
            None => {}
            Some(Ok((g, r))) => {
                gamma.set(x, y, g);
                residual.set(x, y, r);
                solved += 1;
            }
            Some(Err(Error::SingularRatio(_))) => singular += 1,
            Some(Err(_)) => degenerate_epipole += 1,
        }
    }
    Ok(SolverReport { gamma, orthogonal_residual: residual, degenerate_epipole, singular, solved })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatchConfig {
    /// Odd patch side (px).
    pub patch: usize,
    /// Search radius (px) per axis.
    pub radius: usize,
    /// Minimum spread of per-pixel SAD across candidates, as a fraction of the
    /// target intensity range.
    pub contrast: f64,
}

impl Default for BlockMatchConfig {
    fn default() -> Self {
        Self { patch: 7, radius: 8, contrast: 0.01 }
    }
}

/// Block matching with default contrast threshold. Returns `u` with
/// `target(p) ~ warped(p - u)`, the stored residual-flow convention.
pub fn block_match_flow(warped: &Image, target: &Image, patch: usize, radius: usize) -> Result<FlowField> {
    block_match_flow_with(warped, None, target, &BlockMatchConfig { patch, radius, ..Default::default() })
}

/// Integer SAD search over `[-radius, radius]^2` followed by a parabolic
/// sub-pixel fit per axis. Candidates touching invalid warped pixels are
/// skipped; low-texture cells are masked.
pub fn block_match_flow_with(
    warped: &Image,
    warped_mask: Option<&Mask>,
    target: &Image,
    cfg: &BlockMatchConfig,
) -> Result<FlowField> {
    check_dims(warped.width(), warped.height(), target.width(), target.height())?;
    let (w, h) = (target.width(), target.height());
    if cfg.patch.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("patch side must be odd, got {}", cfg.patch)));
    }
    if cfg.patch > w.min(h) {
        return Err(Error::PatchTooLarge { patch: cfg.patch, width: w, height: h });
    }
    if let Some(m) = warped_mask {
        check_dims(w, h, m.width(), m.height())?;
    }
    let src = warped.to_gray();
    let dst = target.to_gray();
    let src = src.data();
    let dst = dst.data();
    let src_ok = |x: usize, y: usize| warped_mask.is_none_or(|m| m.get(x, y));
    let half = (cfg.patch / 2) as isize;
    let r = cfg.radius as isize;
    let area = (cfg.patch * cfg.patch) as f64;
    let (lo, hi) = dst.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let min_spread = cfg.contrast * (hi - lo).max(0.0);

    // SAD between the target patch at p and the warped patch at p - d, or None
    // if any tap leaves the image or the warped mask.
    let sad = |px: isize, py: isize, dx: isize, dy: isize| -> Option<f64> {
        let mut acc = 0.0;
        for oy in -half..=half {
            for ox in -half..=half {
                let (tx, ty) = (px + ox, py + oy);
                let (sx, sy) = (tx - dx, ty - dy);
                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                    return None;
                }
                let (sx, sy) = (sx as usize, sy as usize);
                if !src_ok(sx, sy) {
                    return None;
                }
                acc += (dst[ty as usize * w + tx as usize] - src[sy * w + sx]).abs();
            }
        }
        Some(acc)
    };

    Ok(FlowField::par_from_fn(w, h, |x, y| {
        let (px, py) = (x as isize, y as isize);
        if px < half || py < half || px + half >= w as isize || py + half >= h as isize {
            return None;
        }
        let mut best: Option<(f64, isize, isize)> = None;
        let mut worst = f64::MIN;
        for dy in -r..=r {
            for dx in -r..=r {
                if let Some(s) = sad(px, py, dx, dy) {
                    worst = worst.max(s);
                    if best.is_none_or(|(b, bx, by)| s < b || (s == b && dx.abs() + dy.abs() < bx.abs() + by.abs())) {
                        best = Some((s, dx, dy));
                    }
                }
            }
        }
        let (s0, dx, dy) = best?;
        if (worst - s0) / area <= min_spread {
            return None;
        }
        let refine = |minus: Option<f64>, plus: Option<f64>| -> f64 {
            if s0 == 0.0 {
                return 0.0;
            }
            match (minus, plus) {
                (Some(m), Some(p)) => {
                    let curvature = m - 2.0 * s0 + p;
                    if curvature > 0.0 {
                        (0.5 * (m - p) / curvature).clamp(-0.5, 0.5)
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            }
        };
        let ox = refine(sad(px, py, dx - 1, dy), sad(px, py, dx + 1, dy));
        let oy = refine(sad(px, py, dx, dy - 1), sad(px, py, dx, dy + 1));
        Some(Vector2::new(dx as f64 + ox, dy as f64 + oy))
    }))
}
