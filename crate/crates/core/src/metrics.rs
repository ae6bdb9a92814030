//! Bucketed MAE for height and depth, and the usual depth-metric family.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{DepthMap, GammaMap, HeightMap, Mask, ScalarMap};

/// Cumulative upper bounds: a cell belongs to `h < t` when `|h_gt| < t` and to
/// `d < t` when `z_gt < t`, so wider buckets contain narrower ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub height: Vec<f64>,
    pub depth: Vec<f64>,
}

impl Default for BucketSpec {
    fn default() -> Self {
        Self { height: vec![0.1, 0.3, 0.5, 1.0], depth: vec![30.0, 50.0, 80.0] }
    }
}

impl BucketSpec {
    pub fn new(height: Vec<f64>, depth: Vec<f64>) -> Result<Self> {
        let spec = Self { height, depth };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("height", &self.height), ("depth", &self.depth)] {
            if t.is_empty() || t.iter().any(|v| !(v.is_finite() && *v > 0.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "{name} thresholds must be positive and strictly increasing: {t:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Cells valid in `gt` whose value satisfies `select`.
pub fn bucket_mask(gt: &ScalarMap, select: impl Fn(f64) -> bool) -> Mask {
    let mut mask = Mask::new(gt.width(), gt.height(), false);
    for (x, y, v) in gt.iter_valid() {
        if select(*v) {
            mask.set(x, y, true);
        }
    }
    mask
}

/// Mean `|pred - gt|` over jointly valid cells inside `bucket`.
pub fn mae(pred: &ScalarMap, gt: &ScalarMap, bucket: &Mask) -> Result<f64> {
    Ok(mae_count(pred, gt, bucket)?.0)
}

fn mae_count(pred: &ScalarMap, gt: &ScalarMap, bucket: &Mask) -> Result<(f64, usize)> {
    pred.check_congruent(gt)?;
    crate::grid::check_dims(pred.width(), pred.height(), bucket.width(), bucket.height())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y, g) in gt.iter_valid() {
        if !bucket.get(x, y) {
            continue;
        }
        if let Some(p) = pred.get(x, y) {
            sum += (p - g).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyBucket);
    }
    Ok((sum / n as f64, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub count: usize,
}

/// Standard depth metrics over jointly valid cells. `delta_k` counts
/// `max(p/z, z/p) < 1.25^k` with a strict inequality.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    pred.check_congruent(gt)?;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut deltas = [0usize; 3];
    let mut n = 0usize;
    for (x, y, z) in gt.iter_valid() {
        let Some(p) = pred.get(x, y) else { continue };
        let (p, z) = (*p, *z);
        if !(p > 0.0) {
            return Err(Error::NonPositiveDepth(p));
        }
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth(z));
        }
        let diff = p - z;
        abs_rel += diff.abs() / z;
        sq_rel += diff * diff / z;
        sq += diff * diff;
        sq_log += (p.ln() - z.ln()).powi(2);
        let ratio = (p / z).max(z / p);
        for (k, d) in deltas.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *d += 1;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: deltas[0] as f64 / nf,
        delta2: deltas[1] as f64 / nf,
        delta3: deltas[2] as f64 / nf,
        count: n,
    })
}

/// One cumulative bucket; `mae` is absent when no cell qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEntry {
    pub threshold: f64,
    pub mae: Option<f64>,
    pub count: usize,
}

/// Cell of the joint grid: `|h_gt| < height` and `z_gt < depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub height: f64,
    pub depth: f64,
    pub height_mae: Option<f64>,
    pub depth_mae: Option<f64>,
    pub height_count: usize,
    pub depth_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    /// Height MAE per height bucket.
    pub height: Vec<BucketEntry>,
    /// Depth MAE per depth bucket.
    pub depth: Vec<BucketEntry>,
    pub joint: Vec<JointEntry>,
    pub gamma_mae: Option<f64>,
    pub depth_metrics: Option<DepthMetrics>,
}

/// Maps entering an evaluation. `gamma` is optional because depth/height can
/// come from sources that never produced one.
#[derive(Debug, Clone)]
pub struct EvalMaps {
    pub gamma: Option<GammaMap>,
    pub depth: DepthMap,
    pub height: HeightMap,
}

fn entry(pred: &ScalarMap, gt: &ScalarMap, bucket: &Mask, threshold: f64) -> Result<BucketEntry> {
    match mae_count(pred, gt, bucket) {
        Ok((mae, count)) => Ok(BucketEntry { threshold, mae: Some(mae), count }),
        Err(Error::EmptyBucket) => Ok(BucketEntry { threshold, mae: None, count: 0 }),
        Err(e) => Err(e),
    }
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyBucket | Error::EmptyMask) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate_pair(pred: &EvalMaps, gt: &EvalMaps, buckets: &BucketSpec, label: &str) -> Result<MetricReport> {
    buckets.validate()?;
    pred.depth.check_congruent(&gt.depth)?;
    pred.height.check_congruent(&gt.height)?;
    gt.depth.check_congruent(&gt.height)?;

    let height_masks: Vec<Mask> =
        buckets.height.iter().map(|t| bucket_mask(&gt.height, |h| h.abs() < *t)).collect();
    let depth_masks: Vec<Mask> = buckets.depth.iter().map(|t| bucket_mask(&gt.depth, |z| z < *t)).collect();

    let height = buckets
        .height
        .iter()
        .zip(&height_masks)
        .map(|(t, m)| entry(&pred.height, &gt.height, m, *t))
        .collect::<Result<Vec<_>>>()?;
    let depth = buckets
        .depth
        .iter()
        .zip(&depth_masks)
        .map(|(t, m)| entry(&pred.depth, &gt.depth, m, *t))
        .collect::<Result<Vec<_>>>()?;

    let mut joint = Vec::with_capacity(height_masks.len() * depth_masks.len());
    for (th, hm) in buckets.height.iter().zip(&height_masks) {
        for (td, dm) in buckets.depth.iter().zip(&depth_masks) {
            let cell = hm.and(dm)?;
            let h = entry(&pred.height, &gt.height, &cell, *th)?;
            let d = entry(&pred.depth, &gt.depth, &cell, *td)?;
            joint.push(JointEntry {
                height: *th,
                depth: *td,
                height_mae: h.mae,
                depth_mae: d.mae,
                height_count: h.count,
                depth_count: d.count,
            });
        }
    }

    let gamma_mae = match (&pred.gamma, &gt.gamma) {
        (Some(p), Some(g)) => optional(mae(p, g, &Mask::new(g.width(), g.height(), true)))?,
        _ => None,
    };
    let depth_metrics = optional(depth_metrics(&pred.depth, &gt.depth))?;
    Ok(MetricReport { label: label.to_string(), height, depth, joint, gamma_mae, depth_metrics })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl MetricReport {
    /// `kind,bucket,metric,value,count` rows; absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,bucket,metric,value,count\n");
        for e in &self.height {
            let _ = writeln!(out, "height,h<{},mae,{},{}", e.threshold, fmt_opt(e.mae), e.count);
        }
        for e in &self.depth {
            let _ = writeln!(out, "depth,d<{},mae,{},{}", e.threshold, fmt_opt(e.mae), e.count);
        }
        for e in &self.joint {
            let bucket = format!("h<{}&d<{}", e.height, e.depth);
            let _ = writeln!(out, "joint,{bucket},height_mae,{},{}", fmt_opt(e.height_mae), e.height_count);
            let _ = writeln!(out, "joint,{bucket},depth_mae,{},{}", fmt_opt(e.depth_mae), e.depth_count);
        }
        if let Some(g) = self.gamma_mae {
            let _ = writeln!(out, "gamma,all,mae,{g},");
        }
        if let Some(m) = &self.depth_metrics {
            for (name, v) in [
                ("abs_rel", m.abs_rel),
                ("sq_rel", m.sq_rel),
                ("rmse", m.rmse),
                ("rmse_log", m.rmse_log),
                ("delta<1.25", m.delta1),
                ("delta<1.25^2", m.delta2),
                ("delta<1.25^3", m.delta3),
            ] {
                let _ = writeln!(out, "depth,all,{name},{v},{}", m.count);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
