//! Robust road-plane estimation from a camera-frame point cloud.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PlaneParams;

/// Minimal samples spanning less area than this (m^2) are redrawn.
pub const MIN_SAMPLE_AREA: f64 = 1e-9;
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Optional per-point road label.
    pub labels: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points, labels: None }
    }

    pub fn with_labels(points: Vec<Vector3<f64>>, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::SizeMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        Ok(Self { points, labels: Some(labels) })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Point-to-plane distance (meters) below which a point is an inlier.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 500, inlier_threshold: 0.03, min_inliers: 3, seed: 0 }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidParameter("ransac inlier threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub plane: PlaneParams,
    /// Consensus set of the winning hypothesis.
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// RMS point-to-plane distance of the inliers to the refined plane.
    pub rms: f64,
}

/// Unnormalized hypothesis: unit normal `n` and offset `d` with `n . P = d`.
#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    normal: Vector3<f64>,
    offset: f64,
}

impl Hypothesis {
    fn distance(&self, p: &Vector3<f64>) -> f64 {
        (self.normal.dot(p) - self.offset).abs()
    }
}

#[derive(Debug, Clone, Copy)]
struct Score {
    iteration: usize,
    count: usize,
    rms: f64,
    hypothesis: Hypothesis,
}

fn plane_through(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Option<Hypothesis> {
    let cross = (b - a).cross(&(c - a));
    let area = 0.5 * cross.norm();
    if !(area >= MIN_SAMPLE_AREA) {
        return None;
    }
    let normal = cross.normalize();
    Some(Hypothesis { normal, offset: normal.dot(a) })
}

fn draw_hypothesis(points: &[Vector3<f64>], seed: u64, iteration: usize) -> Option<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ iteration as u64);
    let n = points.len();
    for _ in 0..MAX_REDRAWS {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.gen_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        if let Some(h) = plane_through(&points[i], &points[j], &points[k]) {
            return Some(h);
        }
    }
    None
}

fn score(points: &[Vector3<f64>], h: &Hypothesis, threshold: f64) -> (usize, f64) {
    let mut count = 0usize;
    let mut sq = 0.0;
    for p in points {
        let d = h.distance(p);
        if d < threshold {
            count += 1;
            sq += d * d;
        }
    }
    let rms = if count > 0 { (sq / count as f64).sqrt() } else { f64::INFINITY };
    (count, rms)
}

/// `a` beats `b`: more inliers, then lower RMS, then earlier iteration.
fn better(a: &Score, b: &Score) -> bool {
    if a.count != b.count {
        return a.count > b.count;
    }
    if a.rms != b.rms {
        return a.rms < b.rms;
    }
    a.iteration < b.iteration
}

/// RANSAC over minimal 3-point samples followed by least-squares refinement.
///
/// Iteration `i` draws from a generator seeded with `seed ^ i`, so results do
/// not depend on how iterations are scheduled.
pub fn ransac_plane(cloud: &PointCloud, cfg: &RansacConfig) -> Result<PlaneFit> {
    cfg.validate()?;
    let points = &cloud.points;
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::DegenerateInput("point cloud has non-finite coordinates".into()));
    }

    let scores: Vec<Option<Score>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|iteration| {
            let hypothesis = draw_hypothesis(points, cfg.seed, iteration)?;
            let (count, rms) = score(points, &hypothesis, cfg.inlier_threshold);
            Some(Score { iteration, count, rms, hypothesis })
        })
        .collect();

    let mut best: Option<Score> = None;
    for s in scores.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| better(&s, b)) {
            best = Some(s);
        }
    }
    let best = best.ok_or_else(|| Error::DegenerateInput("every minimal sample was collinear".into()))?;
    if best.count < cfg.min_inliers.max(3) {
        return Err(Error::NoConsensus { found: best.count, required: cfg.min_inliers.max(3) });
    }

    let inliers: Vec<bool> = points.iter().map(|p| best.hypothesis.distance(p) < cfg.inlier_threshold).collect();
    let plane = refine_plane(cloud, &inliers)?;
    let rms = rms_distance(points, &inliers, &plane);
    Ok(PlaneFit { plane, inlier_count: best.count, inliers, rms })
}

/// Total least-squares plane through the masked points: the normal is the
/// eigenvector of the smallest eigenvalue of the centered covariance.
pub fn refine_plane(cloud: &PointCloud, inliers: &[bool]) -> Result<PlaneParams> {
    if inliers.len() != cloud.points.len() {
        return Err(Error::SizeMismatch(format!(
            "{} mask entries for {} points",
            inliers.len(),
            cloud.points.len()
        )));
    }
    let selected: Vec<&Vector3<f64>> =
        cloud.points.iter().zip(inliers).filter(|(_, m)| **m).map(|(p, _)| p).collect();
    if selected.len() < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 inliers, got {}", selected.len())));
    }
    let n = selected.len() as f64;
    let centroid = selected.iter().fold(Vector3::zeros(), |acc, p| acc + *p) / n;
    let mut cov = Matrix3::zeros();
    for p in &selected {
        let d = *p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let middle = eig.eigenvalues[order[1]];
    let scale = eig.eigenvalues[order[2]].abs();
    // need rank >= 2 (not all identical, not collinear)
    if !(scale > 0.0) || middle <= 1e-12 * scale {
        return Err(Error::DegenerateInput("inliers are identical or collinear".into()));
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    for _ in 0..2 {
        normal = polish_normal(&selected, &centroid, normal);
    }
    let mut offset = normal.dot(&centroid);
    if offset < 0.0 {
        normal = -normal;
        offset = -offset;
    }
    PlaneParams::new(normal, offset)
}

/// One Gauss-Newton step on the total least-squares normal: regress the
/// out-of-plane offsets on the in-plane coordinates and tilt by the slope.
/// The iterative eigensolver leaves ~1e-10 of error when the in-plane
/// spread is isotropic; this brings an exact plane back to rounding level.
fn polish_normal(points: &[&Vector3<f64>], centroid: &Vector3<f64>, normal: Vector3<f64>) -> Vector3<f64> {
    let helper = if normal.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
    let a = normal.cross(&helper).normalize();
    let b = normal.cross(&a);
    let mut gram = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for p in points {
        let d = *p - centroid;
        let q = Vector2::new(d.dot(&a), d.dot(&b));
        gram += q * q.transpose();
        rhs += q * d.dot(&normal);
    }
    match gram.try_inverse() {
        Some(inv) => {
            let slope = inv * rhs;
            (normal - a * slope.x - b * slope.y).normalize()
        }
        None => normal,
    }
}

/// RMS point-to-plane distance over masked points.
pub fn rms_distance(points: &[Vector3<f64>], mask: &[bool], plane: &PlaneParams) -> f64 {
    let (sum, count) = points
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(p, _)| plane.normal.dot(p) - plane.camera_height)
        .fold((0.0, 0usize), |(s, c), d| (s + d * d, c + 1));
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    }
}
