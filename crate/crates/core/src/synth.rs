//! Plane-plus-boxes scene renderer with exact ground truth.
//!
//! The world frame is the source camera frame. Every ray-surface
//! intersection is closed form, so depth, height, gamma, correspondence and
//! residual flow are exact up to floating point. Textures are smooth
//! functions of the surface point, so both views see the same intensity for
//! the same 3D point.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    apply_homography, homography_from_motion, project, CameraIntrinsics, Homography, PlaneParams, RigidMotion,
};
use crate::grid::{DepthMap, FlowField, GammaMap, HeightMap, Mask};
use crate::imaging::Image;
use crate::plane_fit::PointCloud;

/// Relative depth agreement required for a point to count as visible in the source view.
const VISIBILITY_TOLERANCE: f64 = 1e-6;

/// Axis-aligned box in the source camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub texture: u32,
}

impl BoxSpec {
    pub fn min_corner(&self) -> Vector3<f64> {
        self.center - self.size / 2.0
    }

    pub fn max_corner(&self) -> Vector3<f64> {
        self.center + self.size / 2.0
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vector3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            );
        }
        out
    }

    /// A box resting on `plane` at lateral offset `x` and forward distance
    /// `z` (box center), lowered until its lowest corner touches the plane.
    pub fn on_plane(plane: &PlaneParams, x: f64, z: f64, size: Vector3<f64>, texture: u32) -> Self {
        let n = plane.normal;
        // y (down) of the bottom face such that every bottom corner has h >= 0
        let bottom = [-1.0, 1.0]
            .iter()
            .flat_map(|sx| [-1.0, 1.0].map(|sz| (x + sx * size.x / 2.0, z + sz * size.z / 2.0)))
            .map(|(cx, cz)| (plane.camera_height - n.x * cx - n.z * cz) / n.y)
            .fold(f64::INFINITY, f64::min);
        Self { center: Vector3::new(x, bottom - size.y / 2.0, z), size, texture }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        (0..3).all(|i| p[i] > lo[i] && p[i] < hi[i])
    }

    /// Nearest entry of the ray `o + lambda d` with `lambda > 0`, plus the face axis.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
        let (lo, hi) = (self.min_corner(), self.max_corner());
        let mut enter = f64::NEG_INFINITY;
        let mut exit = f64::INFINITY;
        let mut axis = 0;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < lo[i] || o[i] > hi[i] {
                    return None;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            if t0 > enter {
                enter = t0;
                axis = i;
            }
            exit = exit.min(t1);
        }
        (enter <= exit && enter > 0.0).then_some((enter, axis))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub camera: CameraIntrinsics,
    /// Source to target.
    pub motion: RigidMotion,
    /// Road plane in the source frame.
    pub plane: PlaneParams,
    pub plane_texture: u32,
    pub boxes: Vec<BoxSpec>,
    pub seed: u64,
    /// Hits farther than this (camera depth, meters) count as sky.
    pub max_depth: f64,
    /// Free-form scene tag carried into datasets and reports.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surface {
    Plane,
    Box(usize),
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    depth: f64,
    point: Vector3<f64>,
    surface: Surface,
    /// Face axis for box hits.
    axis: usize,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: Image,
    pub depth: DepthMap,
    /// Surface seen by each pixel, `None` for sky.
    pub hits: Vec<Option<Surface>>,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub gamma: GammaMap,
    pub depth: DepthMap,
    pub height: HeightMap,
    /// `p_s - p_t` for every target pixel visible in the source view.
    pub flow_opt: FlowField,
    /// `p_t - H(p_s)`, the stored residual-flow convention.
    pub flow_res: FlowField,
    pub homography: Homography,
    /// Source-frame points sampled from the source view, labelled on road hits.
    pub points: PointCloud,
    /// Target pixels that see the road and are visible in the source view.
    pub road: Mask,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.motion.validate()?;
        self.plane.validate()?;
        if !(self.max_depth > 0.0) {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        let target_center = self.motion.target_center_in_source();
        for (i, b) in self.boxes.iter().enumerate() {
            if !b.size.iter().all(|s| *s > 0.0 && s.is_finite()) || !b.center.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter(format!("box {i} has invalid size or center")));
            }
            if b.corners().iter().any(|c| self.plane.height_of(c) < -1e-9) {
                return Err(Error::InvalidParameter(format!("box {i} extends below the road plane")));
            }
            if b.contains(&Vector3::zeros()) || b.contains(&target_center) {
                return Err(Error::InvalidParameter(format!("box {i} contains a camera center")));
            }
        }
        Ok(())
    }

    pub fn homography(&self) -> Result<Homography> {
        homography_from_motion(&self.camera, &self.motion, &self.plane)
    }

    /// Desk-scale default: 320x192, forward motion with slight yaw, boxes
    /// spread over 10-75 m and kept away from the image center.
    pub fn standard(seed: u64) -> Self {
        Self::standard_sized(320, 192, seed)
    }

    pub fn standard_sized(width: usize, height: usize, seed: u64) -> Self {
        let focal = 0.75 * width as f64;
        let camera = CameraIntrinsics::centered(focal, width, height).expect("positive size");
        let plane = PlaneParams::road(1.5, 0.02).expect("valid road");
        let motion = RigidMotion::from_camera_pose(Vector3::new(0.0, 0.004, 0.0), Vector3::new(0.03, 0.0, 1.2));
        let boxes = vec![
            BoxSpec::on_plane(&plane, -3.6, 11.0, Vector3::new(1.8, 1.5, 4.0), 1),
            BoxSpec::on_plane(&plane, 3.4, 17.0, Vector3::new(2.0, 2.2, 3.0), 2),
            BoxSpec::on_plane(&plane, -5.5, 28.0, Vector3::new(2.5, 3.0, 5.0), 3),
            BoxSpec::on_plane(&plane, 6.5, 42.0, Vector3::new(3.0, 4.0, 6.0), 4),
            BoxSpec::on_plane(&plane, -8.0, 60.0, Vector3::new(4.0, 5.0, 6.0), 5),
            BoxSpec::on_plane(&plane, 9.0, 75.0, Vector3::new(4.0, 6.0, 5.0), 6),
        ];
        Self {
            camera,
            motion,
            plane,
            plane_texture: 0,
            boxes,
            seed,
            max_depth: 200.0,
            label: "standard".into(),
        }
    }

    /// Randomized plane, mounting, motion and box layout at 320x192.
    pub fn random(seed: u64) -> Self {
        Self::random_sized(320, 192, seed)
    }

    pub fn random_sized(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let focal = rng.gen_range(0.6..1.1) * width as f64;
        let cx = width as f64 * (0.5 + rng.gen_range(-0.03..0.03));
        let cy = height as f64 * (0.5 + rng.gen_range(-0.04..0.04));
        let camera = CameraIntrinsics::new(focal, focal * rng.gen_range(0.97..1.03), cx, cy, width, height)
            .expect("valid random camera");
        let normal = crate::geometry::tilted_normal(Vector3::new(
            rng.gen_range(-0.05..0.05),
            0.0,
            rng.gen_range(-0.03..0.03),
        ));
        let plane = PlaneParams::new(normal, rng.gen_range(1.2..2.2)).expect("valid random plane");
        let rotation = Vector3::new(rng.gen_range(-0.01..0.01), rng.gen_range(-0.02..0.02), rng.gen_range(-0.01..0.01));
        let center = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.05..0.05), rng.gen_range(0.5..2.0));
        let motion = RigidMotion::from_camera_pose(rotation, center);
        let n_boxes = rng.gen_range(2..=6);
        let boxes = (0..n_boxes)
            .map(|i| {
                let z = rng.gen_range(8.0..70.0);
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let x = side * rng.gen_range(2.5..(3.0 + z * 0.12));
                let size = Vector3::new(rng.gen_range(1.0..3.0), rng.gen_range(0.5..4.0), rng.gen_range(1.0..5.0));
                BoxSpec::on_plane(&plane, x, z, size, i as u32 + 1)
            })
            .collect();
        Self {
            camera,
            motion,
            plane,
            plane_texture: rng.gen_range(0..4),
            boxes,
            seed,
            max_depth: 200.0,
            label: format!("random-{seed}"),
        }
    }

    /// Camera origin and camera-to-world rotation for a view.
    fn pose(&self, view: View) -> (Vector3<f64>, Matrix3<f64>) {
        match view {
            View::Source => (Vector3::zeros(), Matrix3::identity()),
            View::Target => (self.motion.target_center_in_source(), self.motion.rotation.transpose()),
        }
    }

    /// Casts the ray of pixel position `p`; `depth` of the hit is its camera-frame z.
    fn cast(&self, view: View, p: Vector2<f64>) -> Option<Hit> {
        let (origin, cam_to_world) = self.pose(view);
        let dir = cam_to_world * self.camera.ray(p);
        let mut best: Option<Hit> = None;
        let denom = self.plane.normal.dot(&dir);
        if denom != 0.0 {
            let lambda = (self.plane.camera_height - self.plane.normal.dot(&origin)) / denom;
            if lambda > 0.0 {
                best = Some(Hit { depth: lambda, point: origin + dir * lambda, surface: Surface::Plane, axis: 1 });
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if let Some((lambda, axis)) = b.intersect(&origin, &dir) {
                if best.is_none_or(|h| lambda < h.depth) {
                    best = Some(Hit { depth: lambda, point: origin + dir * lambda, surface: Surface::Box(i), axis });
                }
            }
        }
        best.filter(|h| h.depth <= self.max_depth)
    }

    fn shade(&self, hit: &Hit, out: &mut [f64]) {
        let (a, b, texture) = match hit.surface {
            Surface::Plane => {
                let (u, v) = plane_basis(&self.plane.normal);
                (hit.point.dot(&u), hit.point.dot(&v), self.plane_texture)
            }
            Surface::Box(i) => {
                let (j, k) = match hit.axis {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                (hit.point[j], hit.point[k], self.boxes[i].texture)
            }
        };
        let normal = match hit.surface {
            Surface::Plane => self.plane.normal,
            Surface::Box(_) => Vector3::ith(hit.axis, 1.0),
        };
        // Pixel footprint on the surface as seen from the source camera. Tying it
        // to the source keeps the shading identical in both views.
        let range = hit.point.norm();
        let incidence = (normal.dot(&hit.point) / range).abs().max(1e-3);
        let footprint = range / (self.camera.fx.min(self.camera.fy) * incidence);
        texture_color(a, b, texture, self.seed, footprint, out);
    }

    pub fn render(&self, view: View) -> Result<RenderedFrame> {
        self.validate()?;
        let (w, h) = (self.camera.width, self.camera.height);
        let hits: Vec<Option<Hit>> = (0..w * h)
            .into_par_iter()
            .map(|i| self.cast(view, Vector2::new((i % w) as f64, (i / w) as f64)))
            .collect();
        let image = Image::from_fn(w, h, 3, |x, y, px| match &hits[y * w + x] {
            Some(hit) => self.shade(hit, px),
            None => px.copy_from_slice(&SKY),
        })?;
        let depth = DepthMap::par_from_fn(w, h, |x, y| hits[y * w + x].map(|hit| hit.depth));
        Ok(RenderedFrame { image, depth, hits: hits.iter().map(|h| h.map(|h| h.surface)).collect() })
    }

    /// Exact target-grid ground truth; see [`GroundTruth`].
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        self.ground_truth_with_stride(4)
    }

    /// As [`ground_truth`](Self::ground_truth), sampling the point cloud every `stride` source pixels.
    pub fn ground_truth_with_stride(&self, stride: usize) -> Result<GroundTruth> {
        self.validate()?;
        let homography = self.homography()?;
        let (w, h) = (self.camera.width, self.camera.height);

        struct Cell {
            depth: f64,
            height: f64,
            flow: Option<(Vector2<f64>, Vector2<f64>)>,
            road: bool,
        }

        let cells: Vec<Option<Cell>> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let p_t = Vector2::new((i % w) as f64, (i / w) as f64);
                let hit = self.cast(View::Target, p_t)?;
                let height = self.plane.height_of(&hit.point);
                let flow = self.source_match(&hit).and_then(|p_s| {
                    let p_w = apply_homography(&homography, p_s).ok()?;
                    Some((p_s - p_t, p_t - p_w))
                });
                let road = flow.is_some() && hit.surface == Surface::Plane;
                Some(Cell { depth: hit.depth, height, flow, road })
            })
            .collect();

        let cell = |x: usize, y: usize| cells[y * w + x].as_ref();
        let depth = DepthMap::par_from_fn(w, h, |x, y| cell(x, y).map(|c| c.depth));
        let height = HeightMap::par_from_fn(w, h, |x, y| cell(x, y).map(|c| c.height));
        let gamma = GammaMap::par_from_fn(w, h, |x, y| cell(x, y).map(|c| c.height / c.depth));
        let flow_opt = FlowField::par_from_fn(w, h, |x, y| cell(x, y).and_then(|c| c.flow.map(|f| f.0)));
        let flow_res = FlowField::par_from_fn(w, h, |x, y| cell(x, y).and_then(|c| c.flow.map(|f| f.1)));
        let road = Mask::from_vec(w, h, cells.iter().map(|c| c.as_ref().is_some_and(|c| c.road)).collect())?;
        let points = self.sample_points(stride.max(1));
        Ok(GroundTruth { gamma, depth, height, flow_opt, flow_res, homography, points, road })
    }

    /// Source pixel of a target hit if the point is unoccluded and inside the source image.
    fn source_match(&self, hit: &Hit) -> Option<Vector2<f64>> {
        let p_s = project(&self.camera, &hit.point).ok()?;
        if !self.camera.contains(p_s) {
            return None;
        }
        let seen = self.cast(View::Source, p_s)?;
        let z = hit.point.z;
        ((seen.depth - z).abs() <= VISIBILITY_TOLERANCE * z.max(1.0)).then_some(p_s)
    }

    fn sample_points(&self, stride: usize) -> PointCloud {
        let (w, h) = (self.camera.width, self.camera.height);
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for y in (0..h).step_by(stride) {
            for x in (0..w).step_by(stride) {
                if let Some(hit) = self.cast(View::Source, Vector2::new(x as f64, y as f64)) {
                    points.push(hit.point);
                    labels.push(hit.surface == Surface::Plane);
                }
            }
        }
        PointCloud { points, labels: Some(labels) }
    }
}

const SKY: [f64; 3] = [0.55, 0.7, 0.9];

fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let u = (Vector3::x() - n * n.x).normalize();
    (u, n.cross(&u))
}

fn hash(mut v: u64) -> u64 {
    // splitmix64 finalizer
    v = v.wrapping_add(0x9E37_79B9_7F4A_7C15);
    v = (v ^ (v >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    v = (v ^ (v >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    v ^ (v >> 31)
}

fn lattice(ix: i64, iy: i64, salt: u64) -> f64 {
    let h = hash(hash(ix as u64 ^ salt.rotate_left(17)) ^ (iy as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// C2-continuous value noise in [0, 1].
fn value_noise(a: f64, b: f64, salt: u64) -> f64 {
    let (ia, ib) = (a.floor(), b.floor());
    let (fa, fb) = (a - ia, b - ib);
    let (ia, ib) = (ia as i64, ib as i64);
    let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
    let (sa, sb) = (fade(fa), fade(fb));
    let n00 = lattice(ia, ib, salt);
    let n10 = lattice(ia + 1, ib, salt);
    let n01 = lattice(ia, ib + 1, salt);
    let n11 = lattice(ia + 1, ib + 1, salt);
    let top = n00 + (n10 - n00) * sa;
    let bottom = n01 + (n11 - n01) * sa;
    top + (bottom - top) * sb
}

const PALETTE: [[f64; 3]; 7] = [
    [0.50, 0.50, 0.52],
    [0.75, 0.30, 0.25],
    [0.25, 0.45, 0.75],
    [0.35, 0.65, 0.35],
    [0.70, 0.65, 0.30],
    [0.55, 0.35, 0.65],
    [0.40, 0.60, 0.65],
];

/// Attenuation of a pattern with spatial period `period` (m) when one pixel
/// covers `footprint` (m); periods under a few pixels are suppressed so bilinear
/// resampling stays accurate.
fn band_limit(period: f64, footprint: f64) -> f64 {
    (-(ANTIALIAS * footprint / period).powi(2)).exp()
}

const ANTIALIAS: f64 = 6.0;

/// Smooth checker (its fundamental) plus two octaves of value noise, each
/// attenuated by its projected frequency.
fn texture_color(a: f64, b: f64, texture: u32, seed: u64, footprint: f64, out: &mut [f64]) {
    let cell = [1.0, 0.5, 0.6, 0.45][texture as usize % 4];
    let salt = hash(seed ^ (texture as u64).wrapping_mul(0x1000_0000_01B3));
    let checker = (std::f64::consts::PI * a / cell).sin() * (std::f64::consts::PI * b / cell).sin();
    let fine = value_noise(a / (0.35 * cell), b / (0.35 * cell), salt) - 0.5;
    let coarse = value_noise(a / (1.7 * cell), b / (1.7 * cell), salt ^ 0xA5A5) - 0.5;
    let detail = 0.18 * band_limit(2.0 * cell, footprint) * checker
        + 0.35 * band_limit(0.35 * cell, footprint) * fine
        + 0.3 * band_limit(1.7 * cell, footprint) * coarse;
    let base = PALETTE[texture as usize % PALETTE.len()];
    for (c, o) in out.iter_mut().enumerate() {
        *o = (base[c] + detail * (0.8 + 0.1 * c as f64)).clamp(0.02, 0.98);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::depth_from_gamma;

    fn plane_only(seed: u64) -> SceneSpec {
        SceneSpec { boxes: vec![], ..SceneSpec::standard_sized(96, 64, seed) }
    }

    #[test]
    fn plane_only_depth_matches_closed_form() {
        let scene = plane_only(0);
        let frame = scene.render(View::Source).unwrap();
        let zero = GammaMap::filled(96, 64, 0.0);
        let expected = depth_from_gamma(&zero, &scene.plane, &scene.camera).unwrap();
        let mut checked = 0;
        for (x, y, z) in frame.depth.iter_valid() {
            let e = expected.get(x, y).expect("closed form valid where rendered");
            assert!((z - e).abs() < 1e-9 * e.max(1.0), "{z} vs {e}");
            checked += 1;
        }
        assert!(checked > 1000);
        // sky above the horizon
        assert!(frame.hits[0].is_none());
        assert!(!frame.depth.is_valid(0, 0));
    }

    #[test]
    fn boxes_occlude_the_plane() {
        let scene = SceneSpec::standard_sized(160, 96, 0);
        let frame = scene.render(View::Source).unwrap();
        let covered: Vec<_> = frame.hits.iter().enumerate().filter(|(_, h)| matches!(h, Some(Surface::Box(_)))).collect();
        assert!(!covered.is_empty());
        for (i, _) in covered {
            let (x, y) = (i % 160, i / 160);
            let ray = scene.camera.ray(Vector2::new(x as f64, y as f64));
            let denom = scene.plane.normal.dot(&ray);
            if denom > 0.0 {
                let plane_depth = scene.plane.camera_height / denom;
                assert!(*frame.depth.get(x, y).unwrap() < plane_depth);
            }
        }
    }

    #[test]
    fn plane_only_ground_truth_is_flat() {
        let gt = plane_only(3).ground_truth().unwrap();
        assert!(gt.gamma.valid_count() > 0);
        for (_, _, g) in gt.gamma.iter_valid() {
            assert!(g.abs() < 1e-12);
        }
        for (_, _, u) in gt.flow_res.iter_valid() {
            assert!(u.norm() < 1e-9);
        }
        let labels = gt.points.labels.as_ref().unwrap();
        assert!(labels.iter().all(|l| *l));
    }

    #[test]
    fn render_is_deterministic() {
        let scene = SceneSpec::random(11);
        let a = scene.render(View::Target).unwrap();
        let b = scene.render(View::Target).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.hits, b.hits);
    }

    #[test]
    fn invalid_scenes_rejected() {
        let mut scene = SceneSpec::standard_sized(64, 48, 0);
        scene.boxes.push(BoxSpec { center: Vector3::new(0.0, 1.5, 10.0), size: Vector3::new(1.0, 1.0, 1.0), texture: 0 });
        assert!(scene.validate().is_err(), "box below the plane");
        let mut scene = SceneSpec::standard_sized(64, 48, 0);
        scene.boxes.push(BoxSpec { center: Vector3::new(0.0, 0.0, 0.0), size: Vector3::new(1.0, 1.0, 1.0), texture: 0 });
        assert!(scene.validate().is_err(), "box around the camera");
    }

    #[test]
    fn on_plane_boxes_touch_the_plane() {
        let plane = PlaneParams::road(1.5, 0.03).unwrap();
        let b = BoxSpec::on_plane(&plane, 2.0, 20.0, Vector3::new(2.0, 1.0, 4.0), 0);
        let lowest = b.corners().iter().map(|c| plane.height_of(c)).fold(f64::INFINITY, f64::min);
        assert!(lowest.abs() < 1e-12 && lowest >= -1e-12);
    }

    #[test]
    fn value_noise_is_continuous_and_bounded() {
        for i in 0..1000 {
            let a = i as f64 * 0.013 - 3.0;
            let v = value_noise(a, 0.7 * a, 5);
            assert!((0.0..=1.0).contains(&v));
            let dv = (value_noise(a + 1e-7, 0.7 * a, 5) - v).abs();
            assert!(dv < 1e-5);
        }
    }
}
