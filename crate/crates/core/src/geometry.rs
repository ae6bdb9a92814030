//! Closed-form planar-parallax geometry.
//!
//! Conventions: camera frame x right, y down, z forward. Pixel `(x, y)` is
//! (column, row) with pixel centers on integer coordinates. A [`RigidMotion`]
//! maps source-frame points to target-frame points, `P_t = R P_s + T`, and the
//! reference plane is given in the source frame so that the plane-induced
//! homography maps source pixels onto target pixels.
//!
//! Residual flow is stored on the target grid as `u = p - p^w`, where `p^w`
//! is the homography image of the corresponding source pixel.

use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::grid::{DepthMap, FlowField, GammaMap, HeightMap};

/// |T_z| at or below this leaves the epipole undefined (meters).
pub const EPS_EPIPOLE_Z: f64 = 1e-9;
/// Minimum |1 - gamma T_z / h_c| before a point is sent to infinity.
pub const EPS_SINGULAR: f64 = 1e-9;
/// Minimum depth-recovery denominator (horizon guard).
pub const EPS_DENOMINATOR: f64 = 1e-9;
/// Minimum perspective-division denominator.
pub const EPS_DIVISION: f64 = 1e-12;

/// Pinhole intrinsics with zero skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be finite and positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("image size must be nonzero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics with the principal point at the image center and equal focal lengths.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0, width, height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// `K^-1 (p, 1)`: the viewing ray through `p` scaled to unit depth.
    pub fn ray(&self, p: Vector2<f64>) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }
}

/// Source-to-target rigid transform `P_t = R P_s + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidMotion {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let m = Self { rotation, translation };
        m.validate()?;
        Ok(m)
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation given as an axis-angle vector (radians).
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_scaled_axis(axis_angle).into_inner();
        Self { rotation, translation }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if !r.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("motion has non-finite entries".into()));
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "rotation not orthonormal (|R^T R - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self` after `first`: points go through `first`, then `self`.
    pub fn compose(&self, first: &RigidMotion) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    /// Motion induced by moving the camera to `center` (source coordinates)
    /// and rotating it by `axis_angle` relative to the source orientation.
    pub fn from_camera_pose(axis_angle: Vector3<f64>, center: Vector3<f64>) -> Self {
        let orientation = Rotation3::from_scaled_axis(axis_angle).into_inner();
        let rotation = orientation.transpose();
        Self { rotation, translation: -(rotation * center) }
    }

    /// Target camera center expressed in the source frame.
    pub fn target_center_in_source(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Reference plane `{P : N . P = h_c}` with unit normal `N` and camera height `h_c > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams {
    pub normal: Vector3<f64>,
    pub camera_height: f64,
}

impl PlaneParams {
    /// Normalizes `normal`; rejects non-positive heights.
    pub fn new(normal: Vector3<f64>, camera_height: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::DegeneratePlane("normal has zero length".into()));
        }
        if !camera_height.is_finite() || camera_height <= 0.0 {
            return Err(Error::DegeneratePlane(format!("camera height {camera_height} must be positive")));
        }
        Ok(Self { normal: normal / norm, camera_height })
    }

    /// Road plane for a camera pitched down by `pitch` radians about its x axis.
    pub fn road(camera_height: f64, pitch: f64) -> Result<Self> {
        Self::new(Vector3::new(0.0, pitch.cos(), pitch.sin()), camera_height)
    }

    pub fn height_of(&self, p: &Vector3<f64>) -> f64 {
        height_of_point(self, p)
    }

    /// The same plane expressed in the target frame of `motion`.
    pub fn in_target_frame(&self, motion: &RigidMotion) -> Result<Self> {
        let n = motion.rotation * self.normal;
        Self::new(n, self.camera_height + n.dot(&motion.translation))
    }

    pub fn validate(&self) -> Result<()> {
        if (self.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::DegeneratePlane("normal is not unit length".into()));
        }
        if !(self.camera_height > 0.0) {
            return Err(Error::DegeneratePlane(format!(
                "camera height {} must be positive",
                self.camera_height
            )));
        }
        Ok(())
    }
}

/// Plane-induced homography, stored unnormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn third_row(&self) -> Vector3<f64> {
        self.0.row(2).transpose()
    }

    /// Scaled so the largest-magnitude entry is +-1 with the sign of `H[2][2]`
    /// kept positive when possible.
    pub fn normalized(&self) -> Matrix3<f64> {
        let m = self.0;
        let max = m.abs().max();
        if max == 0.0 {
            return m;
        }
        let sign = if m[(2, 2)] < 0.0 { -1.0 } else { 1.0 };
        m * (sign / max)
    }

    pub fn is_singular(&self) -> bool {
        self.normalized().determinant().abs() <= 1e-12
    }

    pub fn inverse(&self) -> Result<Homography> {
        if self.is_singular() {
            return Err(Error::SingularHomography);
        }
        self.0.try_inverse().map(Homography).ok_or(Error::SingularHomography)
    }

    pub fn apply(&self, p: Vector2<f64>) -> Result<Vector2<f64>> {
        apply_homography(self, p)
    }

    /// Max-abs difference after scale normalization.
    pub fn distance(&self, other: &Homography) -> f64 {
        (self.normalized() - other.normalized()).abs().max()
    }
}

/// Image of the other camera center. `location` is meaningful only when `defined`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epipole {
    pub location: Vector2<f64>,
    pub defined: bool,
}

impl Epipole {
    pub fn point(&self) -> Option<Vector2<f64>> {
        self.defined.then_some(self.location)
    }
}

pub fn project(k: &CameraIntrinsics, p: &Vector3<f64>) -> Result<Vector2<f64>> {
    if !(p.z > 0.0) {
        return Err(Error::NonPositiveDepth(p.z));
    }
    Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

pub fn backproject(k: &CameraIntrinsics, p: Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok(k.ray(p) * depth)
}

/// `h = h_c - N . P`; positive above the road.
pub fn height_of_point(plane: &PlaneParams, p: &Vector3<f64>) -> f64 {
    plane.camera_height - plane.normal.dot(p)
}

pub fn gamma_of(height: f64, depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok(height / depth)
}

/// `H = K (R + T N^T / h_c) K^-1`, mapping source pixels of plane points to target pixels.
pub fn homography_from_motion(
    k: &CameraIntrinsics,
    motion: &RigidMotion,
    plane: &PlaneParams,
) -> Result<Homography> {
    if !(plane.camera_height > 0.0) {
        return Err(Error::DegeneratePlane(format!(
            "camera height {} must be positive",
            plane.camera_height
        )));
    }
    let euclidean = motion.rotation + motion.translation * plane.normal.transpose() / plane.camera_height;
    Ok(Homography(k.matrix() * euclidean * k.inverse_matrix()))
}

pub fn apply_homography(h: &Homography, p: Vector2<f64>) -> Result<Vector2<f64>> {
    let q = h.0 * Vector3::new(p.x, p.y, 1.0);
    if q.z.abs() < EPS_DIVISION {
        return Err(Error::MapsToInfinity(q.z));
    }
    Ok(Vector2::new(q.x / q.z, q.y / q.z))
}

/// `u_homo = H(p) - p`.
pub fn homography_displacement(p: Vector2<f64>, h: &Homography) -> Result<Vector2<f64>> {
    Ok(apply_homography(h, p)? - p)
}

/// `e = t / T_z` with `t = K T`.
pub fn epipole(k: &CameraIntrinsics, motion: &RigidMotion) -> Epipole {
    let t = k.matrix() * motion.translation;
    let tz = motion.translation.z;
    if tz.abs() > EPS_EPIPOLE_Z {
        Epipole { location: Vector2::new(t.x / tz, t.y / tz), defined: true }
    } else {
        Epipole { location: Vector2::zeros(), defined: false }
    }
}

/// Residual flow `u = p - p^w` of a target pixel with parallax `gamma`.
///
/// With `k = gamma T_z / h_c`, `u = -k / (1 - k) (p - e)` when the epipole is
/// defined, and `u = gamma / h_c (t_x, t_y)` when `T_z = 0`.
pub fn residual_flow_at(
    p: Vector2<f64>,
    gamma: f64,
    motion: &RigidMotion,
    plane: &PlaneParams,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>> {
    let e = epipole(k, motion);
    residual_flow_with_epipole(p, gamma, &e, motion, plane, k)
}

fn residual_flow_with_epipole(
    p: Vector2<f64>,
    gamma: f64,
    e: &Epipole,
    motion: &RigidMotion,
    plane: &PlaneParams,
    k: &CameraIntrinsics,
) -> Result<Vector2<f64>> {
    let h_c = plane.camera_height;
    match e.point() {
        Some(e) => {
            let ratio = gamma * motion.translation.z / h_c;
            let denom = 1.0 - ratio;
            if denom.abs() < EPS_SINGULAR {
                return Err(Error::ParallaxSingularity(denom));
            }
            Ok((p - e) * (-ratio / denom))
        }
        None => {
            let t = k.matrix() * motion.translation;
            Ok(Vector2::new(t.x, t.y) * (gamma / h_c))
        }
    }
}

/// Dense residual flow; singular cells become invalid.
pub fn residual_flow_map(
    gamma: &GammaMap,
    motion: &RigidMotion,
    plane: &PlaneParams,
    k: &CameraIntrinsics,
) -> Result<FlowField> {
    check_grid_matches(k, gamma.width(), gamma.height())?;
    let e = epipole(k, motion);
    Ok(FlowField::par_from_fn(gamma.width(), gamma.height(), |x, y| {
        let g = *gamma.get(x, y)?;
        let p = Vector2::new(x as f64, y as f64);
        residual_flow_with_epipole(p, g, &e, motion, plane, k).ok()
    }))
}

/// `Z = h_c / (gamma + N . K^-1 p)` per pixel. `plane` must be expressed in
/// the frame of the camera owning the grid (the target frame for target-grid
/// maps, see [`PlaneParams::in_target_frame`]).
pub fn depth_from_gamma(gamma: &GammaMap, plane: &PlaneParams, k: &CameraIntrinsics) -> Result<DepthMap> {
    check_grid_matches(k, gamma.width(), gamma.height())?;
    Ok(DepthMap::par_from_fn(gamma.width(), gamma.height(), |x, y| {
        let g = *gamma.get(x, y)?;
        let denom = g + plane.normal.dot(&k.ray(Vector2::new(x as f64, y as f64)));
        if !(denom > EPS_DENOMINATOR) {
            return None;
        }
        let z = plane.camera_height / denom;
        (z > 0.0 && z.is_finite()).then_some(z)
    }))
}

/// `h = gamma Z` on jointly valid cells.
pub fn height_from_gamma(gamma: &GammaMap, depth: &DepthMap) -> Result<HeightMap> {
    gamma.check_congruent(depth)?;
    Ok(HeightMap::par_from_fn(gamma.width(), gamma.height(), |x, y| {
        Some(gamma.get(x, y)? * depth.get(x, y)?)
    }))
}

/// Violation of the optical-flow decomposition `u_opt = u_homo + u_res` in
/// the two-view sign frame, for a target pixel `p_t` whose source match is
/// `p_t + u_opt`. With the stored convention the residual in that sign frame is
/// `-u_res`, and `u_homo = p_s - H(p_s)`.
pub fn flow_decomposition_error(
    p_t: Vector2<f64>,
    u_opt: Vector2<f64>,
    u_res: Vector2<f64>,
    h: &Homography,
) -> Result<f64> {
    let p_s = p_t + u_opt;
    let u_homo = -homography_displacement(p_s, h)?;
    Ok((u_opt - (u_homo - u_res)).norm())
}

/// Builds a unit normal from an axis-angle tilt of the canonical road normal.
pub fn tilted_normal(axis_angle: Vector3<f64>) -> Vector3<f64> {
    let r = Rotation3::from_scaled_axis(axis_angle);
    Unit::new_normalize(r * Vector3::y()).into_inner()
}

fn check_grid_matches(k: &CameraIntrinsics, width: usize, height: usize) -> Result<()> {
    if k.width != width || k.height != height {
        return Err(Error::GridMismatch(format!(
            "map is {width}x{height}, camera is {}x{}",
            k.width, k.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k_identity(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, width: w, height: h }
    }

    fn k_100() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 60.0, 128, 128).unwrap()
    }

    fn translation(t: [f64; 3]) -> RigidMotion {
        RigidMotion::new(Matrix3::identity(), Vector3::from(t)).unwrap()
    }

    fn plane_y(h_c: f64) -> PlaneParams {
        PlaneParams::new(Vector3::y(), h_c).unwrap()
    }

    /// Oracle: maps source pixel p' to the target pixel of the plane point it sees,
    /// by ray-plane intersection in the source frame followed by rigid transform
    /// and projection. Independent of the homography formula.
    fn plane_transfer_oracle(
        k: &CameraIntrinsics,
        m: &RigidMotion,
        plane: &PlaneParams,
        p_src: Vector2<f64>,
    ) -> Vector2<f64> {
        let ray = Vector3::new((p_src.x - k.cx) / k.fx, (p_src.y - k.cy) / k.fy, 1.0);
        let lambda = plane.camera_height / plane.normal.dot(&ray);
        let p_t = m.rotation * (ray * lambda) + m.translation;
        Vector2::new(k.fx * p_t.x / p_t.z + k.cx, k.fy * p_t.y / p_t.z + k.cy)
    }

    #[test]
    fn project_examples() {
        let p = project(&k_identity(1, 1), &Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(p, Vector2::new(0.0, 0.0));
        let p = project(&k_100(), &Vector3::new(1.0, 2.0, 10.0)).unwrap();
        assert_eq!(p, Vector2::new(60.0, 80.0));
        assert!(matches!(
            project(&k_100(), &Vector3::new(1.0, 2.0, 0.0)),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn backproject_examples() {
        let p = backproject(&k_identity(1, 1), Vector2::zeros(), 5.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 5.0));
        let p = backproject(&k_100(), Vector2::new(60.0, 80.0), 10.0).unwrap();
        assert_abs_diff_eq!(p, Vector3::new(1.0, 2.0, 10.0), epsilon = 1e-12);
        assert!(matches!(backproject(&k_100(), Vector2::zeros(), -1.0), Err(Error::NonPositiveDepth(_))));
    }

    #[test]
    fn height_examples() {
        let plane = plane_y(1.5);
        assert_eq!(height_of_point(&plane, &Vector3::new(0.0, 1.5, 10.0)), 0.0);
        assert_eq!(height_of_point(&plane, &Vector3::zeros()), 1.5);
        assert_abs_diff_eq!(height_of_point(&plane, &Vector3::new(3.0, 1.0, 20.0)), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_of(0.0, 10.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gamma_of(0.5, 10.0).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(gamma_of(-0.2, 4.0).unwrap(), -0.05, epsilon = 1e-15);
        assert!(gamma_of(1.0, 0.0).is_err());
    }

    #[test]
    fn homography_identity_motion() {
        let h = homography_from_motion(&k_100(), &RigidMotion::identity(), &plane_y(1.2)).unwrap();
        assert_abs_diff_eq!(h.0, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn homography_lateral_translation_matches_oracle() {
        let k = k_identity(1, 1);
        let m = translation([1.0, 0.0, 0.0]);
        let plane = plane_y(1.0);
        let h = homography_from_motion(&k, &m, &plane).unwrap();
        let expected = Matrix3::new(1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(h.0, expected, epsilon = 1e-15);
        for (x, z) in [(0.0, 5.0), (-2.0, 7.0), (3.0, 11.0)] {
            let p_src = Vector2::new(x / z, 1.0 / z);
            let oracle = plane_transfer_oracle(&k, &m, &plane, p_src);
            assert_abs_diff_eq!(apply_homography(&h, p_src).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn homography_forward_translation_matches_oracle() {
        let k = k_identity(1, 1);
        let m = translation([0.0, 0.0, -1.0]);
        let plane = plane_y(2.0);
        let h = homography_from_motion(&k, &m, &plane).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -0.5, 1.0);
        assert_abs_diff_eq!(h.0, expected, epsilon = 1e-15);
        let p = apply_homography(&h, Vector2::new(0.0, 0.2)).unwrap();
        assert_abs_diff_eq!(p, Vector2::new(0.0, 2.0 / 9.0), epsilon = 1e-15);
        let oracle = plane_transfer_oracle(&k, &m, &plane, Vector2::new(0.0, 0.2));
        assert_abs_diff_eq!(p, oracle, epsilon = 1e-15);
    }

    #[test]
    fn homography_rejects_bad_plane() {
        let plane = PlaneParams { normal: Vector3::y(), camera_height: 0.0 };
        assert!(matches!(
            homography_from_motion(&k_100(), &RigidMotion::identity(), &plane),
            Err(Error::DegeneratePlane(_))
        ));
    }

    #[test]
    fn apply_homography_examples() {
        let p = Vector2::new(2.5, -3.0);
        assert_eq!(apply_homography(&Homography::identity(), p).unwrap(), p);
        let shear = Homography(Matrix3::new(1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert_eq!(apply_homography(&shear, Vector2::new(2.0, 3.0)).unwrap(), Vector2::new(5.0, 3.0));
        let to_inf = Homography(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -0.5, 1.0));
        assert!(matches!(apply_homography(&to_inf, Vector2::new(0.0, 2.0)), Err(Error::MapsToInfinity(_))));
    }

    #[test]
    fn homography_displacement_examples() {
        let p = Vector2::new(4.0, 1.0);
        assert_eq!(homography_displacement(p, &Homography::identity()).unwrap(), Vector2::zeros());
        let shear = Homography(Matrix3::new(1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert_eq!(homography_displacement(Vector2::new(2.0, 3.0), &shear).unwrap(), Vector2::new(3.0, 0.0));
    }

    #[test]
    fn epipole_examples() {
        let e = epipole(&k_identity(1, 1), &translation([0.0, 0.0, -1.0]));
        assert!(e.defined);
        assert_eq!(e.location, Vector2::new(0.0, 0.0));
        let e = epipole(&k_100(), &translation([0.0, 0.0, -1.0]));
        assert!(e.defined);
        assert_abs_diff_eq!(e.location, Vector2::new(50.0, 60.0), epsilon = 1e-12);
        let e = epipole(&k_100(), &translation([0.3, 0.0, 0.0]));
        assert!(!e.defined);
        assert_eq!(e.point(), None);
    }

    #[test]
    fn residual_flow_examples() {
        let k = k_100();
        let m = translation([0.0, 0.0, -1.0]);
        let plane = plane_y(2.0);
        let e = epipole(&k, &m).location;
        let u = residual_flow_at(Vector2::new(3.0, 9.0), 0.0, &m, &plane, &k).unwrap();
        assert_eq!(u, Vector2::zeros());
        let u = residual_flow_at(e, 0.3, &m, &plane, &k).unwrap();
        assert_abs_diff_eq!(u, Vector2::zeros(), epsilon = 1e-15);
        let u = residual_flow_at(e + Vector2::new(10.0, 10.0), 0.1, &m, &plane, &k).unwrap();
        let expected = 10.0 * 0.05 / 1.05;
        assert_abs_diff_eq!(u, Vector2::new(expected, expected), epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.476_190_476_190_476, epsilon = 1e-12);
    }

    /// Full two-view projection of a 3D point with h/Z = 0.1 reproduces the flow.
    #[test]
    fn residual_flow_matches_two_view_projection() {
        let k = k_100();
        let m = translation([0.0, 0.0, -1.0]);
        let plane = plane_y(2.0);
        let h = homography_from_motion(&k, &m, &plane).unwrap();
        // target-frame point with Z = 10 and height 1 -> gamma 0.1
        let p_t3 = Vector3::new(0.7, 1.0, 10.0);
        let p_s3 = m.inverse().apply(&p_t3);
        assert_abs_diff_eq!(plane.height_of(&p_s3), 1.0, epsilon = 1e-15);
        let p_t = project(&k, &p_t3).unwrap();
        let p_s = project(&k, &p_s3).unwrap();
        let p_w = apply_homography(&h, p_s).unwrap();
        let u = residual_flow_at(p_t, 0.1, &m, &plane, &k).unwrap();
        assert_abs_diff_eq!(u, p_t - p_w, epsilon = 1e-12);
    }

    #[test]
    fn residual_flow_lateral_branch_matches_projection() {
        // T_z = 0: u = p - p^w = gamma / h_c * (t_x, t_y)
        let k = k_identity(1, 1);
        let m = translation([1.0, 0.0, 0.0]);
        let plane = plane_y(1.0);
        let h = homography_from_motion(&k, &m, &plane).unwrap();
        let p_s3 = Vector3::new(0.0, 0.0, 10.0);
        let p_t3 = m.apply(&p_s3);
        let p_t = project(&k, &p_t3).unwrap();
        let p_w = apply_homography(&h, project(&k, &p_s3).unwrap()).unwrap();
        let u = residual_flow_at(p_t, 0.1, &m, &plane, &k).unwrap();
        assert_abs_diff_eq!(u, Vector2::new(0.1, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(u, p_t - p_w, epsilon = 1e-15);
    }

    #[test]
    fn residual_flow_singularity() {
        let k = k_100();
        let m = translation([0.0, 0.0, 1.0]);
        let plane = plane_y(2.0);
        // k = gamma * T_z / h_c = 1
        assert!(matches!(
            residual_flow_at(Vector2::new(1.0, 1.0), 2.0, &m, &plane, &k),
            Err(Error::ParallaxSingularity(_))
        ));
    }

    #[test]
    fn branch_continuity() {
        let k = k_100();
        let plane = plane_y(1.5);
        let p = Vector2::new(37.0, 91.0);
        let lateral = translation([0.4, -0.1, 0.0]);
        let nearly = translation([0.4, -0.1, 1e-8]);
        for gamma in [-0.05, 0.01, 0.2] {
            let a = residual_flow_at(p, gamma, &lateral, &plane, &k).unwrap();
            let b = residual_flow_at(p, gamma, &nearly, &plane, &k).unwrap();
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn residual_flow_map_masks() {
        let k = CameraIntrinsics::new(50.0, 50.0, 4.0, 3.0, 8, 6).unwrap();
        let m = translation([0.1, 0.0, -1.0]);
        let plane = plane_y(1.5);
        let zero = GammaMap::filled(8, 6, 0.0);
        let flow = residual_flow_map(&zero, &m, &plane, &k).unwrap();
        assert_eq!(flow.valid_count(), 48);
        assert!(flow.values().iter().all(|u| *u == Vector2::zeros()));

        let mut single = GammaMap::empty(8, 6);
        single.set(5, 2, 0.1);
        let flow = residual_flow_map(&single, &m, &plane, &k).unwrap();
        assert_eq!(flow.valid_count(), 1);
        assert!(flow.is_valid(5, 2));

        let wrong = GammaMap::filled(7, 6, 0.0);
        assert!(matches!(residual_flow_map(&wrong, &m, &plane, &k), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn depth_from_gamma_examples() {
        let k = k_identity(1, 1);
        let plane = plane_y(1.5);
        let ray = Vector2::new(0.0, 0.15);
        let denom: f64 = 0.0 + plane.normal.dot(&k.ray(ray));
        assert_abs_diff_eq!(plane.camera_height / denom, 10.0, epsilon = 1e-12);

        // single-pixel grids at the example coordinates via shifted principal points
        let at = |px: Vector2<f64>| CameraIntrinsics { fx: 1.0, fy: 1.0, cx: -px.x, cy: -px.y, width: 1, height: 1 };
        let d = depth_from_gamma(&GammaMap::filled(1, 1, 0.0), &plane, &at(Vector2::new(0.0, 0.15))).unwrap();
        assert_abs_diff_eq!(*d.get(0, 0).unwrap(), 10.0, epsilon = 1e-12);

        let d = depth_from_gamma(&GammaMap::filled(1, 1, 0.0), &plane, &k).unwrap();
        assert_eq!(d.valid_count(), 0, "horizon pixel must be invalid");

        let g = GammaMap::filled(1, 1, 0.05);
        let d = depth_from_gamma(&g, &plane, &at(Vector2::new(0.0, 0.1))).unwrap();
        assert_abs_diff_eq!(*d.get(0, 0).unwrap(), 10.0, epsilon = 1e-12);
        let h = height_from_gamma(&g, &d).unwrap();
        assert_abs_diff_eq!(*h.get(0, 0).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn height_from_gamma_examples() {
        let g = GammaMap::filled(3, 2, 0.0);
        let d = DepthMap::filled(3, 2, 7.0);
        assert!(height_from_gamma(&g, &d).unwrap().values().iter().all(|h| *h == 0.0));
        let h = height_from_gamma(&GammaMap::filled(1, 1, 0.05), &DepthMap::filled(1, 1, 10.0)).unwrap();
        assert_abs_diff_eq!(*h.get(0, 0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(
            height_from_gamma(&GammaMap::filled(2, 2, 0.0), &d),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn plane_in_target_frame_keeps_points_on_plane() {
        let plane = PlaneParams::road(1.5, 0.03).unwrap();
        let m = RigidMotion::from_axis_angle(Vector3::new(0.01, 0.02, -0.005), Vector3::new(0.1, 0.05, -1.2));
        let target = plane.in_target_frame(&m).unwrap();
        for (x, z) in [(0.0, 5.0), (-3.0, 20.0), (4.0, 40.0)] {
            // a source-frame plane point
            let ray = Vector3::new(x / z, 0.1, 1.0);
            let p = ray * (plane.camera_height / plane.normal.dot(&ray));
            assert_abs_diff_eq!(target.height_of(&m.apply(&p)), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn motion_inverse_composes_to_identity() {
        let m = RigidMotion::from_axis_angle(Vector3::new(0.3, -0.2, 0.1), Vector3::new(1.0, 2.0, -3.0));
        m.validate().unwrap();
        let id = m.compose(&m.inverse());
        assert_abs_diff_eq!(id.rotation, Matrix3::identity(), epsilon = 1e-9);
        assert_abs_diff_eq!(id.translation, Vector3::zeros(), epsilon = 1e-9);
        assert!(RigidMotion::new(Matrix3::identity() * 2.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn decomposition_on_a_single_point() {
        let k = k_100();
        let m = RigidMotion::from_axis_angle(Vector3::new(0.0, 0.01, 0.0), Vector3::new(0.05, 0.0, -1.0));
        let plane = plane_y(1.5);
        let h = homography_from_motion(&k, &m, &plane).unwrap();
        let p_s3 = Vector3::new(-1.0, 0.4, 12.0);
        let p_t3 = m.apply(&p_s3);
        let (p_s, p_t) = (project(&k, &p_s3).unwrap(), project(&k, &p_t3).unwrap());
        let gamma = plane.height_of(&p_s3) / p_t3.z;
        let u_res = residual_flow_at(p_t, gamma, &m, &plane, &k).unwrap();
        let err = flow_decomposition_error(p_t, p_s - p_t, u_res, &h).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    proptest! {
        #[test]
        fn project_backproject_inverse_pair(
            x in -50.0f64..50.0, y in -50.0f64..50.0, z in 0.1f64..200.0,
            fx in 50.0f64..2000.0, fy in 50.0f64..2000.0,
        ) {
            let k = CameraIntrinsics::new(fx, fy, 160.0, 96.0, 320, 192).unwrap();
            let p3 = Vector3::new(x, y, z);
            let p = project(&k, &p3).unwrap();
            let back = backproject(&k, p, z).unwrap();
            prop_assert!((back - p3).norm() < 1e-12 * (1.0 + p3.norm()));
            let again = project(&k, &back).unwrap();
            prop_assert!((again - p).norm() < 1e-12 * (1.0 + p.norm()));
        }

        #[test]
        fn plane_points_have_zero_height_and_flow(
            x in -10.0f64..10.0, z in 2.0f64..80.0, tz in -2.0f64..2.0,
        ) {
            let plane = plane_y(1.5);
            let p3 = Vector3::new(x, 1.5, z);
            let h = height_of_point(&plane, &p3);
            prop_assert_eq!(h, 0.0);
            let k = k_100();
            let m = translation([0.2, 0.0, tz]);
            let u = residual_flow_at(project(&k, &p3).unwrap(), gamma_of(h, z).unwrap(), &m, &plane, &k).unwrap();
            prop_assert_eq!(u, Vector2::zeros());
        }
    }
}
