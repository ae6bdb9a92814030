//! C ABI over `parallax-core`.
//!
//! Conventions:
//! * every fallible function returns a `PxStatus`; `PX_STATUS_OK` is zero;
//! * the message of the most recent failure on the calling thread is
//!   available through `px_last_error_message`;
//! * handles (`PxScalarMap`, `PxFlowField`, `PxSolverReport`, `PxSample`) are
//!   created by this library and must be released with their `*_free`
//!   function; passing NULL to a `*_free` function is a no-op;
//! * matrices are row-major, maps are row-major with `x` fastest, flows are
//!   interleaved `(u, v)` pairs, validity arrays hold 0/1 bytes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::{Matrix3, Vector2, Vector3};
use parallax_core::dataio::DatasetSample;
use parallax_core::geometry::{self, CameraIntrinsics, Homography, PlaneParams, RigidMotion};
use parallax_core::grid::{FlowField, ScalarMap};
use parallax_core::solver::{self, SolverReport};
use parallax_core::synth::SceneSpec;
use parallax_core::Error;

/// Result code of every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Panic = 3,
    NonPositiveDepth = 10,
    DegeneratePlane = 11,
    MapsToInfinity = 12,
    ParallaxSingularity = 13,
    GridMismatch = 14,
    SingularHomography = 15,
    DegenerateInput = 16,
    NoConsensus = 17,
    EpipoleDegeneracy = 18,
    SingularRatio = 19,
    ZeroTranslation = 20,
    PatchTooLarge = 21,
    EmptyMask = 22,
    EmptyBucket = 23,
    ShapeMismatch = 24,
    InvalidParameter = 25,
    MalformedHeader = 26,
    SizeMismatch = 27,
    MissingFile = 28,
    IncongruentGrids = 29,
    IoFailure = 30,
    Json = 31,
}

impl From<&Error> for PxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::NonPositiveDepth(_) => PxStatus::NonPositiveDepth,
            Error::DegeneratePlane(_) => PxStatus::DegeneratePlane,
            Error::MapsToInfinity(_) => PxStatus::MapsToInfinity,
            Error::ParallaxSingularity(_) => PxStatus::ParallaxSingularity,
            Error::GridMismatch(_) => PxStatus::GridMismatch,
            Error::SingularHomography => PxStatus::SingularHomography,
            Error::DegenerateInput(_) => PxStatus::DegenerateInput,
            Error::NoConsensus { .. } => PxStatus::NoConsensus,
            Error::EpipoleDegeneracy(_) => PxStatus::EpipoleDegeneracy,
            Error::SingularRatio(_) => PxStatus::SingularRatio,
            Error::ZeroTranslation => PxStatus::ZeroTranslation,
            Error::PatchTooLarge { .. } => PxStatus::PatchTooLarge,
            Error::EmptyMask => PxStatus::EmptyMask,
            Error::EmptyBucket => PxStatus::EmptyBucket,
            Error::ShapeMismatch(_) => PxStatus::ShapeMismatch,
            Error::InvalidParameter(_) => PxStatus::InvalidParameter,
            Error::MalformedHeader(_) => PxStatus::MalformedHeader,
            Error::SizeMismatch(_) => PxStatus::SizeMismatch,
            Error::MissingFile(_) => PxStatus::MissingFile,
            Error::IncongruentGrids(_) => PxStatus::IncongruentGrids,
            Error::Io(_) => PxStatus::IoFailure,
            Error::Json(_) => PxStatus::Json,
        }
    }
}

/// Pinhole intrinsics; pixel centers sit on integer coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PxCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Source-to-target rigid motion `P_t = R P_s + T`, `R` row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PxMotion {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Plane `N . P = h_c` with unit normal `N` and camera height `h_c > 0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PxPlane {
    pub normal: [f64; 3],
    pub camera_height: f64,
}

/// Cell counts of a solver run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PxSolverCounts {
    pub solved: usize,
    pub degenerate_epipole: usize,
    pub singular: usize,
}

/// Synthetic scene families understood by `px_sample_generate`.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxPreset {
    Standard = 0,
    Random = 1,
}

/// Scalar map (gamma, depth or height) with per-cell validity.
pub struct PxScalarMap(ScalarMap);

/// Residual-flow field with per-cell validity.
pub struct PxFlowField(FlowField);

/// Output of the closed-form gamma solver.
pub struct PxSolverReport(SolverReport);

/// A two-view dataset sample with its ground truth.
pub struct PxSample(DatasetSample);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend_from_slice(msg.as_bytes());
    });
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (PxStatus, String)>) -> PxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            PxStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            PxStatus::Panic
        }
    }
}

type FfiResult<T> = Result<T, (PxStatus, String)>;

fn core<T>(r: parallax_core::Result<T>) -> FfiResult<T> {
    r.map_err(|e| (PxStatus::from(&e), e.to_string()))
}

fn null(what: &str) -> (PxStatus, String) {
    (PxStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char) -> FfiResult<PathBuf> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| (PxStatus::InvalidUtf8, "path is not UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

impl PxCamera {
    fn to_core(self) -> FfiResult<CameraIntrinsics> {
        core(CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height))
    }

    fn from_core(k: &CameraIntrinsics) -> Self {
        PxCamera { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

impl PxMotion {
    fn to_core(self) -> FfiResult<RigidMotion> {
        let r = Matrix3::from_row_slice(&self.rotation);
        core(RigidMotion::new(r, Vector3::from(self.translation)))
    }

    fn from_core(m: &RigidMotion) -> Self {
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = m.rotation[(i, j)];
            }
        }
        PxMotion { rotation, translation: m.translation.into() }
    }
}

impl PxPlane {
    fn to_core(self) -> FfiResult<PlaneParams> {
        core(PlaneParams::new(Vector3::from(self.normal), self.camera_height))
    }

    fn from_core(p: &PlaneParams) -> Self {
        PxPlane { normal: p.normal.into(), camera_height: p.camera_height }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn px_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) into `buf` and returns the full message length excluding the NUL.
/// Call with `buf = NULL, len = 0` to query the length.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn px_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Plane-induced homography `K (R + T N^T / h_c) K^-1`, row-major, mapping
/// source pixels to target pixels.
///
/// # Safety
/// Pointers must be valid; `out` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn px_homography(
    camera: *const PxCamera,
    motion: *const PxMotion,
    plane: *const PxPlane,
    out_h: *mut f64,
) -> PxStatus {
    guard(|| {
        let k = deref(camera, "camera")?.to_core()?;
        let m = deref(motion, "motion")?.to_core()?;
        let p = deref(plane, "plane")?.to_core()?;
        let h = core(geometry::homography_from_motion(&k, &m, &p))?;
        let dst = slice_mut(out_h, 9, "out_h")?;
        for i in 0..3 {
            for j in 0..3 {
                dst[3 * i + j] = h.0[(i, j)];
            }
        }
        Ok(())
    })
}

/// Applies a row-major homography to pixel `(x, y)`.
///
/// # Safety
/// `h` must hold 9 doubles, `out_xy` 2.
#[no_mangle]
pub unsafe extern "C" fn px_apply_homography(h: *const f64, x: f64, y: f64, out_xy: *mut f64) -> PxStatus {
    guard(|| {
        let h = Homography(Matrix3::from_row_slice(slice(h, 9, "h")?));
        let q = core(geometry::apply_homography(&h, Vector2::new(x, y)))?;
        slice_mut(out_xy, 2, "out_xy")?.copy_from_slice(&[q.x, q.y]);
        Ok(())
    })
}

/// Epipole `K T / T_z`; `*out_defined` is 0 (and `out_xy` untouched) when `T_z` is ~0.
///
/// # Safety
/// Pointers must be valid; `out_xy` must hold 2 doubles.
#[no_mangle]
pub unsafe extern "C" fn px_epipole(
    camera: *const PxCamera,
    motion: *const PxMotion,
    out_xy: *mut f64,
    out_defined: *mut i32,
) -> PxStatus {
    guard(|| {
        let k = deref(camera, "camera")?.to_core()?;
        let m = deref(motion, "motion")?.to_core()?;
        let defined = out(out_defined, "out_defined")?;
        match geometry::epipole(&k, &m).point() {
            Some(e) => {
                slice_mut(out_xy, 2, "out_xy")?.copy_from_slice(&[e.x, e.y]);
                *defined = 1;
            }
            None => *defined = 0,
        }
        Ok(())
    })
}

/// Re-expresses a source-frame plane in the target frame of `motion`; depth
/// recovery on the target grid needs this form.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_plane_in_target_frame(
    plane: *const PxPlane,
    motion: *const PxMotion,
    out_plane: *mut PxPlane,
) -> PxStatus {
    guard(|| {
        let p = deref(plane, "plane")?.to_core()?;
        let m = deref(motion, "motion")?.to_core()?;
        *out(out_plane, "out_plane")? = PxPlane::from_core(&core(p.in_target_frame(&m))?);
        Ok(())
    })
}

/// Creates a `width x height` scalar map. `valid` may be NULL (all valid);
/// otherwise nonzero bytes mark valid cells.
///
/// # Safety
/// `values` must hold `width * height` doubles, `valid` (if not NULL) as many bytes.
#[no_mangle]
pub unsafe extern "C" fn px_scalar_map_new(
    width: usize,
    height: usize,
    values: *const f64,
    valid: *const u8,
    out_map: *mut *mut PxScalarMap,
) -> PxStatus {
    guard(|| {
        let dst = out(out_map, "out_map")?;
        let n = width.checked_mul(height).ok_or((PxStatus::InvalidParameter, "map too large".to_string()))?;
        let values = slice(values, n, "values")?.to_vec();
        let valid = if valid.is_null() { vec![true; n] } else { slice(valid, n, "valid")?.iter().map(|v| *v != 0).collect() };
        *dst = boxed(PxScalarMap(core(ScalarMap::from_parts(width, height, values, valid))?));
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_scalar_map_free(map: *mut PxScalarMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Writes the map's width and height.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_scalar_map_size(map: *const PxScalarMap, out_width: *mut usize, out_height: *mut usize) -> PxStatus {
    guard(|| {
        let m = &deref(map, "map")?.0;
        *out(out_width, "out_width")? = m.width();
        *out(out_height, "out_height")? = m.height();
        Ok(())
    })
}

/// Copies values and validity out. Invalid cells read as NaN. Either output
/// may be NULL; `len` must equal `width * height`.
///
/// # Safety
/// Non-NULL outputs must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn px_scalar_map_copy(
    map: *const PxScalarMap,
    out_values: *mut f64,
    out_valid: *mut u8,
    len: usize,
) -> PxStatus {
    guard(|| {
        let m = &deref(map, "map")?.0;
        if len != m.len() {
            return Err((PxStatus::SizeMismatch, format!("buffer holds {len} cells, map has {}", m.len())));
        }
        if !out_values.is_null() {
            let dst = slice_mut(out_values, len, "out_values")?;
            for ((d, v), ok) in dst.iter_mut().zip(m.values()).zip(m.valid()) {
                *d = if *ok { *v } else { f64::NAN };
            }
        }
        if !out_valid.is_null() {
            let dst = slice_mut(out_valid, len, "out_valid")?;
            for (d, ok) in dst.iter_mut().zip(m.valid()) {
                *d = u8::from(*ok);
            }
        }
        Ok(())
    })
}

/// Creates a flow field from interleaved `(u, v)` pairs (`2 * width * height`
/// doubles). `valid` may be NULL (all valid).
///
/// # Safety
/// Buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn px_flow_field_new(
    width: usize,
    height: usize,
    uv: *const f64,
    valid: *const u8,
    out_flow: *mut *mut PxFlowField,
) -> PxStatus {
    guard(|| {
        let dst = out(out_flow, "out_flow")?;
        let n = width.checked_mul(height).ok_or((PxStatus::InvalidParameter, "field too large".to_string()))?;
        let uv = slice(uv, 2 * n, "uv")?;
        let values = uv.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect();
        let valid = if valid.is_null() { vec![true; n] } else { slice(valid, n, "valid")?.iter().map(|v| *v != 0).collect() };
        *dst = boxed(PxFlowField(core(FlowField::from_parts(width, height, values, valid))?));
        Ok(())
    })
}

/// # Safety
/// `flow` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_flow_field_free(flow: *mut PxFlowField) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_flow_field_size(flow: *const PxFlowField, out_width: *mut usize, out_height: *mut usize) -> PxStatus {
    guard(|| {
        let f = &deref(flow, "flow")?.0;
        *out(out_width, "out_width")? = f.width();
        *out(out_height, "out_height")? = f.height();
        Ok(())
    })
}

/// Copies interleaved `(u, v)` (NaN on invalid cells) and validity out.
/// `cells` must equal `width * height`; `out_uv` then holds `2 * cells` doubles.
///
/// # Safety
/// Non-NULL outputs must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn px_flow_field_copy(
    flow: *const PxFlowField,
    out_uv: *mut f64,
    out_valid: *mut u8,
    cells: usize,
) -> PxStatus {
    guard(|| {
        let f = &deref(flow, "flow")?.0;
        if cells != f.len() {
            return Err((PxStatus::SizeMismatch, format!("buffer holds {cells} cells, field has {}", f.len())));
        }
        if !out_uv.is_null() {
            let dst = slice_mut(out_uv, 2 * cells, "out_uv")?;
            for ((d, v), ok) in dst.chunks_exact_mut(2).zip(f.values()).zip(f.valid()) {
                let v = if *ok { *v } else { Vector2::repeat(f64::NAN) };
                d.copy_from_slice(&[v.x, v.y]);
            }
        }
        if !out_valid.is_null() {
            let dst = slice_mut(out_valid, cells, "out_valid")?;
            for (d, ok) in dst.iter_mut().zip(f.valid()) {
                *d = u8::from(*ok);
            }
        }
        Ok(())
    })
}

/// Dense residual flow `p - p^w` implied by a target-grid gamma map.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_residual_flow_map(
    gamma: *const PxScalarMap,
    camera: *const PxCamera,
    motion: *const PxMotion,
    plane: *const PxPlane,
    out_flow: *mut *mut PxFlowField,
) -> PxStatus {
    guard(|| {
        let g = &deref(gamma, "gamma")?.0;
        let k = deref(camera, "camera")?.to_core()?;
        let m = deref(motion, "motion")?.to_core()?;
        let p = deref(plane, "plane")?.to_core()?;
        let dst = out(out_flow, "out_flow")?;
        *dst = boxed(PxFlowField(core(geometry::residual_flow_map(g, &m, &p, &k))?));
        Ok(())
    })
}

/// Closed-form gamma from residual flow.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_solve_gamma_map(
    flow: *const PxFlowField,
    camera: *const PxCamera,
    motion: *const PxMotion,
    plane: *const PxPlane,
    out_report: *mut *mut PxSolverReport,
) -> PxStatus {
    guard(|| {
        let f = &deref(flow, "flow")?.0;
        let k = deref(camera, "camera")?.to_core()?;
        let m = deref(motion, "motion")?.to_core()?;
        let p = deref(plane, "plane")?.to_core()?;
        let dst = out(out_report, "out_report")?;
        *dst = boxed(PxSolverReport(core(solver::solve_gamma_map(f, &m, &p, &k))?));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_solver_report_free(report: *mut PxSolverReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_solver_report_counts(report: *const PxSolverReport, out_counts: *mut PxSolverCounts) -> PxStatus {
    guard(|| {
        let r = &deref(report, "report")?.0;
        *out(out_counts, "out_counts")? =
            PxSolverCounts { solved: r.solved, degenerate_epipole: r.degenerate_epipole, singular: r.singular };
        Ok(())
    })
}

/// New handle holding a copy of the solved gamma map.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_solver_report_gamma(report: *const PxSolverReport, out_map: *mut *mut PxScalarMap) -> PxStatus {
    guard(|| {
        let r = &deref(report, "report")?.0;
        *out(out_map, "out_map")? = boxed(PxScalarMap(r.gamma.clone()));
        Ok(())
    })
}

/// New handle holding a copy of the orthogonal (off-epipolar-line) residual.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_solver_report_orthogonal_residual(
    report: *const PxSolverReport,
    out_map: *mut *mut PxScalarMap,
) -> PxStatus {
    guard(|| {
        let r = &deref(report, "report")?.0;
        *out(out_map, "out_map")? = boxed(PxScalarMap(r.orthogonal_residual.clone()));
        Ok(())
    })
}

/// Depth `Z = h_c / (gamma + N . K^-1 p)`. `plane` must be in the frame of the
/// grid's camera (see `px_plane_in_target_frame`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_depth_from_gamma(
    gamma: *const PxScalarMap,
    plane: *const PxPlane,
    camera: *const PxCamera,
    out_depth: *mut *mut PxScalarMap,
) -> PxStatus {
    guard(|| {
        let g = &deref(gamma, "gamma")?.0;
        let p = deref(plane, "plane")?.to_core()?;
        let k = deref(camera, "camera")?.to_core()?;
        let dst = out(out_depth, "out_depth")?;
        *dst = boxed(PxScalarMap(core(geometry::depth_from_gamma(g, &p, &k))?));
        Ok(())
    })
}

/// Height `h = gamma Z` on jointly valid cells.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_height_from_gamma(
    gamma: *const PxScalarMap,
    depth: *const PxScalarMap,
    out_height: *mut *mut PxScalarMap,
) -> PxStatus {
    guard(|| {
        let g = &deref(gamma, "gamma")?.0;
        let d = &deref(depth, "depth")?.0;
        let dst = out(out_height, "out_height")?;
        *dst = boxed(PxScalarMap(core(geometry::height_from_gamma(g, d))?));
        Ok(())
    })
}

/// Renders a synthetic scene and its ground truth. `preset` is a `PxPreset` value.
///
/// # Safety
/// `out_sample` must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_sample_generate(
    preset: i32,
    seed: u64,
    width: usize,
    height: usize,
    out_sample: *mut *mut PxSample,
) -> PxStatus {
    guard(|| {
        let dst = out(out_sample, "out_sample")?;
        if width < 8 || height < 8 {
            return Err((PxStatus::InvalidParameter, format!("image must be at least 8x8, got {width}x{height}")));
        }
        let scene = match preset {
            p if p == PxPreset::Standard as i32 => SceneSpec::standard_sized(width, height, seed),
            p if p == PxPreset::Random as i32 => SceneSpec::random_sized(width, height, seed),
            p => return Err((PxStatus::InvalidParameter, format!("unknown preset {p}"))),
        };
        *dst = boxed(PxSample(core(DatasetSample::from_scene(&scene))?));
        Ok(())
    })
}

/// Reads a sample directory written by `px_sample_write` or `parallax gen`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out_sample` must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_sample_read(dir: *const c_char, out_sample: *mut *mut PxSample) -> PxStatus {
    guard(|| {
        let dir = path(dir)?;
        let dst = out(out_sample, "out_sample")?;
        *dst = boxed(PxSample(core(DatasetSample::read(&dir))?));
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string; `sample` a live handle.
#[no_mangle]
pub unsafe extern "C" fn px_sample_write(sample: *const PxSample, dir: *const c_char) -> PxStatus {
    guard(|| {
        let s = &deref(sample, "sample")?.0;
        core(s.write(&path(dir)?))
    })
}

/// # Safety
/// `sample` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_sample_free(sample: *mut PxSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Camera, motion and (source-frame) plane of a sample. Any output may be NULL.
///
/// # Safety
/// `sample` must be a live handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_sample_geometry(
    sample: *const PxSample,
    out_camera: *mut PxCamera,
    out_motion: *mut PxMotion,
    out_plane: *mut PxPlane,
) -> PxStatus {
    guard(|| {
        let s = &deref(sample, "sample")?.0;
        if let Some(c) = out_camera.as_mut() {
            *c = PxCamera::from_core(&s.camera);
        }
        if let Some(m) = out_motion.as_mut() {
            *m = PxMotion::from_core(&s.motion);
        }
        if let Some(p) = out_plane.as_mut() {
            *p = PxPlane::from_core(&s.plane);
        }
        Ok(())
    })
}

/// Ground-truth maps selectable through `px_sample_map`.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxSampleMap {
    Gamma = 0,
    Depth = 1,
    Height = 2,
}

/// New handle holding a copy of one ground-truth scalar map; `which` is a `PxSampleMap` value.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_sample_map(sample: *const PxSample, which: i32, out_map: *mut *mut PxScalarMap) -> PxStatus {
    guard(|| {
        let s = &deref(sample, "sample")?.0;
        let map = match which {
            w if w == PxSampleMap::Gamma as i32 => &s.gamma,
            w if w == PxSampleMap::Depth as i32 => &s.depth,
            w if w == PxSampleMap::Height as i32 => &s.height,
            w => return Err((PxStatus::InvalidParameter, format!("unknown sample map {w}"))),
        };
        *out(out_map, "out_map")? = boxed(PxScalarMap(map.clone()));
        Ok(())
    })
}

/// New handle holding a copy of the ground-truth residual flow.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_sample_residual_flow(sample: *const PxSample, out_flow: *mut *mut PxFlowField) -> PxStatus {
    guard(|| {
        let s = &deref(sample, "sample")?.0;
        *out(out_flow, "out_flow")? = boxed(PxFlowField(s.flow.clone()));
        Ok(())
    })
}
