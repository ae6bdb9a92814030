//! JSON documents for calibration, the view pair and full scene descriptions.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PlaneParams, RigidMotion};
use crate::synth::{BoxSpec, SceneSpec};

fn rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
}

fn from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2])
}

/// `calib.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibDoc {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
}

impl From<&CameraIntrinsics> for CalibDoc {
    fn from(c: &CameraIntrinsics) -> Self {
        Self { width: c.width, height: c.height, k: rows(&c.matrix()) }
    }
}

impl CalibDoc {
    pub fn camera(&self) -> Result<CameraIntrinsics> {
        let k = &self.k;
        if k[0][1] != 0.0 || k[1][0] != 0.0 || k[2] != [0.0, 0.0, 1.0] {
            return Err(Error::InvalidParameter(format!("K must be a zero-skew pinhole matrix: {k:?}")));
        }
        CameraIntrinsics::new(k[0][0], k[1][1], k[0][2], k[1][2], self.width, self.height)
    }
}

/// `pair.json`: source-to-target motion and the source-frame road plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDoc {
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
    #[serde(rename = "N")]
    pub n: [f64; 3],
    pub h_c: f64,
    pub seed: u64,
    pub label: String,
}

impl PairDoc {
    pub fn new(motion: &RigidMotion, plane: &PlaneParams, seed: u64, label: &str) -> Self {
        let (t, n) = (motion.translation, plane.normal);
        Self {
            r: rows(&motion.rotation),
            t: [t.x, t.y, t.z],
            n: [n.x, n.y, n.z],
            h_c: plane.camera_height,
            seed,
            label: label.to_string(),
        }
    }

    pub fn motion(&self) -> Result<RigidMotion> {
        RigidMotion::new(from_rows(&self.r), Vector3::from(self.t))
    }

    pub fn plane(&self) -> Result<PlaneParams> {
        plane_from(self.n, self.h_c)
    }
}

/// Keeps an already-unit normal bit-exact; anything else is normalized.
fn plane_from(n: [f64; 3], h_c: f64) -> Result<PlaneParams> {
    let exact = PlaneParams { normal: Vector3::from(n), camera_height: h_c };
    if exact.validate().is_ok() {
        return Ok(exact);
    }
    PlaneParams::new(Vector3::from(n), h_c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDoc {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub texture: u32,
}

/// Complete scene description accepted by `gen --scene <file>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub calib: CalibDoc,
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
    #[serde(rename = "N")]
    pub n: [f64; 3],
    pub h_c: f64,
    pub plane_texture: u32,
    pub boxes: Vec<BoxDoc>,
    pub seed: u64,
    pub max_depth: f64,
    pub label: String,
}

impl From<&SceneSpec> for SceneDoc {
    fn from(s: &SceneSpec) -> Self {
        let pair = PairDoc::new(&s.motion, &s.plane, s.seed, &s.label);
        Self {
            calib: CalibDoc::from(&s.camera),
            r: pair.r,
            t: pair.t,
            n: pair.n,
            h_c: pair.h_c,
            plane_texture: s.plane_texture,
            boxes: s
                .boxes
                .iter()
                .map(|b| BoxDoc { center: b.center.into(), size: b.size.into(), texture: b.texture })
                .collect(),
            seed: s.seed,
            max_depth: s.max_depth,
            label: s.label.clone(),
        }
    }
}

impl SceneDoc {
    pub fn scene(&self) -> Result<SceneSpec> {
        let scene = SceneSpec {
            camera: self.calib.camera()?,
            motion: RigidMotion::new(from_rows(&self.r), Vector3::from(self.t))?,
            plane: plane_from(self.n, self.h_c)?,
            plane_texture: self.plane_texture,
            boxes: self
                .boxes
                .iter()
                .map(|b| BoxSpec { center: Vector3::from(b.center), size: Vector3::from(b.size), texture: b.texture })
                .collect(),
            seed: self.seed,
            max_depth: self.max_depth,
            label: self.label.clone(),
        };
        scene.validate()?;
        Ok(scene)
    }
}
