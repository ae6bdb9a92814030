//! Dataset sample directories.
//!
//! ```text
//! calib.json            K and image size
//! pair.json             R, T (source to target), N, h_c (source frame), seed, label
//! source.ppm target.ppm
//! gt_gamma.pfm  gt_depth.pfm  gt_height.pfm     target grid, with <name>_mask.pgm
//! gt_flow.pfm   gt_flow_opt.pfm                 residual and total flow, with masks
//! road_mask.pgm                                 road pixels visible in both views
//! points.ply                                    labeled source-frame point cloud
//! ```

use std::fs;
use std::path::Path;

use super::pfm::{read_flow_field, read_scalar_map, write_flow_field, write_scalar_map};
use super::ply::{read_point_cloud, write_point_cloud};
use super::pnm::{read_image, read_mask, write_image, write_mask};
use super::read_bytes;
use super::scene::{CalibDoc, PairDoc};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PlaneParams, RigidMotion};
use crate::grid::{FlowField, Grid, Mask, ScalarMap};
use crate::imaging::Image;
use crate::plane_fit::PointCloud;
use crate::synth::{SceneSpec, View};

pub const SCALAR_MAPS: [&str; 3] = ["gt_gamma", "gt_depth", "gt_height"];
pub const FLOW_MAPS: [&str; 2] = ["gt_flow", "gt_flow_opt"];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    pub camera: CameraIntrinsics,
    pub motion: RigidMotion,
    pub plane: PlaneParams,
    pub seed: u64,
    pub label: String,
    pub source: Image,
    pub target: Image,
    pub gamma: ScalarMap,
    pub depth: ScalarMap,
    pub height: ScalarMap,
    /// Residual flow `p_t - H(p_s)`.
    pub flow: FlowField,
    /// Total flow `p_s - p_t`.
    pub flow_opt: FlowField,
    pub road: Mask,
    pub points: PointCloud,
}

impl DatasetSample {
    pub fn from_scene(scene: &SceneSpec) -> Result<Self> {
        let gt = scene.ground_truth()?;
        Ok(Self {
            camera: scene.camera,
            motion: scene.motion,
            plane: scene.plane,
            seed: scene.seed,
            label: scene.label.clone(),
            source: scene.render(View::Source)?.image,
            target: scene.render(View::Target)?.image,
            gamma: gt.gamma,
            depth: gt.depth,
            height: gt.height,
            flow: gt.flow_res,
            flow_opt: gt.flow_opt,
            road: gt.road,
            points: gt.points,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.check()?;
        fs::create_dir_all(dir)?;
        write_json(&dir.join("calib.json"), &CalibDoc::from(&self.camera))?;
        write_json(&dir.join("pair.json"), &PairDoc::new(&self.motion, &self.plane, self.seed, &self.label))?;
        write_image(&dir.join("source.ppm"), &self.source)?;
        write_image(&dir.join("target.ppm"), &self.target)?;
        for (name, map) in SCALAR_MAPS.iter().zip([&self.gamma, &self.depth, &self.height]) {
            write_scalar_map(&dir.join(format!("{name}.pfm")), map)?;
            write_mask(&dir.join(format!("{name}_mask.pgm")), &map.mask())?;
        }
        for (name, flow) in FLOW_MAPS.iter().zip([&self.flow, &self.flow_opt]) {
            write_flow_field(&dir.join(format!("{name}.pfm")), flow)?;
            write_mask(&dir.join(format!("{name}_mask.pgm")), &flow.mask())?;
        }
        write_mask(&dir.join("road_mask.pgm"), &self.road)?;
        write_point_cloud(&dir.join("points.ply"), &self.points)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let calib: CalibDoc = read_json(&dir.join("calib.json"))?;
        let pair: PairDoc = read_json(&dir.join("pair.json"))?;
        let masked_scalar = |name: &str| -> Result<ScalarMap> {
            let map = read_scalar_map(&dir.join(format!("{name}.pfm")))?;
            apply_mask(map, &read_mask(&dir.join(format!("{name}_mask.pgm")))?, name)
        };
        let masked_flow = |name: &str| -> Result<FlowField> {
            let flow = read_flow_field(&dir.join(format!("{name}.pfm")))?;
            apply_mask(flow, &read_mask(&dir.join(format!("{name}_mask.pgm")))?, name)
        };
        let sample = Self {
            camera: calib.camera()?,
            motion: pair.motion()?,
            plane: pair.plane()?,
            seed: pair.seed,
            label: pair.label,
            source: read_image(&dir.join("source.ppm"))?,
            target: read_image(&dir.join("target.ppm"))?,
            gamma: masked_scalar("gt_gamma")?,
            depth: masked_scalar("gt_depth")?,
            height: masked_scalar("gt_height")?,
            flow: masked_flow("gt_flow")?,
            flow_opt: masked_flow("gt_flow_opt")?,
            road: read_mask(&dir.join("road_mask.pgm"))?,
            points: read_point_cloud(&dir.join("points.ply"))?,
        };
        sample.check()?;
        Ok(sample)
    }

    /// Every raster must match the calibrated image size.
    pub fn check(&self) -> Result<()> {
        let (w, h) = (self.camera.width, self.camera.height);
        let sizes = [
            ("source.ppm", self.source.width(), self.source.height()),
            ("target.ppm", self.target.width(), self.target.height()),
            ("gt_gamma", self.gamma.width(), self.gamma.height()),
            ("gt_depth", self.depth.width(), self.depth.height()),
            ("gt_height", self.height.width(), self.height.height()),
            ("gt_flow", self.flow.width(), self.flow.height()),
            ("gt_flow_opt", self.flow_opt.width(), self.flow_opt.height()),
            ("road_mask", self.road.width(), self.road.height()),
        ];
        for (name, gw, gh) in sizes {
            if (gw, gh) != (w, h) {
                return Err(Error::IncongruentGrids(format!("{name} is {gw}x{gh}, calibration says {w}x{h}")));
            }
        }
        Ok(())
    }
}

fn apply_mask<T: Clone>(mut grid: Grid<T>, mask: &Mask, name: &str) -> Result<Grid<T>> {
    if !mask.same_size(grid.width(), grid.height()) {
        return Err(Error::IncongruentGrids(format!(
            "{name} is {}x{} but its mask is {}x{}",
            grid.width(),
            grid.height(),
            mask.width(),
            mask.height()
        )));
    }
    grid.restrict(mask)?;
    Ok(grid)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(fs::write(path, text)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&read_bytes(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene() -> SceneSpec {
        SceneSpec::standard_sized(64, 40, 5)
    }

    /// Float maps are stored as f32, so the lossless reference is the f32 cast.
    fn as_f32<T: Clone>(grid: &Grid<T>, f: impl Fn(&T) -> T) -> Grid<T> {
        let values = grid.values().iter().map(f).collect();
        Grid::from_parts(grid.width(), grid.height(), values, grid.valid().to_vec()).unwrap()
    }

    #[test]
    fn synthetic_sample_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sample = DatasetSample::from_scene(&small_scene()).unwrap();
        sample.write(dir.path()).unwrap();
        let back = DatasetSample::read(dir.path()).unwrap();

        assert_eq!(back.camera, sample.camera);
        assert_eq!(back.motion, sample.motion);
        assert_eq!(back.plane, sample.plane);
        assert_eq!((back.seed, back.label.as_str()), (sample.seed, sample.label.as_str()));
        for (a, b) in [(&back.gamma, &sample.gamma), (&back.depth, &sample.depth), (&back.height, &sample.height)] {
            assert_eq!(a.valid(), b.valid());
            let expected = as_f32(b, |v| *v as f32 as f64);
            for (x, y, v) in a.iter_valid() {
                assert_eq!(v.to_bits(), expected.value(x, y).to_bits());
            }
        }
        assert_eq!(back.flow.valid(), sample.flow.valid());
        assert_eq!(back.road, sample.road);
        assert_eq!(back.points, sample.points);
        for (a, b) in back.source.data().iter().zip(sample.source.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }

        // a second write of what was read is byte-identical
        let again = tempfile::tempdir().unwrap();
        back.write(again.path()).unwrap();
        for entry in fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = fs::read(dir.path().join(&name)).unwrap();
            let b = fs::read(again.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?}");
        }
    }

    #[test]
    fn missing_and_incongruent_files() {
        let dir = tempfile::tempdir().unwrap();
        let sample = DatasetSample::from_scene(&small_scene()).unwrap();
        sample.write(dir.path()).unwrap();

        fs::remove_file(dir.path().join("gt_gamma.pfm")).unwrap();
        assert!(matches!(DatasetSample::read(dir.path()), Err(Error::MissingFile(p)) if p.ends_with("gt_gamma.pfm")));

        sample.write(dir.path()).unwrap();
        write_scalar_map(&dir.path().join("gt_depth.pfm"), &ScalarMap::filled(10, 10, 1.0)).unwrap();
        assert!(matches!(DatasetSample::read(dir.path()), Err(Error::IncongruentGrids(_))));

        sample.write(dir.path()).unwrap();
        write_image(&dir.path().join("target.ppm"), &Image::new(8, 8, 3).unwrap()).unwrap();
        assert!(matches!(DatasetSample::read(dir.path()), Err(Error::IncongruentGrids(_))));
    }
}
