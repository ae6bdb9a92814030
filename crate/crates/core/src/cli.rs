//! `parallax` command-line front end. Every subcommand prints a JSON summary
//! on stdout; logs go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataio::sample::{read_json, write_json};
use crate::dataio::scene::{CalibDoc, PairDoc, SceneDoc};
use crate::dataio::{
    read_image, read_mask, read_point_cloud, read_scalar_map, read_flow_field, write_flow_field, write_image,
    write_mask, write_point_cloud, write_scalar_map, DatasetSample,
};
use crate::energy::{
    photometric_energy, smoothness_energy, sparse_gamma_energy, total_energy, EnergyParts, EnergyWeights,
};
use crate::error::{Error, Result};
use crate::geometry::{
    backproject, depth_from_gamma, height_from_gamma, homography_from_motion, residual_flow_map, CameraIntrinsics,
    PlaneParams, RigidMotion,
};
use crate::grid::{FlowField, GammaMap, Mask, ScalarMap};
use crate::imaging::{reconstruct_target_masked, warp_by_homography, Image};
use crate::metrics::{evaluate_pair, BucketSpec, EvalMaps};
use crate::plane_fit::{ransac_plane, PointCloud, RansacConfig};
use crate::solver::{block_match_flow_with, solve_gamma_map, BlockMatchConfig};
use crate::synth::SceneSpec;

#[derive(Debug, Parser)]
#[command(name = "parallax", version, about = "Road planar-parallax toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene into a sample directory.
    Gen(GenArgs),
    /// Fit the road plane to a PLY point cloud with RANSAC.
    FitPlane(FitPlaneArgs),
    /// Warp the source image onto the target with the road homography.
    Warp(WarpArgs),
    /// Recover gamma, depth and height from residual flow.
    Solve(SolveArgs),
    /// Turn a gamma map into depth, height, a point cloud and previews.
    Recon(ReconArgs),
    /// Score predicted maps against a sample's ground truth.
    Eval(EvalArgs),
    /// Evaluate the sparse, photometric and smoothness energies of a gamma map.
    Energy(EnergyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension {v:?}"));
        let (width, height) = (parse(w)?, parse(h)?);
        if width < 8 || height < 8 {
            return Err(format!("image must be at least 8x8, got {width}x{height}"));
        }
        Ok(Size { width, height })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowSource {
    BlockMatch,
    GroundTruth,
    File(PathBuf),
}

impl FromStr for FlowSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bm" => Ok(FlowSource::BlockMatch),
            "gt" => Ok(FlowSource::GroundTruth),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(FlowSource::File(PathBuf::from(p))),
                _ => Err(format!("expected bm, gt or file:<path>, got {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Standard,
    Random,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output sample directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene description (JSON); overrides --preset and --size.
    #[arg(long, conflicts_with_all = ["preset", "size"])]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Standard)]
    pub preset: Preset,
    /// Scene seed; with --scene it replaces the seed stored in the file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<Size>,
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    #[arg(long, default_value_t = 500)]
    pub ransac_iters: usize,
    /// Inlier distance (m).
    #[arg(long, default_value_t = 0.03)]
    pub ransac_thresh: f64,
    #[arg(long, default_value_t = 3)]
    pub min_inliers: usize,
}

#[derive(Debug, Args)]
pub struct FitPlaneArgs {
    #[arg(long)]
    pub points: PathBuf,
    /// Write the fitted plane here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare against the plane stored in this pair.json.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub ransac: RansacArgs,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_sm: f64,
}

impl WeightArgs {
    fn weights(&self) -> Result<EnergyWeights> {
        let w = EnergyWeights {
            lambda_s: self.lambda_s,
            lambda_p: self.lambda_p,
            lambda_sm: self.lambda_sm,
            alpha: self.alpha,
            beta: self.beta,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
}

/// Either a sample directory or explicit images plus calibration.
#[derive(Debug, Args)]
pub struct PairInput {
    #[arg(long, conflicts_with_all = ["source", "target", "calib", "pair"])]
    pub sample: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub source: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub target: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub calib: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub pair: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: PairInput,
    #[arg(long)]
    pub out: PathBuf,
    /// bm (block matching), gt (sample ground truth) or file:<path.pfm>.
    #[arg(long, default_value = "bm")]
    pub flow: FlowSource,
    /// Standard deviation (px) of Gaussian noise added to the flow.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub patch: usize,
    #[arg(long, default_value_t = 8)]
    pub radius: usize,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[arg(long)]
    pub gamma: PathBuf,
    /// Sample directory supplying calib.json and pair.json.
    #[arg(long, conflicts_with_all = ["calib", "pair"])]
    pub sample: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub calib: Option<PathBuf>,
    #[arg(long, required_unless_present = "sample")]
    pub pair: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BucketArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 1.0])]
    pub buckets_h: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 50.0, 80.0])]
    pub buckets_d: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding gamma.pfm / depth.pfm / height.pfm.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth sample directory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write metrics.json and metrics.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub buckets: BucketArgs,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub sample: PathBuf,
    #[arg(long)]
    pub gamma: PathBuf,
    /// Keep every n-th ground-truth gamma cell (per axis) for the sparse term.
    #[arg(long, default_value_t = 1)]
    pub sparse_stride: usize,
    #[command(flatten)]
    pub weights: WeightArgs,
}

/// Parses `args` (program name first), runs the command and writes the JSON
/// summary to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summaries serialize");
            let _ = writeln!(out, "{text}");
            0
        }
        Err(e) => {
            let report = json!({ "error": e.kind(), "message": e.to_string() });
            let _ = writeln!(err, "{report}");
            1
        }
    }
}

pub fn execute(command: &Command) -> Result<Value> {
    match command {
        Command::Gen(a) => gen(a),
        Command::FitPlane(a) => fit_plane(a),
        Command::Warp(a) => warp(a),
        Command::Solve(a) => solve(a),
        Command::Recon(a) => recon(a),
        Command::Eval(a) => eval(a),
        Command::Energy(a) => energy(a),
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn gen(a: &GenArgs) -> Result<Value> {
    let scene = match &a.scene {
        Some(path) => {
            let doc: SceneDoc = read_json(path)?;
            let mut scene = doc.scene()?;
            if let Some(seed) = a.seed {
                scene.seed = seed;
            }
            scene
        }
        None => {
            let seed = a.seed.unwrap_or(0);
            let Size { width, height } = a.size.unwrap_or(Size { width: 320, height: 192 });
            match a.preset {
                Preset::Standard => SceneSpec::standard_sized(width, height, seed),
                Preset::Random => SceneSpec::random_sized(width, height, seed),
            }
        }
    };
    log::info!("rendering {} ({}x{})", scene.label, scene.camera.width, scene.camera.height);
    let sample = DatasetSample::from_scene(&scene)?;
    sample.write(&a.out)?;
    write_json(&a.out.join("scene.json"), &SceneDoc::from(&scene))?;
    Ok(json!({
        "command": "gen",
        "out": a.out,
        "label": scene.label,
        "seed": scene.seed,
        "width": scene.camera.width,
        "height": scene.camera.height,
        "boxes": scene.boxes.len(),
        "valid_gamma": sample.gamma.valid_count(),
        "valid_flow": sample.flow.valid_count(),
        "road_pixels": sample.road.count(),
        "points": sample.points.len(),
    }))
}

/// Angle (degrees) between two unit normals.
fn normal_angle_deg(a: &PlaneParams, b: &PlaneParams) -> f64 {
    a.normal.dot(&b.normal).clamp(-1.0, 1.0).acos().to_degrees()
}

fn fit_plane(a: &FitPlaneArgs) -> Result<Value> {
    let cloud = read_point_cloud(&a.points)?;
    let cfg = RansacConfig {
        iterations: a.ransac.ransac_iters,
        inlier_threshold: a.ransac.ransac_thresh,
        min_inliers: a.ransac.min_inliers,
        seed: a.seed,
    };
    log::info!("fitting a plane to {} points", cloud.len());
    let fit = ransac_plane(&cloud, &cfg)?;
    let n = fit.plane.normal;
    let mut summary = json!({
        "command": "fit-plane",
        "N": [n.x, n.y, n.z],
        "h_c": fit.plane.camera_height,
        "inliers": fit.inlier_count,
        "points": cloud.len(),
        "rms": fit.rms,
    });
    if let Some(path) = &a.compare {
        let reference = read_json::<PairDoc>(path)?.plane()?;
        summary["angle_error_deg"] = json!(normal_angle_deg(&fit.plane, &reference));
        summary["h_c_error"] = json!((fit.plane.camera_height - reference.camera_height).abs());
    }
    if let Some(path) = &a.out {
        write_json(path, &summary)?;
    }
    Ok(summary)
}

fn mean_abs_diff(a: &Image, b: &Image, mask: &Mask) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if mask.get(x, y) {
                for (p, q) in a.pixel(x, y).iter().zip(b.pixel(x, y)) {
                    sum += (p - q).abs();
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn optional_energy(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyMask) => Ok(None),
        Err(e) => Err(e),
    }
}

fn warp(a: &WarpArgs) -> Result<Value> {
    let sample = DatasetSample::read(&a.sample)?;
    let h = homography_from_motion(&sample.camera, &sample.motion, &sample.plane)?;
    let (warped, mask) = warp_by_homography(&sample.source, &h)?;
    fs::create_dir_all(&a.out)?;
    write_image(&a.out.join("warped.ppm"), &warped)?;
    write_mask(&a.out.join("warped_mask.pgm"), &mask)?;
    let road = mask.and(&sample.road)?;
    Ok(json!({
        "command": "warp",
        "out": a.out,
        "valid": mask.count(),
        "photometric": optional_energy(photometric_energy(&sample.target, &warped, &mask, a.alpha))?,
        "road_photometric": optional_energy(photometric_energy(&sample.target, &warped, &road, a.alpha))?,
        "road_mae": mean_abs_diff(&sample.target, &warped, &road),
        "road_pixels": road.count(),
    }))
}

/// Geometry and images of a view pair, plus ground truth when read from a sample.
struct PairData {
    camera: CameraIntrinsics,
    motion: RigidMotion,
    plane: PlaneParams,
    source: Image,
    target: Image,
    sample: Option<DatasetSample>,
}

fn load_pair(input: &PairInput) -> Result<PairData> {
    if let Some(dir) = &input.sample {
        let s = DatasetSample::read(dir)?;
        return Ok(PairData {
            camera: s.camera,
            motion: s.motion,
            plane: s.plane,
            source: s.source.clone(),
            target: s.target.clone(),
            sample: Some(s),
        });
    }
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone().ok_or_else(|| Error::InvalidParameter(format!("--{what} is required without --sample")))
    };
    let camera = read_json::<CalibDoc>(&need(&input.calib, "calib")?)?.camera()?;
    let pair: PairDoc = read_json(&need(&input.pair, "pair")?)?;
    let source = read_image(&need(&input.source, "source")?)?;
    let target = read_image(&need(&input.target, "target")?)?;
    for (name, img) in [("source", &source), ("target", &target)] {
        if (img.width(), img.height()) != (camera.width, camera.height) {
            return Err(Error::IncongruentGrids(format!(
                "{name} image is {}x{}, calibration says {}x{}",
                img.width(),
                img.height(),
                camera.width,
                camera.height
            )));
        }
    }
    Ok(PairData { camera, motion: pair.motion()?, plane: pair.plane()?, source, target, sample: None })
}

fn add_noise(flow: &FlowField, sigma: f64, seed: u64) -> Result<FlowField> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = flow.clone();
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if let Some(u) = flow.get(x, y) {
                let n = Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
                noisy.set(x, y, u + n);
            }
        }
    }
    Ok(noisy)
}

fn write_map_with_mask(dir: &Path, name: &str, map: &ScalarMap) -> Result<()> {
    write_scalar_map(&dir.join(format!("{name}.pfm")), map)?;
    write_mask(&dir.join(format!("{name}_mask.pgm")), &map.mask())
}

fn solve(a: &SolveArgs) -> Result<Value> {
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise must be finite and nonnegative, got {}", a.noise)));
    }
    let data = load_pair(&a.input)?;
    let flow = match &a.flow {
        FlowSource::GroundTruth => match &data.sample {
            Some(s) => s.flow.clone(),
            None => return Err(Error::InvalidParameter("--flow gt needs --sample".into())),
        },
        FlowSource::File(path) => read_flow_field(path)?,
        FlowSource::BlockMatch => {
            let h = homography_from_motion(&data.camera, &data.motion, &data.plane)?;
            let (warped, mask) = warp_by_homography(&data.source, &h)?;
            let cfg = BlockMatchConfig { patch: a.patch, radius: a.radius, ..Default::default() };
            log::info!("block matching (patch {}, radius {})", cfg.patch, cfg.radius);
            block_match_flow_with(&warped, Some(&mask), &data.target, &cfg)?
        }
    };
    if (flow.width(), flow.height()) != (data.camera.width, data.camera.height) {
        return Err(Error::IncongruentGrids(format!(
            "flow is {}x{}, calibration says {}x{}",
            flow.width(),
            flow.height(),
            data.camera.width,
            data.camera.height
        )));
    }
    let flow = if a.noise > 0.0 { add_noise(&flow, a.noise, a.seed)? } else { flow };
    let report = solve_gamma_map(&flow, &data.motion, &data.plane, &data.camera)?;
    let target_plane = data.plane.in_target_frame(&data.motion)?;
    let depth = depth_from_gamma(&report.gamma, &target_plane, &data.camera)?;
    let height = height_from_gamma(&report.gamma, &depth)?;

    fs::create_dir_all(&a.out)?;
    write_map_with_mask(&a.out, "gamma", &report.gamma)?;
    write_map_with_mask(&a.out, "depth", &depth)?;
    write_map_with_mask(&a.out, "height", &height)?;
    write_flow_field(&a.out.join("flow.pfm"), &flow)?;
    write_mask(&a.out.join("flow_mask.pgm"), &flow.mask())?;
    let summary = json!({
        "command": "solve",
        "flow": match &a.flow {
            FlowSource::BlockMatch => "bm".to_string(),
            FlowSource::GroundTruth => "gt".to_string(),
            FlowSource::File(p) => format!("file:{}", p.display()),
        },
        "noise": a.noise,
        "seed": a.seed,
        "flow_cells": flow.valid_count(),
        "solved": report.solved,
        "degenerate_epipole": report.degenerate_epipole,
        "singular": report.singular,
        "depth_cells": depth.valid_count(),
    });
    write_json(&a.out.join("solver.json"), &summary)?;
    Ok(summary)
}

/// Blue (low) to red (high) ramp over `[lo, hi]`; invalid cells are black.
fn colorize(map: &ScalarMap) -> Result<Image> {
    let (lo, hi) = map.iter_valid().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (_, _, v)| (l.min(*v), h.max(*v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::from_fn(map.width(), map.height(), 3, |x, y, px| {
        if let Some(v) = map.get(x, y) {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            let ramp = |c: f64| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
            px.copy_from_slice(&[ramp(3.0), ramp(2.0), ramp(1.0)]);
        }
    })
}

fn recon(a: &ReconArgs) -> Result<Value> {
    let (calib_path, pair_path) = match &a.sample {
        Some(dir) => (dir.join("calib.json"), dir.join("pair.json")),
        None => (
            a.calib.clone().ok_or_else(|| Error::InvalidParameter("--calib is required without --sample".into()))?,
            a.pair.clone().ok_or_else(|| Error::InvalidParameter("--pair is required without --sample".into()))?,
        ),
    };
    let camera = read_json::<CalibDoc>(&calib_path)?.camera()?;
    let pair: PairDoc = read_json(&pair_path)?;
    let gamma = read_gamma(&a.gamma)?;
    let target_plane = pair.plane()?.in_target_frame(&pair.motion()?)?;
    let depth = depth_from_gamma(&gamma, &target_plane, &camera)?;
    let height = height_from_gamma(&gamma, &depth)?;

    let mut points = Vec::with_capacity(depth.valid_count());
    for (x, y, z) in depth.iter_valid() {
        points.push(backproject(&camera, Vector2::new(x as f64, y as f64), *z)?);
    }
    fs::create_dir_all(&a.out)?;
    write_map_with_mask(&a.out, "depth", &depth)?;
    write_map_with_mask(&a.out, "height", &height)?;
    write_point_cloud(&a.out.join("points.ply"), &PointCloud::new(points))?;
    write_image(&a.out.join("gamma.ppm"), &colorize(&gamma)?)?;
    write_image(&a.out.join("depth.ppm"), &colorize(&depth)?)?;
    write_image(&a.out.join("height.ppm"), &colorize(&height)?)?;
    let max_abs_height = height.iter_valid().map(|(_, _, h)| h.abs()).fold(0.0, f64::max);
    Ok(json!({
        "command": "recon",
        "out": a.out,
        "depth_cells": depth.valid_count(),
        "max_abs_height": max_abs_height,
    }))
}

/// A gamma PFM, restricted by its `<stem>_mask.pgm` sibling when present.
fn read_gamma(path: &Path) -> Result<GammaMap> {
    read_map_with_optional_mask(path)
}

fn read_map_with_optional_mask(path: &Path) -> Result<ScalarMap> {
    let mut map = read_scalar_map(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let mask_path = path.with_file_name(format!("{stem}_mask.pgm"));
    if mask_path.exists() {
        let mask = read_mask(&mask_path)?;
        if !mask.same_size(map.width(), map.height()) {
            return Err(Error::IncongruentGrids(format!("{} does not match its mask", path.display())));
        }
        map.restrict(&mask)?;
    }
    Ok(map)
}

fn eval(a: &EvalArgs) -> Result<Value> {
    let buckets = BucketSpec::new(a.buckets.buckets_h.clone(), a.buckets.buckets_d.clone())?;
    let gt = DatasetSample::read(&a.gt)?;
    let gamma_path = a.pred.join("gamma.pfm");
    let pred = EvalMaps {
        gamma: if gamma_path.exists() { Some(read_map_with_optional_mask(&gamma_path)?) } else { None },
        depth: read_map_with_optional_mask(&a.pred.join("depth.pfm"))?,
        height: read_map_with_optional_mask(&a.pred.join("height.pfm"))?,
    };
    for (name, map) in [("depth", &pred.depth), ("height", &pred.height)] {
        if !map.same_size(&gt.depth) {
            return Err(Error::IncongruentGrids(format!(
                "predicted {name} is {}x{}, ground truth is {}x{}",
                map.width(),
                map.height(),
                gt.depth.width(),
                gt.depth.height()
            )));
        }
    }
    let truth = EvalMaps { gamma: Some(gt.gamma.clone()), depth: gt.depth.clone(), height: gt.height.clone() };
    let report = evaluate_pair(&pred, &truth, &buckets, &gt.label)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), report.to_json()? + "\n")?;
        fs::write(dir.join("metrics.csv"), report.to_csv())?;
    }
    let mut summary = to_value(&report)?;
    summary["command"] = json!("eval");
    Ok(summary)
}

fn energy(a: &EnergyArgs) -> Result<Value> {
    let weights = a.weights.weights()?;
    if a.sparse_stride == 0 {
        return Err(Error::InvalidParameter("--sparse-stride must be at least 1".into()));
    }
    let sample = DatasetSample::read(&a.sample)?;
    let gamma = read_gamma(&a.gamma)?;
    if !gamma.same_size(&sample.gamma) {
        return Err(Error::IncongruentGrids(format!(
            "gamma is {}x{}, sample is {}x{}",
            gamma.width(),
            gamma.height(),
            sample.gamma.width(),
            sample.gamma.height()
        )));
    }
    let stride = a.sparse_stride;
    let sparse_ref = GammaMap::par_from_fn(gamma.width(), gamma.height(), |x, y| {
        (x % stride == 0 && y % stride == 0).then(|| sample.gamma.get(x, y).copied()).flatten()
    });
    let flow = residual_flow_map(&gamma, &sample.motion, &sample.plane, &sample.camera)?;
    let h = homography_from_motion(&sample.camera, &sample.motion, &sample.plane)?;
    let (warped, warp_mask) = warp_by_homography(&sample.source, &h)?;
    let (recon, recon_mask) = reconstruct_target_masked(&warped, Some(&warp_mask), &flow)?;
    let parts = EnergyParts {
        sparse: sparse_gamma_energy(&gamma, &sparse_ref)?,
        photometric: photometric_energy(&sample.target, &recon, &recon_mask, weights.alpha)?,
        smoothness: smoothness_energy(&flow, &sample.target, weights.beta)?,
    };
    Ok(json!({
        "command": "energy",
        "sparse": parts.sparse,
        "photometric": parts.photometric,
        "smoothness": parts.smoothness,
        "total": total_energy(&parts, &weights),
        "weights": to_value(&weights)?,
        "photometric_pixels": recon_mask.count(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_size_and_flow_source() {
        assert_eq!("64x40".parse::<Size>().unwrap(), Size { width: 64, height: 40 });
        assert!("64".parse::<Size>().is_err());
        assert!("4x4".parse::<Size>().is_err());
        assert_eq!("gt".parse::<FlowSource>().unwrap(), FlowSource::GroundTruth);
        assert_eq!("file:a/b.pfm".parse::<FlowSource>().unwrap(), FlowSource::File("a/b.pfm".into()));
        assert!("file:".parse::<FlowSource>().is_err());
        assert!("lk".parse::<FlowSource>().is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["parallax", "frobnicate"], &mut out, &mut err), 2);
        assert_eq!(run(["parallax", "solve", "--out", "x"], &mut out, &mut err), 2);
        assert_eq!(run(["parallax", "gen", "--out", "x", "--size", "3"], &mut out, &mut err), 2);
        assert!(out.is_empty());
    }

    #[test]
    fn domain_errors_exit_with_one_and_report_kind() {
        let dir = tempfile::tempdir().unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let missing = dir.path().join("nope");
        let code = run(["parallax".into(), "warp".into(), "--sample".into(), missing.into_os_string(), "--out".into(), dir.path().as_os_str().to_owned()], &mut out, &mut err);
        assert_eq!(code, 1);
        let report: Value = serde_json::from_slice(&err).unwrap();
        assert_eq!(report["error"], "MissingFile");
    }

    #[test]
    fn colorize_spans_blue_to_red() {
        let mut m = ScalarMap::empty(3, 1);
        m.set(0, 0, 0.0);
        m.set(2, 0, 1.0);
        let img = colorize(&m).unwrap();
        assert!(img.pixel(0, 0)[2] > img.pixel(0, 0)[0]);
        assert!(img.pixel(2, 0)[0] > img.pixel(2, 0)[2]);
        assert_eq!(img.pixel(1, 0), &[0.0, 0.0, 0.0]);
    }
}
