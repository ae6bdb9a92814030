use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth ({0})")]
    NonPositiveDepth(f64),
    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),
    #[error("homography maps point to infinity (denominator {0:e})")]
    MapsToInfinity(f64),
    #[error("parallax singularity: 1 - gamma*T_z/h_c = {0:e}")]
    ParallaxSingularity(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("homography is singular")]
    SingularHomography,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no consensus: best inlier count {found} below required {required}")]
    NoConsensus { found: usize, required: usize },
    #[error("pixel within {0} px of the epipole, gamma is unobservable")]
    EpipoleDegeneracy(f64),
    #[error("flow ratio too close to 1 (s = {0})")]
    SingularRatio(f64),
    #[error("in-image translation is zero")]
    ZeroTranslation,
    #[error("patch size {patch} invalid for a {width}x{height} image")]
    PatchTooLarge { patch: usize, width: usize, height: usize },
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("bucket selects no cells")]
    EmptyBucket,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed file header: {0}")]
    MalformedHeader(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("incongruent grids: {0}")]
    IncongruentGrids(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveDepth(_) => "NonPositiveDepth",
            Error::DegeneratePlane(_) => "DegeneratePlane",
            Error::MapsToInfinity(_) => "MapsToInfinity",
            Error::ParallaxSingularity(_) => "ParallaxSingularity",
            Error::GridMismatch(_) => "GridMismatch",
            Error::SingularHomography => "SingularHomography",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::NoConsensus { .. } => "NoConsensus",
            Error::EpipoleDegeneracy(_) => "EpipoleDegeneracy",
            Error::SingularRatio(_) => "SingularRatio",
            Error::ZeroTranslation => "ZeroTranslation",
            Error::PatchTooLarge { .. } => "PatchTooLarge",
            Error::EmptyMask => "EmptyMask",
            Error::EmptyBucket => "EmptyBucket",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::SizeMismatch(_) => "SizeMismatch",
            Error::MissingFile(_) => "MissingFile",
            Error::IncongruentGrids(_) => "IncongruentGrids",
            Error::Io(_) => "IoFailure",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
