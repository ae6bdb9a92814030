//! Road planar-parallax toolkit.
//!
//! Computes the road-plane homography between two views, converts between
//! per-pixel parallax `gamma = h / Z` and residual flow, recovers depth and
//! height, scores reconstructions with photometric/sparse/smoothness
//! energies and bucketed metrics, and renders exact synthetic scenes that
//! act as ground truth for all of the above.

// `!(x > 0.0)` is used on purpose so NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod cli;
pub mod dataio;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod imaging;
pub mod metrics;
pub mod plane_fit;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
