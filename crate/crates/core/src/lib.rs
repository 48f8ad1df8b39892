//! Active image-based reconstruction toolkit.
//!
//! The crate reconstructs piecewise-planar surfaces from calibrated views with
//! a sparse linear inverse-depth solve, scores and fuses the per-view meshes,
//! evaluates how well the fused surface is covered by the captured views, and
//! plans next-best views plus collision-free paths to reach them. A synthetic
//! simulator closes the capture loop and provides ground truth.
//!
//! Module map:
//!
//! - [`geometry`]: cameras, barycentric coordinates, ray casting.
//! - [`meshing`]: over-segmentation, constrained Delaunay meshing with split
//!   vertices, support clustering.
//! - [`linear_mvs`]: per-view sparse least-squares depth solve.
//! - [`fusion`]: per-triangle confidence, multi-view fusion, merged surface.
//! - [`coverage`]: iso-point sampling and covered/uncovered classification.
//! - [`nbv`]: next-best-view search, occupancy grid and A* paths.
//! - [`sim`]: scenes, rendering, synthetic scene points, the closed loop and
//!   evaluation metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod config;
pub mod coverage;
pub mod fusion;
pub mod geometry;
pub mod linear_mvs;
pub mod meshing;
pub mod nbv;
pub mod ply;
pub mod sim;
pub mod view;

pub use config::Config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Solve(#[from] linear_mvs::SolveError),
    #[error(transparent)]
    Coverage(#[from] coverage::CoverageError),
    #[error(transparent)]
    Planning(#[from] nbv::PlanningError),
    #[error(transparent)]
    Eval(#[from] sim::EvalError),
    #[error("{stage} failed at iteration {iteration}: {source}")]
    Stage {
        stage: &'static str,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
