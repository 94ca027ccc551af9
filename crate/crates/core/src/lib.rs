//! Hough-voting 6DoF pose estimation: keypoint selection, MeanShift voting,
//! least-squares pose fitting, ADD/ADD-S evaluation, and a simulator that
//! stands in for the per-point predictor.
//!
//! The guide in `book/` walks through the pipeline; its code blocks run as
//! doctests of this crate.

pub mod error;
pub mod geometry;
pub mod kdtree;
pub mod keypoints;
pub mod meanshift;
pub mod model_io;
pub mod metrics;
pub mod pose_fit;
pub mod scene;
pub mod shapes;
pub mod simulation;
pub mod voting;

pub use error::{Error, Result};

// Each book chapter is compiled as a module so `cargo test --doc` runs its
// snippets.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/poses.md")]
    mod poses {}
    #[doc = include_str!("../../../book/src/keypoints.md")]
    mod keypoints {}
    #[doc = include_str!("../../../book/src/voting.md")]
    mod voting {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/files.md")]
    mod files {}
}
