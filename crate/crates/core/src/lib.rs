//! Monocular direct visual odometry with virtual-stereo depth constraints.
//!
//! The crate couples windowed photometric bundle adjustment with per-frame
//! left/right disparity predictions supplied from the outside (files, the
//! built-in variational refiner, or the synthetic renderer). Disparities are
//! used twice: to initialize inverse depths of new keyframe points at metric
//! scale, and as a *virtual stereo* photometric residual that keeps the
//! estimated depths consistent with the predicted right-view disparity during
//! bundle adjustment. The result is a single-camera odometry pipeline that
//! holds metric scale.
//!
//! The main pieces, bottom up:
//!
//! * [`geometry`] — pinhole camera model, SE(3) poses, inverse-depth points,
//!   disparity/inverse-depth conversion.
//! * [`image`] — grayscale images, box-filtered pyramids, bilinear sampling
//!   with analytic gradients.
//! * [`disparity`] — disparity maps, stereo warping, the left-right
//!   consistency filter, and candidate point selection.
//! * [`loss`] — the five-term semi-supervised disparity loss with analytic
//!   gradients and a gradient-descent disparity refiner.
//! * [`tracking`] — coarse-to-fine direct image alignment of new frames
//!   against the reference keyframe.
//! * [`backend`] — the windowed bundle adjuster: temporal and virtual-stereo
//!   residuals, Schur-complement solving, keyframe marginalization, and the
//!   full odometry pipeline.
//! * [`synth`] — a deterministic synthetic stereo renderer used as ground
//!   truth by the test suite and by `--synthetic` runs.
//! * [`eval`] — trajectory metrics (relative errors over 100–800 m
//!   intervals), Sim(3) alignment, and depth metrics.
//! * [`config`] — the TOML run configuration with all tunables.
//!
//! A narrative guide with runnable examples lives in the `book/` directory of
//! the repository; its code blocks are compiled and run as part of
//! `cargo test` (see `src/book.rs`).

pub mod backend;
pub mod config;
pub mod disparity;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod loss;
pub mod synth;
pub mod tracking;

#[cfg(doctest)]
mod book;

// pub use config::Config;
pub use geometry::{Intrinsics, Pose};
pub use image::{GrayImage, Pyramid};
