//! Closed-loop active-learning simulation engine for volumetric (3D)
//! segmentation.
//!
//! The crate implements a complete desk-scale AL pipeline: deterministic
//! synthetic dataset generation, a bootstrap-ensemble probabilistic
//! segmenter, voxel- and patch-level uncertainty scoring, a family of
//! query strategies (random baselines, top-k entropy/BALD, power- and
//! softrank-noised variants, and class-stratified scheduled-power
//! selection), a simulated annotator, and the statistical evaluation
//! suite (Dice, AUBC, FG-Eff, pairwise penalty matrices, Friedman /
//! Nemenyi rank analysis).
//!
//! Everything is seeded: the same configuration and seed produce
//! byte-identical run artifacts on every platform.

pub mod annotations;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod guidelines;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod patchscore;
pub mod rng;
pub mod segmenter;
pub mod strategies;
pub mod synthgen;
pub mod uncertainty;
pub mod volume;

pub use annotations::AnnotationState;
pub use config::ExperimentConfig;
pub use error::Error;
pub use geom::{Dims3, PatchBox};
pub use rng::RngStream;
pub use volume::{LabelVolume, ProbabilityField, VoxelGrid};
