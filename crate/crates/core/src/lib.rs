//! Robust node classification on poisoned graphs.
//!
//! The defense trains a two-layer GCN in two stages: the model is first fit on
//! node attributes alone (no propagation, so a poisoned adjacency cannot
//! influence it), then fine-tuned with propagation enabled together with a
//! contrastive term against inter-class attribute augmentations.
//!
//! Modules, bottom-up:
//! - [`numeric`]: dense/sparse kernels, hand-derived gradients, Adam, gradient checks
//! - [`graph`]: dataset representation, on-disk format, splits, normalization
//! - [`trainer`]: the two-stage defense, baselines and ablation variants
//! - [`attacks`]: structural poisoning attacks under an edge-flip budget
//! - [`bench`]: seeded experiments, timing and reports

pub mod attacks;
pub mod bench;
pub mod error;
pub mod graph;
pub mod numeric;
pub mod rng;
pub mod trainer;

pub use error::{Result, SfrError};
pub use rng::RngState;
