//! Representation learning on pixel gridworlds.
//!
//! The crate builds a small experimental stack end to end:
//!
//! - [`gridworld`] — deterministic multi-square pixel MDP (render, step,
//!   exhaustive state enumeration).
//! - [`buffer`] — replay buffer collection from random walks, plus pair and
//!   triplet samplers under temporal or ground-truth supervision.
//! - [`nn`] — minimal dense/conv layers over flat `f64` parameter vectors
//!   with hand-written backprop and Adam.
//! - [`latentmodel`] — Gaussian encoder/decoder, the five loss variants
//!   (VAE, beta-VAE, Ada-GVAE, beta-TVAE, Ada-TVAE) and the training loop.
//! - [`metrics`] — ground-truth vs perceived distances, traversal distance
//!   matrices, Spearman rank correlation and the mutual information gap.
//! - [`agent`] — DQN over frozen encoder features for the corner-reaching
//!   task.
//! - [`experiments`] — config files, sweep orchestration, CSV results and
//!   PNG figures.
//!
//! Batch-level inner loops run through [`exec`], which is data-parallel via
//! rayon when the `parallel` feature (default) is enabled and falls back to
//! sequential iteration otherwise. Reductions are ordered, so results are
//! bit-identical either way.

pub mod agent;
pub mod buffer;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod gridworld;
pub mod latentmodel;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
