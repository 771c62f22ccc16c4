//! Desk-scale laboratory for learning with noisy labels.
//!
//! The crate keeps a four-stage temporal memory of every sample's prediction
//! history, partitions the training set into clean / boundary / noisy
//! subsets from the memory's loss trajectories and dual-view agreement, and
//! supervises each subset with its own loss (cross-entropy, generalized
//! cross-entropy, symmetric KL consistency). A reproducible harness wires
//! the pieces into warm-up, per-epoch selection, differentiated training,
//! and memory updates, with offline replay and CSV/JSONL reporting.
//!
//! Module map:
//! - [`prob`]: probability vectors on the simplex.
//! - [`memory`]: the temporal memory store and its sliding update.
//! - [`selection`]: convergence/consistency metrics and the partition.
//! - [`losses`]: subset losses and logit-space gradients.
//! - [`model`]: dual-branch MLP with explicit backprop.
//! - [`corpus`]: synthetic data, label noise, augmentation, IDX loading.
//! - [`harness`]: experiment loop, replay, evaluation, reporting.
//! - [`selftest`]: executable property suites behind `selftest`.

pub mod config;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod logs;
pub mod losses;
pub mod memory;
pub mod model;
pub mod prob;
pub mod report;
pub mod seeding;
pub mod selection;
pub mod selftest;

pub use error::{Error, Result};
pub use prob::ProbDist;
