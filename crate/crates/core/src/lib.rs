//! Search over a scale-by-scale autoregressive generator.
//!
//! A generator emits an image as a sum of per-scale residual feature maps,
//! coarse to fine. This crate treats generation as a path search: run a
//! descending batch of candidate paths, keep structurally diverse candidates
//! at coarse scales (clustering on extracted embeddings), and reweight
//! candidates at fine scales by reward-tilted resampling. A synthetic
//! generator with a known target makes the whole pipeline testable at desk
//! scale, and an analytic cost model quantifies what the descending batch
//! costs relative to a fixed one.
//!
//! Everything is deterministic given a master seed: every random draw comes
//! from a stream derived from (master seed, slot, scale), so runs replay
//! bit-identically regardless of worker count.

pub mod analysis;
pub mod config;
pub mod costmodel;
pub mod error;
pub mod features;
pub mod generator;
pub mod orchestrator;
pub mod path;
pub mod record;
pub mod reward;
pub mod rng;
pub mod schedule;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
