//! Pool-based active learning for sequence-generation (captioning) models.
//!
//! The engine ranks unlabeled videos by acquisition scores computed from a
//! caption generator's beam candidates — sequential entropy, semantics-aware
//! sequential entropy over caption clusters, and multimodal variants that
//! expand the candidate pool through visual feature perturbation or
//! stochastic decoding passes — then queries labels for the top scorers and
//! updates the generator, iterating under a fixed budget schedule.

pub mod acquisition;
pub mod clustering;
pub mod config;
pub mod embedder;
pub mod error;
pub mod generator;
pub mod io;
pub mod metrics;
pub mod multimodal;
pub mod pool;
pub mod runner;
pub mod seeds;
pub mod types;

pub use config::{AcquisitionKind, RunConfig, SaseMode};
pub use error::{CoreError, Result};
pub use types::{Candidate, CandidateSet, Origin, PoolState, VideoExample};

