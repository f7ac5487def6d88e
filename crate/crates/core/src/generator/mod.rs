//! Caption-generator contract and its two implementations: a synthetic
//! ground-truth generator for simulation, and a file-replay generator for
//! candidate dumps produced by a real model.

mod replay;
mod synthetic;

pub use replay::{replay_generate, CandidateDump, ReplayGenerator};
pub use synthetic::{
    build_world, SyntheticConfig, SyntheticGenerator, SyntheticWorld, CONCEPT_WORDS,
};

use crate::error::Result;
use crate::types::{CandidateSet, VideoExample};

/// The caption-generator capability set: an encoder from video to visual
/// feature, a decoder from feature to candidates, their composition, a
/// dropout-analogue stochastic decode, and an update step.
///
/// `generate(v, k)` must equal `decode_from_feature(encode_visual(v), k)`
/// token for token, and `stochastic_pass` must be deterministic for a fixed
/// pass index. All outputs respect the `CandidateSet` ordering invariant.
pub trait Generator: Send + Sync {
    /// Top-κ decode for a video.
    fn generate(&self, video: &VideoExample, beam_width: usize) -> Result<CandidateSet>;

    /// Visual-encoder output.
    fn encode_visual(&self, video: &VideoExample) -> Result<Vec<f64>>;

    /// Decode κ candidates from a (possibly perturbed) visual feature. The
    /// `video_id` labels the output set and must not influence the decode.
    fn decode_from_feature(
        &self,
        video_id: &str,
        feature: &[f64],
        beam_width: usize,
    ) -> Result<CandidateSet>;

    /// One stochastic decoding pass; varies with `pass` but is reproducible
    /// per pass index.
    fn stochastic_pass(
        &self,
        video: &VideoExample,
        beam_width: usize,
        pass: u32,
    ) -> Result<CandidateSet>;

    /// Pre-recorded feature-perturbation decodes for a video, when the
    /// generator replays a dump instead of decoding live. `None` means the
    /// caller should perturb and decode itself.
    fn stored_fp_sets(
        &self,
        video_id: &str,
        nearest_k: usize,
    ) -> Option<Result<Vec<CandidateSet>>> {
        let _ = (video_id, nearest_k);
        None
    }

    /// Whether perturbation decodes come pre-recorded (no visual cluster
    /// model is needed then).
    fn has_stored_fp(&self) -> bool {
        false
    }

    /// Improve the model with the accumulated labeled examples.
    fn update(&mut self, labeled: &[VideoExample]) -> Result<()>;

    /// Whether `encode_visual` works for pool videos.
    fn supports_visual(&self) -> bool;

    /// Whether the feature-perturbation expansion is available.
    fn supports_feature_perturbation(&self) -> bool;

    /// Whether `stochastic_pass` is available.
    fn supports_stochastic(&self) -> bool;
}
