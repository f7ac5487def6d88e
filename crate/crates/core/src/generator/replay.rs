//! Replay of pre-computed candidate dumps.
//!
//! A dump holds, per video, the base beam candidates and optionally
//! perturbed variants keyed by origin ("fp:<k>" / "mp:<p>") plus the visual
//! feature. Nothing is fabricated: a missing capability surfaces as an error
//! rather than an approximation, and `update` is a no-op because the dump
//! reflects one frozen model.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::types::{CandidateSet, Origin, VideoExample};

use super::Generator;

/// In-memory candidate dump, indexed by video id and origin.
#[derive(Debug, Clone, Default)]
pub struct CandidateDump {
    base: BTreeMap<String, CandidateSet>,
    fp: BTreeMap<String, BTreeMap<u32, CandidateSet>>,
    mp: BTreeMap<String, BTreeMap<u32, CandidateSet>>,
    features: BTreeMap<String, Vec<f64>>,
}

impl CandidateDump {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, set: CandidateSet, feature: Option<Vec<f64>>) -> Result<()> {
        let id = set.video_id.clone();
        match set.origin {
            Origin::Base => {
                if self.base.insert(id.clone(), set).is_some() {
                    return Err(CoreError::data(format!("duplicate base row for {id}")));
                }
            }
            Origin::Fp(k) => {
                if self.fp.entry(id.clone()).or_default().insert(k, set).is_some() {
                    return Err(CoreError::data(format!("duplicate fp:{k} row for {id}")));
                }
            }
            Origin::Mp(p) => {
                if self.mp.entry(id.clone()).or_default().insert(p, set).is_some() {
                    return Err(CoreError::data(format!("duplicate mp:{p} row for {id}")));
                }
            }
            Origin::Merged => {
                return Err(CoreError::data(format!(
                    "dump rows must carry a base/fp/mp origin, got merged for {id}"
                )));
            }
        }
        if let Some(f) = feature {
            if let Some(existing) = self.features.get(&id) {
                if existing != &f {
                    return Err(CoreError::data(format!(
                        "conflicting visual features for {id}"
                    )));
                }
            } else {
                self.features.insert(id, f);
            }
        }
        Ok(())
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.base.keys().cloned().collect()
    }

    pub fn has_features(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn has_fp_rows(&self) -> bool {
        !self.fp.is_empty()
    }

    pub fn has_mp_rows(&self) -> bool {
        !self.mp.is_empty()
    }
}

/// Look up a video's stored candidates, truncated to the top `beam_width`
/// after re-sorting. Fewer stored candidates than requested is not padded.
pub fn replay_generate(
    dump: &CandidateDump,
    video_id: &str,
    beam_width: usize,
) -> Result<CandidateSet> {
    let row = dump
        .base
        .get(video_id)
        .ok_or_else(|| CoreError::UnknownVideo(video_id.to_string()))?;
    Ok(truncate(row, beam_width))
}

fn truncate(set: &CandidateSet, beam_width: usize) -> CandidateSet {
    // Construction already sorted the row; keep the top of the beam.
    let kept: Vec<_> = set.candidates.iter().take(beam_width).cloned().collect();
    CandidateSet {
        video_id: set.video_id.clone(),
        candidates: kept,
        origin: set.origin,
    }
}

/// Generator that replays a candidate dump.
#[derive(Debug, Clone)]
pub struct ReplayGenerator {
    dump: CandidateDump,
}

impl ReplayGenerator {
    pub fn new(dump: CandidateDump) -> Self {
        ReplayGenerator { dump }
    }

    pub fn dump(&self) -> &CandidateDump {
        &self.dump
    }
}

impl Generator for ReplayGenerator {
    fn generate(&self, video: &VideoExample, beam_width: usize) -> Result<CandidateSet> {
        replay_generate(&self.dump, &video.id, beam_width)
    }

    fn encode_visual(&self, video: &VideoExample) -> Result<Vec<f64>> {
        if let Some(f) = self.dump.features.get(&video.id) {
            return Ok(f.clone());
        }
        if !video.visual_feature.is_empty() {
            return Ok(video.visual_feature.clone());
        }
        Err(CoreError::CapabilityMissing(format!(
            "visual features (none stored for {})",
            video.id
        )))
    }

    fn decode_from_feature(
        &self,
        video_id: &str,
        _feature: &[f64],
        _beam_width: usize,
    ) -> Result<CandidateSet> {
        Err(CoreError::CapabilityMissing(format!(
            "decoding arbitrary features (dump replay for {video_id})"
        )))
    }

    fn stochastic_pass(
        &self,
        video: &VideoExample,
        beam_width: usize,
        pass: u32,
    ) -> Result<CandidateSet> {
        let row = self
            .dump
            .mp
            .get(&video.id)
            .and_then(|rows| rows.get(&pass))
            .ok_or_else(|| {
                CoreError::CapabilityMissing(format!("mp:{pass} rows for {}", video.id))
            })?;
        Ok(truncate(row, beam_width))
    }

    fn stored_fp_sets(
        &self,
        video_id: &str,
        nearest_k: usize,
    ) -> Option<Result<Vec<CandidateSet>>> {
        let rows = match self.dump.fp.get(video_id) {
            Some(rows) => rows,
            None => {
                return Some(Err(CoreError::CapabilityMissing(format!(
                    "fp rows for {video_id}"
                ))))
            }
        };
        let mut sets = Vec::with_capacity(nearest_k);
        for k in 1..=nearest_k as u32 {
            match rows.get(&k) {
                Some(row) => sets.push(row.clone()),
                None => {
                    return Some(Err(CoreError::CapabilityMissing(format!(
                        "fp:{k} row for {video_id}"
                    ))))
                }
            }
        }
        Some(Ok(sets))
    }

    fn has_stored_fp(&self) -> bool {
        self.dump.has_fp_rows()
    }

    fn update(&mut self, _labeled: &[VideoExample]) -> Result<()> {
        // A dump reflects one frozen model; there is nothing to update.
        Ok(())
    }

    fn supports_visual(&self) -> bool {
        self.dump.has_features()
    }

    fn supports_feature_perturbation(&self) -> bool {
        self.dump.has_fp_rows()
    }

    fn supports_stochastic(&self) -> bool {
        self.dump.has_mp_rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{tokenize, Candidate};

    fn dump_with(n: usize) -> CandidateDump {
        let mut dump = CandidateDump::new();
        let candidates: Vec<Candidate> = (0..n)
            .map(|i| Candidate::new(tokenize(&format!("caption number {i}")), -(i as f64)).unwrap())
            .collect();
        dump.insert(
            CandidateSet::new("vid_a".into(), candidates, Origin::Base).unwrap(),
            None,
        )
        .unwrap();
        dump
    }

    #[test]
    fn full_beam_is_returned_when_available() {
        let dump = dump_with(10);
        let cs = replay_generate(&dump, "vid_a", 10).unwrap();
        assert_eq!(cs.len(), 10);
    }

    #[test]
    fn short_rows_are_not_padded() {
        let dump = dump_with(4);
        let cs = replay_generate(&dump, "vid_a", 10).unwrap();
        assert_eq!(cs.len(), 4);
    }

    #[test]
    fn single_beam_takes_the_top_candidate() {
        let dump = dump_with(5);
        let cs = replay_generate(&dump, "vid_a", 1).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs.candidates[0].logprob, 0.0);
    }

    #[test]
    fn missing_video_is_an_error() {
        let dump = dump_with(3);
        assert!(matches!(
            replay_generate(&dump, "vid_b", 3),
            Err(CoreError::UnknownVideo(_))
        ));
    }

    #[test]
    fn capabilities_follow_dump_contents() {
        let gen = ReplayGenerator::new(dump_with(3));
        assert!(!gen.supports_visual());
        assert!(!gen.supports_feature_perturbation());
        assert!(!gen.supports_stochastic());
        let video = VideoExample {
            id: "vid_a".into(),
            visual_feature: vec![],
            references: None,
        };
        assert!(gen.stochastic_pass(&video, 3, 1).is_err());
        assert!(gen.decode_from_feature("vid_a", &[0.0], 3).is_err());
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut dump = dump_with(3);
        let cs = CandidateSet::new(
            "vid_a".into(),
            vec![Candidate::new(tokenize("x"), -1.0).unwrap()],
            Origin::Base,
        )
        .unwrap();
        assert!(dump.insert(cs, None).is_err());
    }
}
