//! Domain types shared across the engine.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One video in the pool: an opaque id, its visual feature vector, and
/// optional reference captions (the label oracle, hidden from acquisition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoExample {
    pub id: String,
    #[serde(default)]
    pub visual_feature: Vec<f64>,
    /// Reference captions as token sequences; present when this example can
    /// serve as a label oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<Vec<String>>>,
}

/// Lowercase a caption string and split on ASCII whitespace. Punctuation
/// stays attached to its token.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .to_lowercase()
        .split_ascii_whitespace()
        .map(str::to_string)
        .collect()
}

/// Canonical caption key: tokens joined by single spaces.
pub fn caption_key(tokens: &[String]) -> String {
    tokens.join(" ")
}

/// A generated caption with its log-likelihood score in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub logprob: f64,
}

impl Candidate {
    pub fn new(tokens: Vec<String>, logprob: f64) -> Result<Self> {
        if tokens.is_empty() {
            return Err(CoreError::data("candidate has no tokens"));
        }
        if !logprob.is_finite() {
            return Err(CoreError::data(format!(
                "candidate logprob is not finite: {logprob}"
            )));
        }
        Ok(Candidate { tokens, logprob })
    }
}

/// Where a candidate set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    /// Plain top-κ decode.
    Base,
    /// Decode of the feature perturbed toward the k-th nearest center.
    Fp(u32),
    /// Stochastic decoding pass p.
    Mp(u32),
    /// Union of a base set with perturbed sets.
    Merged,
}

impl Origin {
    pub fn as_tag(&self) -> String {
        match self {
            Origin::Base => "base".to_string(),
            Origin::Fp(k) => format!("fp:{k}"),
            Origin::Mp(p) => format!("mp:{p}"),
            Origin::Merged => "merged".to_string(),
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        if tag == "base" {
            return Ok(Origin::Base);
        }
        if let Some(k) = tag.strip_prefix("fp:") {
            let k = k
                .parse()
                .map_err(|_| CoreError::data(format!("bad origin tag: {tag}")))?;
            return Ok(Origin::Fp(k));
        }
        if let Some(p) = tag.strip_prefix("mp:") {
            let p = p
                .parse()
                .map_err(|_| CoreError::data(format!("bad origin tag: {tag}")))?;
            return Ok(Origin::Mp(p));
        }
        Err(CoreError::data(format!("bad origin tag: {tag}")))
    }
}

/// A video's generated candidates, ordered by descending logprob with ties
/// broken by lexicographic token order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub video_id: String,
    pub candidates: Vec<Candidate>,
    pub origin: Origin,
}

impl CandidateSet {
    /// Build a candidate set, re-establishing the ordering invariant.
    pub fn new(video_id: String, mut candidates: Vec<Candidate>, origin: Origin) -> Result<Self> {
        if candidates.is_empty() {
            return Err(CoreError::data(format!(
                "candidate set for {video_id} is empty"
            )));
        }
        for c in &candidates {
            if c.tokens.is_empty() {
                return Err(CoreError::data(format!(
                    "candidate with no tokens for {video_id}"
                )));
            }
            if !c.logprob.is_finite() {
                return Err(CoreError::data(format!(
                    "non-finite logprob for {video_id}"
                )));
            }
        }
        sort_candidates(&mut candidates);
        Ok(CandidateSet {
            video_id,
            candidates,
            origin,
        })
    }

    pub fn logprobs(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.logprob).collect()
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Descending logprob, ties by lexicographic token order.
pub fn sort_candidates(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        b.logprob
            .partial_cmp(&a.logprob)
            .expect("finite logprobs")
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

/// Labeled/unlabeled partition of the pool plus the iteration counter.
///
/// The two sets stay disjoint and their union constant; mutation is confined
/// to the loop orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub labeled: BTreeSet<String>,
    pub unlabeled: BTreeSet<String>,
    pub iteration: u32,
}

impl PoolState {
    pub fn new(labeled: BTreeSet<String>, unlabeled: BTreeSet<String>) -> Result<Self> {
        if let Some(id) = labeled.intersection(&unlabeled).next() {
            return Err(CoreError::data(format!(
                "id {id} is both labeled and unlabeled"
            )));
        }
        Ok(PoolState {
            labeled,
            unlabeled,
            iteration: 0,
        })
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Move queried ids from unlabeled to labeled.
    pub fn mark_labeled(&mut self, ids: &[String]) -> Result<()> {
        for id in ids {
            if !self.unlabeled.remove(id) {
                return Err(CoreError::data(format!(
                    "id {id} is not in the unlabeled set"
                )));
            }
            self.labeled.insert(id.clone());
        }
        Ok(())
    }
}
