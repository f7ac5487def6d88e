//! Per-video informativeness scores and deterministic top-B selection.
//!
//! Sequential entropy treats the top-κ beam candidates as the support of a
//! categorical distribution: the log-likelihood scores are softmax-normalized
//! and the Shannon entropy of the result is the score. The semantics-aware
//! variant first groups the candidates by embedding them and clustering, so
//! that paraphrases contribute one outcome instead of inflating the entropy:
//! each cluster gets a score (max or mean of member logprobs), cluster
//! probabilities are the softmax of those scores, and the entropy is taken
//! over clusters.

use serde::{Deserialize, Serialize};

use crate::clustering;
use crate::config::{AcquisitionKind, SaseMode};
use crate::embedder::CaptionEmbedding;
use crate::error::{CoreError, Result};
use crate::seeds;
use crate::types::CandidateSet;

/// One video's informativeness value, with optional per-cluster breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub video_id: String,
    pub value: f64,
    pub kind: AcquisitionKind,
    /// Per-cluster (score, probability) pairs, indexed by cluster, for the
    /// semantics-aware kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Vec<(f64, f64)>>,
}

/// Overflow-safe softmax: p_i = exp(s_i - max) / sum_j exp(s_j - max).
pub fn normalize_scores(logprobs: &[f64]) -> Result<Vec<f64>> {
    if logprobs.is_empty() {
        return Err(CoreError::data("normalize_scores: empty input"));
    }
    if logprobs.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::data("normalize_scores: non-finite input"));
    }
    let m = logprobs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logprobs.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Shannon entropy in nats of a probability vector; 0·ln 0 terms are 0.
fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Entropy of the softmax-normalized candidate logprobs.
pub fn sequential_entropy(cs: &CandidateSet) -> Result<AcquisitionScore> {
    let probs = normalize_scores(&cs.logprobs())?;
    Ok(AcquisitionScore {
        video_id: cs.video_id.clone(),
        value: entropy(&probs),
        kind: AcquisitionKind::Se,
        detail: None,
    })
}

/// Arithmetic mean of the candidate logprobs. This kind ranks ascending:
/// lowest mean likelihood is queried first.
pub fn mean_likelihood_score(cs: &CandidateSet) -> AcquisitionScore {
    let logprobs = cs.logprobs();
    let value = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    AcquisitionScore {
        video_id: cs.video_id.clone(),
        value,
        kind: AcquisitionKind::MeanLikelihood,
        detail: None,
    }
}

/// Semantics-aware sequential entropy over embedding clusters.
///
/// The requested cluster count is clamped to the number of distinct
/// embedding vectors, so duplicate captions always land in one cluster.
pub fn sase_entropy(
    cs: &CandidateSet,
    embeddings: &[CaptionEmbedding],
    c: usize,
    mode: SaseMode,
    seed: u64,
) -> Result<AcquisitionScore> {
    if embeddings.len() != cs.candidates.len() {
        return Err(CoreError::data(format!(
            "sase: {} embeddings for {} candidates",
            embeddings.len(),
            cs.candidates.len()
        )));
    }
    if c == 0 {
        return Err(CoreError::data("sase: cluster count must be >= 1"));
    }
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.vector.clone()).collect();
    let model = clustering::kmeans_fit(
        &points,
        c,
        seed,
        clustering::DEFAULT_MAX_ITERS,
        clustering::DEFAULT_TOL,
    )?;

    let realized = model.num_clusters();
    let mut cluster_scores = vec![f64::NEG_INFINITY; realized];
    let mut cluster_sums = vec![0.0; realized];
    let mut cluster_counts = vec![0usize; realized];
    for (i, cand) in cs.candidates.iter().enumerate() {
        let j = model.assignments[i];
        cluster_scores[j] = cluster_scores[j].max(cand.logprob);
        cluster_sums[j] += cand.logprob;
        cluster_counts[j] += 1;
    }
    let scores: Vec<f64> = match mode {
        SaseMode::Max => cluster_scores,
        SaseMode::Mean => cluster_sums
            .iter()
            .zip(&cluster_counts)
            .map(|(s, &n)| s / n as f64)
            .collect(),
    };
    let probs = normalize_scores(&scores)?;
    let kind = AcquisitionKind::Sase;
    Ok(AcquisitionScore {
        video_id: cs.video_id.clone(),
        value: entropy(&probs),
        kind,
        detail: Some(scores.into_iter().zip(probs).collect()),
    })
}

/// Seeded uniform scores for the random-sampling baseline; a pure function
/// of (id, seed).
pub fn random_scores(ids: &[String], seed: u64) -> Result<Vec<AcquisitionScore>> {
    if ids.is_empty() {
        return Err(CoreError::data("random_scores: no ids"));
    }
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    Ok(sorted
        .into_iter()
        .map(|id| {
            let draw = seeds::mix(&[seed, seeds::hash_str(id)]);
            // 53 high bits -> uniform in [0, 1).
            let value = (draw >> 11) as f64 / (1u64 << 53) as f64;
            AcquisitionScore {
                video_id: id.clone(),
                value,
                kind: AcquisitionKind::Random,
                detail: None,
            }
        })
        .collect())
}

/// Sort scores (descending, or ascending for the least-likelihood baseline),
/// break ties by ascending video id, and return the first `b` ids.
pub fn rank_and_select(scores: &[AcquisitionScore], b: usize) -> Result<Vec<String>> {
    if b > scores.len() {
        return Err(CoreError::data(format!(
            "cannot select {b} from {} scores",
            scores.len()
        )));
    }
    let Some(first) = scores.first() else {
        return Ok(Vec::new());
    };
    if scores.iter().any(|s| s.kind != first.kind) {
        return Err(CoreError::data("rank_and_select: mixed score kinds"));
    }
    let ascending = first.kind.ranks_ascending();
    let mut order: Vec<&AcquisitionScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        let by_value = if ascending {
            a.value.partial_cmp(&b.value)
        } else {
            b.value.partial_cmp(&a.value)
        };
        by_value
            .expect("finite score values")
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    Ok(order.into_iter().take(b).map(|s| s.video_id.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::embed_caption;
    use crate::types::{tokenize, Candidate, Origin};
    use proptest::prelude::*;

    fn set(logprobs: &[f64]) -> CandidateSet {
        let candidates = logprobs
            .iter()
            .enumerate()
            .map(|(i, &lp)| Candidate::new(vec![format!("tok{i}")], lp).unwrap())
            .collect();
        CandidateSet::new("v".into(), candidates, Origin::Base).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(normalize_scores(&[-3.2]).unwrap(), vec![1.0]);

        let equal = normalize_scores(&[-1.0, -1.0, -1.0]).unwrap();
        for p in &equal {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }

        // exp = (1, 3) after shifting -> probabilities (0.25, 0.75).
        let p = normalize_scores(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);

        assert!(normalize_scores(&[]).is_err());
        assert!(normalize_scores(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn softmax_sums_to_one_under_extreme_scores() {
        let p = normalize_scores(&[1000.0, 999.0, -1000.0]).unwrap();
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_has_zero_entropy() {
        let cs = set(&[-2.0]);
        assert_eq!(sequential_entropy(&cs).unwrap().value, 0.0);
    }

    #[test]
    fn uniform_candidates_hit_the_entropy_ceiling() {
        let cs = set(&[-1.5; 10]);
        let h = sequential_entropy(&cs).unwrap().value;
        assert!((h - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn skewed_pair_matches_hand_computation() {
        // p = (0.25, 0.75) -> H = -0.25 ln 0.25 - 0.75 ln 0.75 = 0.562335.
        let cs = set(&[0.0, 3f64.ln()]);
        let h = sequential_entropy(&cs).unwrap().value;
        assert!((h - 0.562335).abs() < 1e-6, "h = {h}");
    }

    #[test]
    fn mean_likelihood_examples() {
        assert_eq!(mean_likelihood_score(&set(&[-1.0, -1.0])).value, -1.0);
        assert_eq!(
            mean_likelihood_score(&set(&[-0.5, -1.5, -2.5])).value,
            -1.5
        );
        assert_eq!(mean_likelihood_score(&set(&[-3.0])).value, -3.0);
    }

    fn embeds(captions: &[&str]) -> Vec<CaptionEmbedding> {
        captions
            .iter()
            .map(|c| embed_caption(&tokenize(c)).unwrap())
            .collect()
    }

    fn sase_set(captions: &[&str], logprobs: &[f64]) -> CandidateSet {
        let candidates = captions
            .iter()
            .zip(logprobs)
            .map(|(c, &lp)| Candidate::new(tokenize(c), lp).unwrap())
            .collect();
        CandidateSet::new("v".into(), candidates, Origin::Base).unwrap()
    }

    #[test]
    fn one_cluster_means_zero_sase() {
        let cs = sase_set(&["a b", "c d", "e f"], &[-1.0, -1.2, -1.4]);
        let emb = embeds(&["a b", "c d", "e f"]);
        for mode in [SaseMode::Max, SaseMode::Mean] {
            let s = sase_entropy(&cs, &emb, 1, mode, 0).unwrap();
            assert_eq!(s.value, 0.0);
            let detail = s.detail.unwrap();
            assert_eq!(detail.len(), 1);
            assert!((detail[0].1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn paraphrase_pair_collapses_to_one_outcome() {
        // Two identical captions + one distinct, equal logprobs, C=2:
        // max-mode cluster scores are equal -> p = (1/2, 1/2), H = ln 2,
        // versus SE = ln 3 on the same set.
        let caps = ["a man is running", "a man is running", "stock charts"];
        let cs = sase_set(&caps, &[-1.0, -1.0, -1.0]);
        let emb = embeds(&caps);
        let s = sase_entropy(&cs, &emb, 2, SaseMode::Max, 0).unwrap();
        assert!((s.value - 2f64.ln()).abs() < 1e-9, "H = {}", s.value);
        let se = sequential_entropy(&cs).unwrap().value;
        assert!((se - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_mode_matches_hand_softmax() {
        // Clusters with member logprobs {0, ln 3} and {0}: mean scores are
        // (ln(3)/2, 0) -> p ~ (0.63397, 0.36603), H ~ 0.65680 nats.
        let caps = ["a man is running", "a man is running", "stock charts"];
        let cs = sase_set(&caps, &[3f64.ln(), 0.0, 0.0]);
        // The duplicate-caption cluster holds logprobs {ln 3, 0}; the
        // distinct caption is its own cluster with {0}.
        let emb = embeds(&caps);
        let s = sase_entropy(&cs, &emb, 2, SaseMode::Mean, 0).unwrap();
        assert!((s.value - 0.65680).abs() < 1e-5, "H = {}", s.value);
        let detail = s.detail.unwrap();
        let mut probs: Vec<f64> = detail.iter().map(|d| d.1).collect();
        probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((probs[0] - 0.36603).abs() < 1e-5);
        assert!((probs[1] - 0.63397).abs() < 1e-5);
    }

    #[test]
    fn singleton_clusters_collapse_sase_to_se() {
        let caps = ["a b c", "d e f", "g h i", "j k l"];
        let cs = sase_set(&caps, &[-0.3, -0.9, -1.7, -2.2]);
        let emb = embeds(&caps);
        let se = sequential_entropy(&cs).unwrap().value;
        for mode in [SaseMode::Max, SaseMode::Mean] {
            let s = sase_entropy(&cs, &emb, 4, mode, 99).unwrap();
            assert!((s.value - se).abs() < 1e-9);
        }
    }

    #[test]
    fn sase_rejects_count_mismatch() {
        let cs = sase_set(&["a", "b"], &[-1.0, -2.0]);
        let emb = embeds(&["a"]);
        assert!(sase_entropy(&cs, &emb, 2, SaseMode::Max, 0).is_err());
    }

    #[test]
    fn duplicate_absorption_under_max_mode() {
        // Adding an exact duplicate candidate leaves max-mode cluster scores
        // unchanged, while SE on the augmented set strictly increases.
        let caps = ["a man is running", "stock charts rise"];
        let cs = sase_set(&caps, &[-1.0, -1.5]);
        let emb = embeds(&caps);
        let base = sase_entropy(&cs, &emb, 2, SaseMode::Max, 0).unwrap();
        let se_base = sequential_entropy(&cs).unwrap().value;

        let caps2 = ["a man is running", "a man is running", "stock charts rise"];
        let cs2 = sase_set(&caps2, &[-1.0, -1.0, -1.5]);
        let emb2 = embeds(&caps2);
        let aug = sase_entropy(&cs2, &emb2, 2, SaseMode::Max, 0).unwrap();
        let se_aug = sequential_entropy(&cs2).unwrap().value;

        assert!((aug.value - base.value).abs() < 1e-12);
        assert!(se_aug > se_base + 1e-6);
    }

    #[test]
    fn ranking_follows_value_then_id() {
        let mk = |id: &str, v: f64| AcquisitionScore {
            video_id: id.into(),
            value: v,
            kind: AcquisitionKind::Se,
            detail: None,
        };
        let scores = vec![mk("a", 1.0), mk("b", 2.0), mk("c", 0.5)];
        assert_eq!(rank_and_select(&scores, 2).unwrap(), vec!["b", "a"]);

        let tied = vec![mk("b", 1.0), mk("a", 1.0)];
        assert_eq!(rank_and_select(&tied, 1).unwrap(), vec!["a"]);

        assert!(rank_and_select(&scores, 4).is_err());
    }

    #[test]
    fn mean_likelihood_ranks_ascending() {
        let mk = |id: &str, v: f64| AcquisitionScore {
            video_id: id.into(),
            value: v,
            kind: AcquisitionKind::MeanLikelihood,
            detail: None,
        };
        let scores = vec![mk("a", -3.0), mk("b", -1.0)];
        assert_eq!(rank_and_select(&scores, 1).unwrap(), vec!["a"]);
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let scores = vec![
            AcquisitionScore {
                video_id: "a".into(),
                value: 1.0,
                kind: AcquisitionKind::Se,
                detail: None,
            },
            AcquisitionScore {
                video_id: "b".into(),
                value: 1.0,
                kind: AcquisitionKind::Random,
                detail: None,
            },
        ];
        assert!(rank_and_select(&scores, 1).is_err());
    }

    #[test]
    fn random_scores_are_reproducible() {
        let ids: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
        let a = random_scores(&ids, 5).unwrap();
        let b = random_scores(&ids, 5).unwrap();
        assert_eq!(a, b);
        let full = rank_and_select(&a, ids.len()).unwrap();
        let mut sorted = full.clone();
        sorted.sort();
        let mut expect = ids.clone();
        expect.sort();
        assert_eq!(sorted, expect);
    }

    #[test]
    fn random_selections_differ_across_seed_pairs() {
        let ids: Vec<String> = (0..32).map(|i| format!("v{i:02}")).collect();
        for pair in 0..100u64 {
            let s1 = pair * 2 + 1;
            let s2 = pair * 2 + 2;
            let a = rank_and_select(&random_scores(&ids, s1).unwrap(), 8).unwrap();
            let b = rank_and_select(&random_scores(&ids, s2).unwrap(), 8).unwrap();
            assert_ne!(a, b, "seeds {s1} and {s2} collided");
        }
    }

    proptest! {
        #[test]
        fn entropy_bounds_hold(raw in proptest::collection::vec(-12.0f64..2.0, 1..12)) {
            let cs = set(&raw);
            let h = sequential_entropy(&cs).unwrap().value;
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (raw.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn shift_invariance(raw in proptest::collection::vec(-8.0f64..0.0, 2..10), c in -5.0f64..17.0) {
            let cs = set(&raw);
            let shifted_raw: Vec<f64> = raw.iter().map(|s| s + c).collect();
            let shifted = set(&shifted_raw);
            let h0 = sequential_entropy(&cs).unwrap().value;
            let h1 = sequential_entropy(&shifted).unwrap().value;
            prop_assert!((h0 - h1).abs() < 1e-9);
        }
    }
}
