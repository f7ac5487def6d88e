//! Corpus caption metrics for learning curves: BLEU-4, ROUGE-L, CIDEr-D.
//!
//! Conventions follow the scorers used by the common captioning benchmarks:
//! corpus BLEU with clipped n-gram precisions (n = 1..4), per-sentence
//! closest-reference length (ties toward the shorter) and the usual brevity
//! penalty; ROUGE-L as the LCS F-measure with beta = 1.2 taking the max
//! precision and max recall over references; CIDEr-D with TF-IDF n-gram
//! cosines (n = 1..4), a length gaussian with sigma = 6, and the x10 scale.
//! METEOR is not computed (it needs external linguistic resources) and is
//! reported as null.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

const MAX_N: usize = 4;
const ROUGE_BETA: f64 = 1.2;
const CIDER_SIGMA: f64 = 6.0;

/// Corpus metric values plus the number of hypotheses evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    #[serde(rename = "ciderD")]
    pub cider_d: f64,
    /// Always null: METEOR needs synonym resources we do not ship.
    pub meteor: Option<f64>,
    pub count: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn check_pairs(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<()> {
    if hypotheses.len() != references.len() {
        return Err(CoreError::data(format!(
            "{} hypotheses vs {} reference lists",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(CoreError::data("no hypotheses to score"));
    }
    for (i, refs) in references.iter().enumerate() {
        if refs.is_empty() || refs.iter().any(|r| r.is_empty()) {
            return Err(CoreError::data(format!("empty reference for pair {i}")));
        }
        if hypotheses[i].is_empty() {
            return Err(CoreError::data(format!("empty hypothesis for pair {i}")));
        }
    }
    Ok(())
}

/// Corpus BLEU-4: geometric mean of clipped n-gram precisions with the
/// brevity penalty. Zero when any corpus-level precision is zero; the
/// smoothed variant instead adds one to numerator and denominator for
/// n >= 2.
pub fn bleu4(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    bleu4_impl(hypotheses, references, false)
}

pub fn bleu4_smoothed(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    bleu4_impl(hypotheses, references, true)
}

fn bleu4_impl(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    smooth: bool,
) -> Result<f64> {
    check_pairs(hypotheses, references)?;
    let mut correct = [0usize; MAX_N];
    let mut guess = [0usize; MAX_N];
    let mut test_len = 0usize;
    let mut ref_len = 0usize;

    for (hyp, refs) in hypotheses.iter().zip(references) {
        test_len += hyp.len();
        // Closest reference length, ties toward the shorter.
        ref_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(hyp.len()), l))
            .expect("non-empty references");

        for n in 1..=MAX_N {
            let hyp_counts = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (gram, count) in ngram_counts(r, n) {
                    let entry = max_ref.entry(gram).or_insert(0);
                    *entry = (*entry).max(count);
                }
            }
            for (gram, count) in &hyp_counts {
                correct[n - 1] += (*count).min(*max_ref.get(gram).unwrap_or(&0));
            }
            guess[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }

    let mut log_precision_sum = 0.0;
    for n in 0..MAX_N {
        let (num, den) = if smooth && n > 0 {
            (correct[n] as f64 + 1.0, guess[n] as f64 + 1.0)
        } else {
            (correct[n] as f64, guess[n] as f64)
        };
        if num == 0.0 || den == 0.0 {
            return Ok(0.0);
        }
        log_precision_sum += (num / den).ln();
    }

    let brevity = if test_len < ref_len {
        (1.0 - ref_len as f64 / test_len as f64).exp()
    } else {
        1.0
    };
    Ok(brevity * (log_precision_sum / MAX_N as f64).exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// ROUGE-L for one hypothesis against its references.
pub fn rouge_l(hypothesis: &[String], references: &[Vec<String>]) -> Result<f64> {
    if hypothesis.is_empty() || references.is_empty() || references.iter().any(|r| r.is_empty()) {
        return Err(CoreError::data("rouge_l: empty input"));
    }
    let mut prec_max: f64 = 0.0;
    let mut rec_max: f64 = 0.0;
    for r in references {
        let lcs = lcs_len(r, hypothesis) as f64;
        prec_max = prec_max.max(lcs / hypothesis.len() as f64);
        rec_max = rec_max.max(lcs / r.len() as f64);
    }
    if prec_max == 0.0 || rec_max == 0.0 {
        return Ok(0.0);
    }
    let beta_sq = ROUGE_BETA * ROUGE_BETA;
    Ok((1.0 + beta_sq) * prec_max * rec_max / (rec_max + beta_sq * prec_max))
}

/// Corpus ROUGE-L: mean of the per-hypothesis values.
pub fn rouge_l_corpus(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    check_pairs(hypotheses, references)?;
    let mut total = 0.0;
    for (hyp, refs) in hypotheses.iter().zip(references) {
        total += rouge_l(hyp, refs)?;
    }
    Ok(total / hypotheses.len() as f64)
}

/// One caption turned into per-n TF-IDF vectors. BTreeMaps keep float
/// summation order deterministic.
struct CiderVec {
    vecs: Vec<BTreeMap<Vec<String>, f64>>,
    norms: Vec<f64>,
    /// Bigram count, the length proxy the gaussian penalty uses.
    length: isize,
}

struct CiderIdf {
    doc_freq: HashMap<Vec<String>, usize>,
    log_corpus_size: f64,
}

impl CiderIdf {
    /// Document frequencies over the reference corpus: an n-gram counts once
    /// per item in whose references it appears.
    fn build(corpus: &[Vec<Vec<String>>]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(CoreError::data("cider_d: empty corpus"));
        }
        let mut doc_freq: HashMap<Vec<String>, usize> = HashMap::new();
        for refs in corpus {
            let mut seen: HashMap<&[String], ()> = HashMap::new();
            for r in refs {
                for n in 1..=MAX_N {
                    if r.len() >= n {
                        for gram in r.windows(n) {
                            seen.entry(gram).or_insert(());
                        }
                    }
                }
            }
            for gram in seen.keys() {
                *doc_freq.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        Ok(CiderIdf {
            doc_freq,
            log_corpus_size: (corpus.len() as f64).ln(),
        })
    }

    fn vectorize(&self, tokens: &[String]) -> CiderVec {
        let mut vecs = vec![BTreeMap::new(); MAX_N];
        let mut norms = vec![0.0; MAX_N];
        let mut length = 0isize;
        for n in 1..=MAX_N {
            let counts: BTreeMap<&[String], usize> = ngram_counts(tokens, n).into_iter().collect();
            for (gram, tf) in counts {
                let df = (*self.doc_freq.get(gram).unwrap_or(&0)).max(1) as f64;
                let weight = tf as f64 * (self.log_corpus_size - df.ln());
                norms[n - 1] += weight * weight;
                if n == 2 {
                    length += tf as isize;
                }
                vecs[n - 1].insert(gram.to_vec(), weight);
            }
        }
        for norm in norms.iter_mut() {
            *norm = norm.sqrt();
        }
        CiderVec {
            vecs,
            norms,
            length,
        }
    }
}

fn cider_sim(hyp: &CiderVec, reference: &CiderVec) -> f64 {
    let delta = (hyp.length - reference.length) as f64;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..MAX_N {
        let mut val = 0.0;
        for (gram, &w_hyp) in &hyp.vecs[n] {
            if let Some(&w_ref) = reference.vecs[n].get(gram) {
                // CIDEr-D clips the hypothesis weight at the reference's.
                val += w_hyp.min(w_ref) * w_ref;
            }
        }
        if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            val /= hyp.norms[n] * reference.norms[n];
        }
        total += val * penalty;
    }
    total / MAX_N as f64
}

/// Corpus CIDEr-D. `corpus` supplies the IDF statistics and is normally the
/// references of the evaluation set itself.
pub fn cider_d(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    corpus: &[Vec<Vec<String>>],
) -> Result<f64> {
    check_pairs(hypotheses, references)?;
    let idf = CiderIdf::build(corpus)?;
    let mut total = 0.0;
    for (hyp, refs) in hypotheses.iter().zip(references) {
        let hyp_vec = idf.vectorize(hyp);
        let mut score = 0.0;
        for r in refs {
            score += cider_sim(&hyp_vec, &idf.vectorize(r));
        }
        total += score / refs.len() as f64 * 10.0;
    }
    Ok(total / hypotheses.len() as f64)
}

/// All three metrics over one hypothesis/reference corpus.
pub fn evaluate_corpus(
    hypotheses: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<MetricReport> {
    Ok(MetricReport {
        bleu4: bleu4(hypotheses, references)?,
        rouge_l: rouge_l_corpus(hypotheses, references)?,
        cider_d: cider_d(hypotheses, references, references)?,
        meteor: None,
        count: hypotheses.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tokenize;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn corpus(pairs: &[(&str, &[&str])]) -> (Vec<Vec<String>>, Vec<Vec<Vec<String>>>) {
        let hyps = pairs.iter().map(|(h, _)| toks(h)).collect();
        let refs = pairs
            .iter()
            .map(|(_, rs)| rs.iter().map(|r| toks(r)).collect())
            .collect();
        (hyps, refs)
    }

    #[test]
    fn identical_corpora_score_one() {
        let (hyps, refs) = corpus(&[
            ("a man is running fast", &["a man is running fast"]),
            ("the dog barks at night", &["the dog barks at night"]),
        ]);
        assert!((bleu4(&hyps, &refs).unwrap() - 1.0).abs() < 1e-12);
        assert!((rouge_l_corpus(&hyps, &refs).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_corpora_score_zero() {
        let (hyps, refs) = corpus(&[("aa bb cc dd", &["ee ff gg hh"])]);
        assert_eq!(bleu4(&hyps, &refs).unwrap(), 0.0);
        assert_eq!(rouge_l_corpus(&hyps, &refs).unwrap(), 0.0);
        let cider = cider_d(&hyps, &refs, &refs).unwrap();
        assert_eq!(cider, 0.0);
    }

    #[test]
    fn rouge_matches_the_hand_built_lcs() {
        // hyp "a b c d" vs ref "a c b d": LCS length 3 -> P = R = 0.75 and
        // the F-measure collapses to 0.75.
        let score = rouge_l(&toks("a b c d"), &[toks("a c b d")]).unwrap();
        assert!((score - 0.75).abs() < 1e-12, "got {score}");
    }

    #[test]
    fn bleu_mismatched_lengths_error() {
        let (hyps, _) = corpus(&[("a b", &["a b"])]);
        assert!(bleu4(&hyps, &[]).is_err());
    }

    #[test]
    fn appending_a_perfect_pair_cannot_hurt_bleu() {
        let (mut hyps, mut refs) = corpus(&[
            ("a man is running very fast", &["a man is sprinting fast today"]),
            ("the cat sleeps on a mat", &["the cat sleeps on the mat"]),
        ]);
        let before = bleu4(&hyps, &refs).unwrap();
        hyps.push(toks("children play football in the park"));
        refs.push(vec![toks("children play football in the park")]);
        let after = bleu4(&hyps, &refs).unwrap();
        assert!(after >= before - 1e-12, "before {before}, after {after}");
    }

    #[test]
    fn permuting_the_corpus_changes_nothing() {
        let (hyps, refs) = corpus(&[
            ("a man rides a horse", &["a person rides a horse", "a man on a horse"]),
            ("a child eats an apple", &["a kid eats fruit"]),
            ("people dance in a hall", &["a crowd dances inside"]),
        ]);
        let (mut hyps_rev, mut refs_rev) = (hyps.clone(), refs.clone());
        hyps_rev.reverse();
        refs_rev.reverse();
        assert!(
            (bleu4(&hyps, &refs).unwrap() - bleu4(&hyps_rev, &refs_rev).unwrap()).abs() < 1e-12
        );
        assert!(
            (rouge_l_corpus(&hyps, &refs).unwrap()
                - rouge_l_corpus(&hyps_rev, &refs_rev).unwrap())
            .abs()
                < 1e-12
        );
        assert!(
            (cider_d(&hyps, &refs, &refs).unwrap()
                - cider_d(&hyps_rev, &refs_rev, &refs_rev).unwrap())
            .abs()
                < 1e-9
        );
    }

    #[test]
    fn cider_identity_peaks_for_its_corpus() {
        let (hyps, refs) = corpus(&[
            ("a man is running in the park", &["a man is running in the park"]),
            ("a woman cooks pasta at home", &["a woman cooks pasta at home"]),
            ("children play football on grass", &["children play football on grass"]),
        ]);
        let identity = cider_d(&hyps, &refs, &refs).unwrap();
        assert!((identity - 10.0).abs() < 1e-9, "identity = {identity}");

        let (worse, _) = corpus(&[
            ("a man is walking in the park", &[""]),
            ("a woman cooks rice at home", &[""]),
            ("children play chess on grass", &[""]),
        ]);
        let perturbed = cider_d(&worse, &refs, &refs).unwrap();
        assert!(perturbed < identity);
    }

    #[test]
    fn cider_singleton_corpus_identity_is_its_maximum() {
        // With one corpus item every IDF weight is ln(1) = 0, so every
        // hypothesis scores 0 and identity trivially attains the maximum.
        let (hyps, refs) = corpus(&[("a b c d e", &["a b c d e"])]);
        let identity = cider_d(&hyps, &refs, &refs).unwrap();
        let (other, _) = corpus(&[("x y z w v", &[""])]);
        let stranger = cider_d(&other, &refs, &refs).unwrap();
        assert!(identity >= stranger);
        assert_eq!(identity, 0.0);
    }

    #[test]
    fn smoothed_bleu_survives_missing_fourgrams() {
        let (hyps, refs) = corpus(&[("a man runs", &["a man is running fast"])]);
        assert_eq!(bleu4(&hyps, &refs).unwrap(), 0.0);
        let smoothed = bleu4_smoothed(&hyps, &refs).unwrap();
        assert!(smoothed > 0.0 && smoothed < 1.0);
    }

    #[test]
    fn report_ranges_hold_on_a_mixed_corpus() {
        let (hyps, refs) = corpus(&[
            ("a man is running", &["a person is running", "a man jogs"]),
            ("a dog chases a ball", &["the dog chases the ball"]),
            ("x y z", &["completely different words here"]),
        ]);
        let report = evaluate_corpus(&hyps, &refs).unwrap();
        assert!((0.0..=1.0).contains(&report.bleu4));
        assert!((0.0..=1.0).contains(&report.rouge_l));
        assert!(report.cider_d >= 0.0);
        assert_eq!(report.count, 3);
        assert!(report.meteor.is_none());
    }
}
