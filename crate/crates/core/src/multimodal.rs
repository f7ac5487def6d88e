//! Candidate-set expansion injecting visual-encoder uncertainty.
//!
//! Feature perturbation moves a video's visual feature by L2 magnitude ε
//! toward each of its K nearest visual-cluster centers and decodes captions
//! from every perturbed feature. Model perturbation collects extra
//! stochastic decoding passes. Either way the base candidates are kept,
//! duplicates across sets are retained (agreement mass is informative), and
//! the merged set feeds the semantics-aware entropy.

use crate::clustering::{self, ClusterModel};
use crate::error::{CoreError, Result};
use crate::generator::Generator;
use crate::types::{sort_candidates, Candidate, CandidateSet, Origin, VideoExample};

/// K-means model over visual-encoder outputs of the labeled pool.
#[derive(Debug, Clone)]
pub struct VisualClusterModel {
    pub inner: ClusterModel,
}

/// Feature-perturbation parameters.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationSpec {
    /// L2 norm of the perturbation vector.
    pub epsilon: f64,
    /// Perturb toward this many nearest centers.
    pub nearest_k: usize,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, nearest_k: usize) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(CoreError::InvalidConfig(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if nearest_k == 0 {
            return Err(CoreError::InvalidConfig("nearest_k must be >= 1".into()));
        }
        Ok(PerturbationSpec { epsilon, nearest_k })
    }
}

/// Cluster the visual features of the given (labeled) pool ids. Requested
/// cluster counts beyond the pool size are clamped by the fit.
pub fn fit_visual_clusters<G: Generator + ?Sized>(
    generator: &G,
    pool: &[VideoExample],
    visual_clusters: usize,
    seed: u64,
) -> Result<VisualClusterModel> {
    if pool.is_empty() {
        return Err(CoreError::data("fit_visual_clusters: no pool ids"));
    }
    if !generator.supports_visual() {
        return Err(CoreError::CapabilityMissing("visual features".into()));
    }
    let features: Vec<Vec<f64>> = pool
        .iter()
        .map(|v| generator.encode_visual(v))
        .collect::<Result<_>>()?;
    let inner = clustering::kmeans_fit(
        &features,
        visual_clusters,
        seed,
        clustering::DEFAULT_MAX_ITERS,
        clustering::DEFAULT_TOL,
    )?;
    Ok(VisualClusterModel { inner })
}

/// Perturbed copies of `feature`, one per nearest center:
/// `f' = (1 - ε)·f + ε·(c - f) / ‖f - c‖₂`. Centers closer than 1e-12 to the
/// feature are skipped and the next nearest substituted; errors only when
/// every center coincides.
pub fn perturb_feature(
    feature: &[f64],
    model: &VisualClusterModel,
    spec: &PerturbationSpec,
) -> Result<Vec<Vec<f64>>> {
    let centers = &model.inner.centers;
    if let Some(c) = centers.first() {
        if c.len() != feature.len() {
            return Err(CoreError::data(format!(
                "feature dimension {} does not match centers ({})",
                feature.len(),
                c.len()
            )));
        }
    }
    let ordered = clustering::nearest_centers(feature, &model.inner, centers.len())?;
    let mut out = Vec::with_capacity(spec.nearest_k);
    for idx in ordered {
        if out.len() == spec.nearest_k {
            break;
        }
        let center = &centers[idx];
        let diff: Vec<f64> = center.iter().zip(feature).map(|(c, f)| c - f).collect();
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        if dist < 1e-12 {
            continue;
        }
        let perturbed: Vec<f64> = feature
            .iter()
            .zip(&diff)
            .map(|(f, d)| (1.0 - spec.epsilon) * f + spec.epsilon * d / dist)
            .collect();
        out.push(perturbed);
    }
    if out.is_empty() {
        return Err(CoreError::data(
            "every cluster center coincides with the feature",
        ));
    }
    Ok(out)
}

fn merge(video_id: &str, parts: &[CandidateSet]) -> CandidateSet {
    let mut candidates: Vec<Candidate> = parts
        .iter()
        .flat_map(|cs| cs.candidates.iter().cloned())
        .collect();
    sort_candidates(&mut candidates);
    CandidateSet {
        video_id: video_id.to_string(),
        candidates,
        origin: Origin::Merged,
    }
}

/// Expansion result: the origin-tagged parts plus their merged union.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub parts: Vec<CandidateSet>,
    pub merged: CandidateSet,
}

/// Base decode plus a decode per perturbed feature, merged with duplicates
/// retained. Each candidate keeps the logprob from its own decode. `model`
/// may be `None` only when the generator replays stored perturbations.
pub fn expand_candidates_fp<G: Generator + ?Sized>(
    video: &VideoExample,
    generator: &G,
    model: Option<&VisualClusterModel>,
    spec: &PerturbationSpec,
    beam_width: usize,
) -> Result<Expansion> {
    let base = generator.generate(video, beam_width)?;
    let mut parts = vec![base];

    match generator.stored_fp_sets(&video.id, spec.nearest_k) {
        Some(stored) => {
            for (i, mut cs) in stored?.into_iter().enumerate() {
                cs.origin = Origin::Fp(i as u32 + 1);
                parts.push(cs);
            }
        }
        None => {
            let model = model.ok_or_else(|| {
                CoreError::CapabilityMissing("visual cluster model for feature perturbation".into())
            })?;
            let feature = generator.encode_visual(video)?;
            for (i, perturbed) in perturb_feature(&feature, model, spec)?.iter().enumerate() {
                let mut cs = generator.decode_from_feature(&video.id, perturbed, beam_width)?;
                cs.origin = Origin::Fp(i as u32 + 1);
                parts.push(cs);
            }
        }
    }

    let merged = merge(&video.id, &parts);
    Ok(Expansion { parts, merged })
}

/// Base decode plus one stochastic pass per p = 1..=passes, merged with
/// duplicates retained.
pub fn expand_candidates_mp<G: Generator + ?Sized>(
    video: &VideoExample,
    generator: &G,
    passes: usize,
    beam_width: usize,
) -> Result<Expansion> {
    if passes > 0 && !generator.supports_stochastic() {
        return Err(CoreError::CapabilityMissing("stochastic passes".into()));
    }
    let base = generator.generate(video, beam_width)?;
    let mut parts = vec![base];
    for p in 1..=passes {
        let mut cs = generator.stochastic_pass(video, beam_width, p as u32)?;
        cs.origin = Origin::Mp(p as u32);
        parts.push(cs);
    }
    let merged = merge(&video.id, &parts);
    Ok(Expansion { parts, merged })
}
