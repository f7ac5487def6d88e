//! Run configuration. A validated `RunConfig` plus the input files fully
//! determines a run.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Acquisition function selecting which videos to query next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    Random,
    Se,
    MeanLikelihood,
    Sase,
    MsaseFp,
    MsaseMp,
}

impl AcquisitionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AcquisitionKind::Random => "random",
            AcquisitionKind::Se => "se",
            AcquisitionKind::MeanLikelihood => "mean_likelihood",
            AcquisitionKind::Sase => "sase",
            AcquisitionKind::MsaseFp => "msase_fp",
            AcquisitionKind::MsaseMp => "msase_mp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(AcquisitionKind::Random),
            "se" => Ok(AcquisitionKind::Se),
            "mean_likelihood" => Ok(AcquisitionKind::MeanLikelihood),
            "sase" => Ok(AcquisitionKind::Sase),
            "msase_fp" => Ok(AcquisitionKind::MsaseFp),
            "msase_mp" => Ok(AcquisitionKind::MsaseMp),
            other => Err(CoreError::InvalidConfig(format!(
                "unknown acquisition: {other}"
            ))),
        }
    }

    /// Lowest score first? Only the least-likelihood baseline queries
    /// ascending; every other kind queries the highest scores.
    pub fn ranks_ascending(&self) -> bool {
        matches!(self, AcquisitionKind::MeanLikelihood)
    }
}

/// Per-cluster score aggregation for semantics-aware entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaseMode {
    /// Cluster score = highest member logprob.
    Max,
    /// Cluster score = mean member logprob (joint likelihood under
    /// independence, up to the 1/|cluster| factor).
    Mean,
}

/// All knobs of a run. The JSON config file mirrors these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; every other random decision derives from it.
    pub seed: u64,
    /// Beam width κ: candidates kept per decode.
    pub beam_width: usize,
    /// Number of caption clusters C for sase / msase scoring.
    pub caption_clusters: usize,
    pub sase_mode: SaseMode,
    pub acquisition: AcquisitionKind,
    /// L2 magnitude ε of a feature perturbation.
    pub epsilon: f64,
    /// How many nearest visual cluster centers to perturb toward.
    pub nearest_k: usize,
    /// Number of visual clusters fitted on the labeled pool.
    pub visual_clusters: usize,
    /// Stochastic decoding passes per video for model perturbation.
    pub dropout_passes: usize,
    /// Fraction of the pool labeled up front.
    pub seed_fraction: f64,
    /// Fraction of the pool queried per iteration.
    pub step_fraction: f64,
    /// Number of query iterations.
    pub iterations: u32,
    /// Replace each candidate logprob by logprob / token count before
    /// scoring. Off by default; external dumps with strongly
    /// length-correlated scores may need it.
    #[serde(default)]
    pub length_normalize: bool,
}

impl RunConfig {
    /// Defaults for a given acquisition: κ=10 beams, C=10 caption clusters
    /// (30 for the multimodal kinds, which score κ·(1+passes) candidates),
    /// ε=0.015 toward the 5 nearest of 300 visual clusters, 5 stochastic
    /// passes, and a 5% seed + 4×5% query schedule.
    pub fn defaults_for(acquisition: AcquisitionKind) -> Self {
        let caption_clusters = match acquisition {
            AcquisitionKind::MsaseFp | AcquisitionKind::MsaseMp => 30,
            _ => 10,
        };
        RunConfig {
            seed: 0,
            beam_width: 10,
            caption_clusters,
            sase_mode: SaseMode::Max,
            acquisition,
            epsilon: 0.015,
            nearest_k: 5,
            visual_clusters: 300,
            dropout_passes: 5,
            seed_fraction: 0.05,
            step_fraction: 0.05,
            iterations: 4,
            length_normalize: false,
        }
    }

    /// Check every invariant, reporting the first violated one by name.
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(CoreError::InvalidConfig("beam_width must be >= 1".into()));
        }
        if self.caption_clusters == 0 {
            return Err(CoreError::InvalidConfig(
                "caption_clusters must be >= 1".into(),
            ));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(CoreError::InvalidConfig(
                "epsilon must be finite and >= 0".into(),
            ));
        }
        if self.nearest_k == 0 {
            return Err(CoreError::InvalidConfig("nearest_k must be >= 1".into()));
        }
        if self.visual_clusters == 0 {
            return Err(CoreError::InvalidConfig(
                "visual_clusters must be >= 1".into(),
            ));
        }
        if self.nearest_k > self.visual_clusters {
            return Err(CoreError::InvalidConfig(format!(
                "nearest_k ({}) must not exceed visual_clusters ({})",
                self.nearest_k, self.visual_clusters
            )));
        }
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(CoreError::InvalidConfig(
                "seed_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(CoreError::InvalidConfig(
                "step_fraction must be in (0, 1]".into(),
            ));
        }
        let total = self.seed_fraction + f64::from(self.iterations) * self.step_fraction;
        if total > 1.0 + 1e-9 {
            return Err(CoreError::InvalidConfig(format!(
                "seed_fraction + iterations * step_fraction = {total} exceeds 1"
            )));
        }
        Ok(())
    }

    /// Validate and return the config unchanged.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::defaults_for(AcquisitionKind::Sase);
        assert_eq!(cfg.beam_width, 10);
        assert_eq!(cfg.caption_clusters, 10);
        assert!(cfg.validate().is_ok());

        let mp = RunConfig::defaults_for(AcquisitionKind::MsaseMp);
        assert_eq!(mp.caption_clusters, 30);
        assert_eq!(mp.dropout_passes, 5);
        assert!((mp.epsilon - 0.015).abs() < 1e-12);
        assert_eq!(mp.visual_clusters, 300);
        assert!(mp.validate().is_ok());
    }

    #[test]
    fn nearest_k_above_visual_clusters_is_named_in_the_error() {
        let cfg = RunConfig {
            nearest_k: 5,
            visual_clusters: 3,
            ..RunConfig::defaults_for(AcquisitionKind::MsaseFp)
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("nearest_k"), "got: {err}");
    }

    #[test]
    fn quarter_budget_schedule_is_accepted() {
        let cfg = RunConfig {
            seed_fraction: 0.05,
            step_fraction: 0.05,
            iterations: 4,
            ..RunConfig::defaults_for(AcquisitionKind::Se)
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn over_budget_schedule_is_rejected() {
        let cfg = RunConfig {
            seed_fraction: 0.5,
            step_fraction: 0.2,
            iterations: 3,
            ..RunConfig::defaults_for(AcquisitionKind::Se)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_budget_with_rounding_noise_is_accepted() {
        let cfg = RunConfig {
            seed_fraction: 0.05,
            step_fraction: 0.05,
            iterations: 19,
            ..RunConfig::defaults_for(AcquisitionKind::Se)
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn acquisition_names_round_trip() {
        for kind in [
            AcquisitionKind::Random,
            AcquisitionKind::Se,
            AcquisitionKind::MeanLikelihood,
            AcquisitionKind::Sase,
            AcquisitionKind::MsaseFp,
            AcquisitionKind::MsaseMp,
        ] {
            assert_eq!(AcquisitionKind::parse(kind.as_str()).unwrap(), kind);
        }
        assert!(AcquisitionKind::parse("entropy").is_err());
    }
}
