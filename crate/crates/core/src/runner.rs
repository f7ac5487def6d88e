//! The query loop: score the unlabeled pool, rank, select the per-iteration
//! budget, query oracle labels, update the generator, evaluate, repeat.
//!
//! A run is a pure function of (config, pool, eval set): every random
//! decision derives from the run seed plus context, and the generator state
//! after any prefix of iterations is reproducible from the labeled set. That
//! makes checkpointing trivial — the state file stores only the pool
//! partition and iteration counter — and a resumed run emits byte-identical
//! records to an uninterrupted one.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{self, AcquisitionScore};
use crate::config::{AcquisitionKind, RunConfig};
use crate::embedder::CaptionEmbedder;
use crate::error::{CoreError, Result};
use crate::generator::Generator;
use crate::metrics;
use crate::multimodal::{self, PerturbationSpec, VisualClusterModel};
use crate::pool::{iteration_budgets, seed_split};
use crate::seeds;
use crate::types::{CandidateSet, PoolState, VideoExample};

/// One selected video in the append-only selection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub iteration: u32,
    pub video_id: String,
    pub value: f64,
    pub rank: usize,
    pub kind: AcquisitionKind,
}

/// One report row. Wall time is kept in memory only; persisted artifacts
/// must be byte-identical across reruns.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub iteration: u32,
    pub labeled_fraction: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider_d: f64,
    pub wall_time_secs: f64,
}

/// Everything a finished (or resumed prefix of a) run produced.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub rows: Vec<IterationRow>,
    pub selections: Vec<SelectionRecord>,
    pub warnings: Vec<String>,
}

/// Oracle lookup: stored reference captions by video id.
pub type Oracle = BTreeMap<String, Vec<Vec<String>>>;

pub fn build_oracle(pool: &[VideoExample]) -> Oracle {
    pool.iter()
        .filter_map(|v| {
            v.references
                .as_ref()
                .filter(|r| !r.is_empty())
                .map(|r| (v.id.clone(), r.clone()))
        })
        .collect()
}

/// Return the stored references for the queried ids. Never consults scores;
/// errors when an id has no references.
pub fn query_labels(ids: &[String], oracle: &Oracle) -> Result<Vec<(String, Vec<Vec<String>>)>> {
    ids.iter()
        .map(|id| {
            oracle
                .get(id)
                .map(|refs| (id.clone(), refs.clone()))
                .ok_or_else(|| CoreError::data(format!("no oracle references for {id}")))
        })
        .collect()
}

/// Serialized checkpoint. `rng_state` is derived (all randomness is
/// stateless), stored for inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunState {
    pub version: String,
    pub cfg_digest: String,
    pub pool_state: PoolState,
    pub iteration: u32,
    pub rng_state: u64,
}

pub fn cfg_digest(cfg: &RunConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let hash = Sha256::digest(json.as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_state(path: &Path, cfg: &RunConfig, pool_state: &PoolState) -> Result<()> {
    let state = RunState {
        version: env!("CARGO_PKG_VERSION").to_string(),
        cfg_digest: cfg_digest(cfg),
        pool_state: pool_state.clone(),
        iteration: pool_state.iteration,
        rng_state: seeds::mix(&[cfg.seed, u64::from(pool_state.iteration)]),
    };
    let json = serde_json::to_string_pretty(&state).expect("state serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_state(path: &Path, cfg: &RunConfig) -> Result<PoolState> {
    let text = std::fs::read_to_string(path)?;
    let state: RunState =
        serde_json::from_str(&text).map_err(|e| CoreError::StateMismatch(e.to_string()))?;
    if state.version != env!("CARGO_PKG_VERSION") {
        return Err(CoreError::StateMismatch(format!(
            "state written by version {}, this is {}",
            state.version,
            env!("CARGO_PKG_VERSION")
        )));
    }
    if state.cfg_digest != cfg_digest(cfg) {
        return Err(CoreError::StateMismatch(
            "config differs from the one that wrote the state".into(),
        ));
    }
    if state.pool_state.iteration != state.iteration {
        return Err(CoreError::StateMismatch("corrupted iteration counter".into()));
    }
    Ok(state.pool_state)
}

fn length_normalized(mut cs: CandidateSet) -> CandidateSet {
    for c in cs.candidates.iter_mut() {
        c.logprob /= c.tokens.len() as f64;
    }
    crate::types::sort_candidates(&mut cs.candidates);
    cs
}

fn candidate_set_for_scoring<G: Generator + ?Sized>(
    cfg: &RunConfig,
    generator: &G,
    video: &VideoExample,
    fp_model: Option<&VisualClusterModel>,
) -> Result<CandidateSet> {
    let cs = match cfg.acquisition {
        AcquisitionKind::MsaseFp => {
            let spec = PerturbationSpec::new(cfg.epsilon, cfg.nearest_k)?;
            multimodal::expand_candidates_fp(video, generator, fp_model, &spec, cfg.beam_width)?
                .merged
        }
        AcquisitionKind::MsaseMp => {
            multimodal::expand_candidates_mp(video, generator, cfg.dropout_passes, cfg.beam_width)?
                .merged
        }
        _ => generator.generate(video, cfg.beam_width)?,
    };
    Ok(if cfg.length_normalize {
        length_normalized(cs)
    } else {
        cs
    })
}

fn score_one(
    cfg: &RunConfig,
    cs: &CandidateSet,
    embedder: &dyn CaptionEmbedder,
    cluster_seed: u64,
) -> Result<AcquisitionScore> {
    let mut score = match cfg.acquisition {
        AcquisitionKind::Se => acquisition::sequential_entropy(cs)?,
        AcquisitionKind::MeanLikelihood => acquisition::mean_likelihood_score(cs),
        AcquisitionKind::Sase | AcquisitionKind::MsaseFp | AcquisitionKind::MsaseMp => {
            let embeddings = cs
                .candidates
                .iter()
                .map(|c| embedder.embed(&c.tokens))
                .collect::<Result<Vec<_>>>()?;
            acquisition::sase_entropy(
                cs,
                &embeddings,
                cfg.caption_clusters,
                cfg.sase_mode,
                cluster_seed,
            )?
        }
        AcquisitionKind::Random => {
            return Err(CoreError::data("random scores are drawn per sweep"));
        }
    };
    score.kind = cfg.acquisition;
    Ok(score)
}

/// Score a set of videos for one sweep. Videos are processed in id order and
/// the result is id-ordered, so parallel execution cannot change the output.
pub fn score_videos<G: Generator + ?Sized>(
    cfg: &RunConfig,
    videos: &[VideoExample],
    labeled: &[VideoExample],
    generator: &G,
    embedder: &dyn CaptionEmbedder,
    sweep_seed: u64,
) -> Result<Vec<AcquisitionScore>> {
    let mut ordered: Vec<&VideoExample> = videos.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    if cfg.acquisition == AcquisitionKind::Random {
        let ids: Vec<String> = ordered.iter().map(|v| v.id.clone()).collect();
        return acquisition::random_scores(&ids, sweep_seed);
    }

    let fp_model = if cfg.acquisition == AcquisitionKind::MsaseFp && !generator.has_stored_fp() {
        if labeled.is_empty() {
            return Err(CoreError::data(
                "feature perturbation needs a labeled pool to cluster",
            ));
        }
        Some(multimodal::fit_visual_clusters(
            generator,
            labeled,
            cfg.visual_clusters,
            seeds::mix(&[sweep_seed, seeds::hash_str("visual_clusters")]),
        )?)
    } else {
        None
    };

    ordered
        .par_iter()
        .map(|video| {
            let cs = candidate_set_for_scoring(cfg, generator, video, fp_model.as_ref())?;
            let cluster_seed = seeds::mix(&[sweep_seed, seeds::hash_str(&video.id)]);
            score_one(cfg, &cs, embedder, cluster_seed)
        })
        .collect()
}

fn check_capabilities<G: Generator + ?Sized>(cfg: &RunConfig, generator: &G) -> Result<()> {
    match cfg.acquisition {
        AcquisitionKind::MsaseFp if !generator.supports_feature_perturbation() => Err(
            CoreError::CapabilityMissing("feature perturbation (msase_fp)".into()),
        ),
        AcquisitionKind::MsaseMp if !generator.supports_stochastic() => Err(
            CoreError::CapabilityMissing("stochastic passes (msase_mp)".into()),
        ),
        _ => Ok(()),
    }
}

fn evaluate_on<G: Generator + ?Sized>(
    generator: &G,
    eval_set: &[VideoExample],
    beam_width: usize,
) -> Result<(f64, f64, f64)> {
    if eval_set.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let mut hyps = Vec::with_capacity(eval_set.len());
    let mut refs = Vec::with_capacity(eval_set.len());
    for video in eval_set {
        let cs = generator.generate(video, beam_width)?;
        hyps.push(cs.candidates[0].tokens.clone());
        refs.push(
            video
                .references
                .clone()
                .filter(|r| !r.is_empty())
                .ok_or_else(|| {
                    CoreError::data(format!("eval video {} has no references", video.id))
                })?,
        );
    }
    Ok((
        metrics::bleu4(&hyps, &refs)?,
        metrics::rouge_l_corpus(&hyps, &refs)?,
        metrics::cider_d(&hyps, &refs, &refs)?,
    ))
}

/// An in-flight run, advanced one iteration at a time.
pub struct ActiveLoop<'a, G: Generator + ?Sized> {
    cfg: RunConfig,
    pool: Vec<VideoExample>,
    eval_set: &'a [VideoExample],
    generator: &'a mut G,
    embedder: &'a dyn CaptionEmbedder,
    oracle: Oracle,
    budgets: Vec<usize>,
    pub state: PoolState,
    pub report: RunReport,
}

impl<'a, G: Generator + ?Sized> ActiveLoop<'a, G> {
    /// Seed-split the pool, train on the seed labels, and evaluate (the
    /// pre-query report row).
    pub fn start(
        cfg: RunConfig,
        pool: &[VideoExample],
        eval_set: &'a [VideoExample],
        generator: &'a mut G,
        embedder: &'a dyn CaptionEmbedder,
    ) -> Result<Self> {
        cfg.validate()?;
        check_capabilities(&cfg, generator)?;
        let state = seed_split(pool, cfg.seed_fraction, cfg.seed)?;
        let mut run = Self::assemble(cfg, pool, eval_set, generator, embedder, state)?;
        run.train_on_labeled()?;
        run.push_report_row(Instant::now())?;
        Ok(run)
    }

    /// Rebuild a run from a checkpointed pool state. The generator is
    /// retrained on the stored labeled set; no report row is emitted for
    /// already-completed iterations.
    pub fn resume(
        cfg: RunConfig,
        pool: &[VideoExample],
        eval_set: &'a [VideoExample],
        generator: &'a mut G,
        embedder: &'a dyn CaptionEmbedder,
        state: PoolState,
    ) -> Result<Self> {
        cfg.validate()?;
        check_capabilities(&cfg, generator)?;
        let known = |id: &String| state.labeled.contains(id) || state.unlabeled.contains(id);
        if pool.len() != state.total() || !pool.iter().all(|v| known(&v.id)) {
            return Err(CoreError::StateMismatch(
                "pool does not match the checkpointed partition".into(),
            ));
        }
        let mut run = Self::assemble(cfg, pool, eval_set, generator, embedder, state)?;
        run.train_on_labeled()?;
        Ok(run)
    }

    fn assemble(
        cfg: RunConfig,
        pool: &[VideoExample],
        eval_set: &'a [VideoExample],
        generator: &'a mut G,
        embedder: &'a dyn CaptionEmbedder,
        state: PoolState,
    ) -> Result<Self> {
        let overlap = pool.iter().any(|v| {
            eval_set.iter().any(|e| e.id == v.id)
        });
        if overlap {
            return Err(CoreError::data("pool and eval set share video ids"));
        }
        let oracle = build_oracle(pool);
        let budgets = iteration_budgets(pool.len(), cfg.step_fraction, cfg.iterations);
        Ok(ActiveLoop {
            cfg,
            pool: pool.to_vec(),
            eval_set,
            generator,
            embedder,
            oracle,
            budgets,
            state,
            report: RunReport::default(),
        })
    }

    fn labeled_examples(&self) -> Vec<VideoExample> {
        self.pool
            .iter()
            .filter(|v| self.state.labeled.contains(&v.id))
            .cloned()
            .collect()
    }

    fn unlabeled_examples(&self) -> Vec<VideoExample> {
        self.pool
            .iter()
            .filter(|v| self.state.unlabeled.contains(&v.id))
            .cloned()
            .collect()
    }

    fn train_on_labeled(&mut self) -> Result<()> {
        let labeled = self.labeled_examples();
        // The oracle must cover every labeled id before the generator sees it.
        let ids: Vec<String> = labeled.iter().map(|v| v.id.clone()).collect();
        query_labels(&ids, &self.oracle)?;
        self.generator.update(&labeled)
    }

    fn push_report_row(&mut self, started: Instant) -> Result<()> {
        let (bleu4, rouge_l, cider_d) =
            evaluate_on(self.generator, self.eval_set, self.cfg.beam_width)?;
        self.report.rows.push(IterationRow {
            iteration: self.state.iteration,
            labeled_fraction: self.state.labeled.len() as f64 / self.state.total() as f64,
            bleu4,
            rouge_l,
            cider_d,
            wall_time_secs: started.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    /// Run one query iteration; returns false when the budget schedule is
    /// complete.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_done() {
            return Ok(false);
        }
        let started = Instant::now();
        let iteration = self.state.iteration + 1;
        let budget = self.budgets[(iteration - 1) as usize];
        let unlabeled = self.unlabeled_examples();
        if unlabeled.len() < budget {
            return Err(CoreError::BudgetExhausted {
                needed: budget,
                available: unlabeled.len(),
            });
        }

        let labeled = self.labeled_examples();
        let sweep_seed = seeds::mix(&[self.cfg.seed, u64::from(iteration)]);
        let scores = score_videos(
            &self.cfg,
            &unlabeled,
            &labeled,
            self.generator,
            self.embedder,
            sweep_seed,
        )?;
        if self.cfg.acquisition == AcquisitionKind::MsaseFp {
            let realized = self.cfg.visual_clusters.min(labeled.len());
            if realized < self.cfg.visual_clusters {
                self.report.warnings.push(format!(
                    "iteration {iteration}: visual_clusters clamped from {} to at most {realized} (labeled pool size)",
                    self.cfg.visual_clusters
                ));
            }
        }

        let selected = acquisition::rank_and_select(&scores, budget)?;
        let by_id: BTreeMap<&str, &AcquisitionScore> =
            scores.iter().map(|s| (s.video_id.as_str(), s)).collect();
        for (rank, id) in selected.iter().enumerate() {
            let score = by_id[id.as_str()];
            self.report.selections.push(SelectionRecord {
                iteration,
                video_id: id.clone(),
                value: score.value,
                rank: rank + 1,
                kind: score.kind,
            });
        }

        // Query the oracle, then move the ids and retrain on the
        // accumulated labeled set.
        query_labels(&selected, &self.oracle)?;
        self.state.mark_labeled(&selected)?;
        self.state.iteration = iteration;
        let accumulated = self.labeled_examples();
        self.generator.update(&accumulated)?;
        self.push_report_row(started)?;
        Ok(true)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step()? {}
        Ok(())
    }
}

/// Run the full loop and return its report. The generator is left in its
/// final trained state.
pub fn run_active_learning<G: Generator + ?Sized>(
    cfg: &RunConfig,
    pool: &[VideoExample],
    eval_set: &[VideoExample],
    generator: &mut G,
    embedder: &dyn CaptionEmbedder,
) -> Result<RunReport> {
    let mut active = ActiveLoop::start(cfg.clone(), pool, eval_set, generator, embedder)?;
    active.run_to_end()?;
    Ok(std::mem::take(&mut active.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::HashingEmbedder;
    use crate::generator::{build_world, SyntheticConfig, SyntheticGenerator};

    fn world(seed: u64) -> (Vec<VideoExample>, Vec<VideoExample>, SyntheticGenerator) {
        let (world, train, eval) = build_world(&SyntheticConfig {
            seed,
            train_size: 60,
            eval_size: 20,
            concepts: 12,
            noise: 0.3,
        })
        .unwrap();
        (train, eval, SyntheticGenerator::new(world))
    }

    fn cfg(kind: AcquisitionKind, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            iterations: 3,
            seed_fraction: 0.1,
            step_fraction: 0.1,
            ..RunConfig::defaults_for(kind)
        }
    }

    #[test]
    fn schedule_produces_one_row_per_iteration_plus_seed() {
        let (train, eval, mut gen) = world(1);
        let embedder = HashingEmbedder;
        let report = run_active_learning(
            &cfg(AcquisitionKind::Se, 5),
            &train,
            &eval,
            &mut gen,
            &embedder,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!((report.rows[0].labeled_fraction - 0.1).abs() < 1e-12);
        assert!((report.rows[3].labeled_fraction - 0.4).abs() < 1e-12);
        // 6 per iteration, ranks 1..=6 without gaps.
        assert_eq!(report.selections.len(), 18);
        for iter in 1..=3u32 {
            let ranks: Vec<usize> = report
                .selections
                .iter()
                .filter(|s| s.iteration == iter)
                .map(|s| s.rank)
                .collect();
            assert_eq!(ranks, (1..=6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_iterations_only_evaluates_the_seed() {
        let (train, eval, mut gen) = world(2);
        let embedder = HashingEmbedder;
        let mut config = cfg(AcquisitionKind::Random, 5);
        config.iterations = 0;
        let report =
            run_active_learning(&config, &train, &eval, &mut gen, &embedder).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.selections.is_empty());
    }

    #[test]
    fn identical_configs_replay_identically() {
        for kind in [
            AcquisitionKind::Random,
            AcquisitionKind::Se,
            AcquisitionKind::Sase,
            AcquisitionKind::MsaseMp,
            AcquisitionKind::MsaseFp,
            AcquisitionKind::MeanLikelihood,
        ] {
            let (train, eval, mut gen_a) = world(3);
            let (_, _, mut gen_b) = world(3);
            let embedder = HashingEmbedder;
            let a = run_active_learning(&cfg(kind, 9), &train, &eval, &mut gen_a, &embedder)
                .unwrap();
            let b = run_active_learning(&cfg(kind, 9), &train, &eval, &mut gen_b, &embedder)
                .unwrap();
            assert_eq!(a.selections, b.selections, "kind {kind:?}");
            assert_eq!(a.rows.len(), b.rows.len());
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                assert_eq!(ra.bleu4, rb.bleu4);
                assert_eq!(ra.cider_d, rb.cider_d);
            }
        }
    }

    #[test]
    fn selections_never_leave_the_unlabeled_set() {
        let (train, eval, mut gen) = world(4);
        let embedder = HashingEmbedder;
        let config = cfg(AcquisitionKind::Sase, 11);
        let mut active =
            ActiveLoop::start(config, &train, &eval, &mut gen, &embedder).unwrap();
        let seed_labeled = active.state.labeled.clone();
        while active.step().unwrap() {}
        let mut seen = seed_labeled;
        for record in &active.report.selections {
            assert!(
                seen.insert(record.video_id.clone()),
                "{} queried twice",
                record.video_id
            );
        }
        assert_eq!(seen.len(), active.state.labeled.len());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (train, eval, mut gen_full) = world(6);
        let embedder = HashingEmbedder;
        let config = cfg(AcquisitionKind::Sase, 21);
        let full = run_active_learning(&config, &train, &eval, &mut gen_full, &embedder)
            .unwrap();

        // Interrupt after one iteration, then resume from the pool state.
        let (_, _, mut gen_half) = world(6);
        let mut first =
            ActiveLoop::start(config.clone(), &train, &eval, &mut gen_half, &embedder)
                .unwrap();
        first.step().unwrap();
        let checkpoint = first.state.clone();
        let prefix = first.report.selections.clone();
        drop(first);

        let (_, _, mut gen_resumed) = world(6);
        let mut resumed = ActiveLoop::resume(
            config,
            &train,
            &eval,
            &mut gen_resumed,
            &embedder,
            checkpoint,
        )
        .unwrap();
        while resumed.step().unwrap() {}

        let mut combined = prefix;
        combined.extend(resumed.report.selections.clone());
        assert_eq!(combined, full.selections);
    }

    #[test]
    fn state_file_round_trips_and_rejects_other_configs() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("state.json");
        let (train, _, _) = world(7);
        let config = cfg(AcquisitionKind::Se, 3);
        let state = seed_split(&train, 0.1, 3).unwrap();
        save_state(&path, &config, &state).unwrap();
        assert_eq!(load_state(&path, &config).unwrap(), state);

        let mut other = config.clone();
        other.seed = 4;
        assert!(matches!(
            load_state(&path, &other),
            Err(CoreError::StateMismatch(_))
        ));
    }

    #[test]
    fn oracle_queries_return_references_and_flag_missing_ids() {
        let (train, _, _) = world(8);
        let oracle = build_oracle(&train);
        assert!(query_labels(&[], &oracle).unwrap().is_empty());
        let id = train[0].id.clone();
        let labels = query_labels(&[id.clone()], &oracle).unwrap();
        assert_eq!(labels[0].0, id);
        assert_eq!(labels[0].1.len(), 2);
        assert!(query_labels(&["ghost".to_string()], &oracle).is_err());
    }

    #[test]
    fn eval_overlap_is_rejected() {
        let (train, _, mut gen) = world(9);
        let embedder = HashingEmbedder;
        let eval_dup = vec![train[0].clone()];
        assert!(ActiveLoop::start(
            cfg(AcquisitionKind::Se, 2),
            &train,
            &eval_dup,
            &mut gen,
            &embedder
        )
        .is_err());
    }
}
