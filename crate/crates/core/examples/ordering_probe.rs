//! Dev probe: final concept accuracy per acquisition over several seeds,
//! with waste/redundancy diagnostics.

use std::collections::{BTreeMap, BTreeSet};

use capal_core::config::{AcquisitionKind, RunConfig};
use capal_core::embedder::HashingEmbedder;
use capal_core::generator::{build_world, Generator, SyntheticConfig, SyntheticGenerator};
use capal_core::runner::ActiveLoop;

fn accuracy(gen: &SyntheticGenerator, eval: &[capal_core::VideoExample]) -> f64 {
    let mut hits = 0usize;
    for v in eval {
        let cs = gen.generate(v, 10).unwrap();
        let top = gen.world().caption_concept(&cs.candidates[0].tokens);
        if top == Some(gen.world().concept_of[&v.id]) {
            hits += 1;
        }
    }
    hits as f64 / eval.len() as f64
}

fn main() {
    let kinds = [
        AcquisitionKind::Random,
        AcquisitionKind::Se,
        AcquisitionKind::Sase,
        AcquisitionKind::MsaseMp,
        AcquisitionKind::MsaseFp,
    ];
    let seeds: Vec<u64> = (1..=5).collect();
    for kind in kinds {
        let mut accs = Vec::new();
        let mut total_waste = 0usize;
        let mut total_dup = 0usize;
        let mut total_picks = 0usize;
        for &seed in &seeds {
            let (world, train, eval) = build_world(&SyntheticConfig {
                seed,
                ..SyntheticConfig::default()
            })
            .unwrap();
            let concept_of: BTreeMap<String, usize> = world.concept_of.clone();
            let mut gen = SyntheticGenerator::new(world);
            let cfg = RunConfig {
                seed,
                ..RunConfig::defaults_for(kind)
            };
            let embedder = HashingEmbedder;
            let mut active = ActiveLoop::start(cfg, &train, &eval, &mut gen, &embedder).unwrap();
            let mut last_count = 0usize;
            loop {
                let learned_before: BTreeSet<usize> = active
                    .state
                    .labeled
                    .iter()
                    .map(|id| concept_of[id])
                    .collect();
                if !active.step().unwrap() {
                    break;
                }
                let batch: Vec<String> = active.report.selections[last_count..]
                    .iter()
                    .map(|s| s.video_id.clone())
                    .collect();
                last_count = active.report.selections.len();
                let mut batch_concepts = BTreeSet::new();
                for id in &batch {
                    let c = concept_of[id];
                    if learned_before.contains(&c) {
                        total_waste += 1;
                    } else if !batch_concepts.insert(c) {
                        total_dup += 1;
                    }
                    total_picks += 1;
                }
            }
            drop(active);
            accs.push(accuracy(&gen, &eval));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        println!(
            "{:?}: mean {:.4} waste {:.2} dup {:.2} {:?}",
            kind,
            mean,
            total_waste as f64 / total_picks as f64,
            total_dup as f64 / total_picks as f64,
            accs
        );
    }
}
