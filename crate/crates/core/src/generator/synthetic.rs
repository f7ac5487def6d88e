//! Synthetic ground-truth world for simulating active-learning runs.
//!
//! Every video has a latent concept. Once a concept is learned the generator
//! emits paraphrases of it with tightly spread scores; for an unlearned
//! concept the candidates split between the true concept and its distractors
//! with comparable scores, and the top-ranked caption names a distractor.
//! Some unlearned videos are "collapsed": the base decode leans almost
//! entirely on one distractor, so their confusion is invisible to scoring
//! rules that only look at the base beam, while stochastic passes re-roll
//! the mixture and expose it. Everything is a deterministic function of the
//! world seed, the video, and the learned set.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::seeds;
use crate::types::{tokenize, Candidate, CandidateSet, Origin, VideoExample};

use super::Generator;

/// Latent concept vocabulary.
pub const CONCEPT_WORDS: [&str; 60] = [
    "running",
    "jogging",
    "swimming",
    "dancing",
    "cooking",
    "painting",
    "skiing",
    "surfing",
    "climbing",
    "boxing",
    "fishing",
    "reading",
    "singing",
    "typing",
    "juggling",
    "skateboarding",
    "snowboarding",
    "weightlifting",
    "wrestling",
    "cycling",
    "rowing",
    "sailing",
    "diving",
    "skating",
    "hiking",
    "camping",
    "drumming",
    "knitting",
    "sculpting",
    "gardening",
    "sweeping",
    "welding",
    "plowing",
    "harvesting",
    "brewing",
    "baking",
    "carving",
    "sketching",
    "stretching",
    "sprinting",
    "vaulting",
    "fencing",
    "meditating",
    "whistling",
    "yodeling",
    "marching",
    "paragliding",
    "kayaking",
    "canoeing",
    "snorkeling",
    "bowling",
    "golfing",
    "skydiving",
    "longboarding",
    "windsurfing",
    "kitesurfing",
    "trampolining",
    "breakdancing",
    "beatboxing",
    "woodworking",
];

const TEMPLATES: [&str; 6] = [
    "a man is {}",
    "a person is {}",
    "someone is {} outside",
    "the video shows people {}",
    "a group enjoys {} together",
    "a woman is {} indoors",
];

/// Spread bounds for the descending candidate scores, in nats. Learned
/// concepts stay below 0.1; unlearned mixtures are flatter still, so
/// sequential entropy carries a weak (overlapping) signal.
const LEARNED_RANGE_MAX: f64 = 0.094;
const UNLEARNED_RANGE_MAX: f64 = 0.045;

/// Fraction of unlearned videos whose base decode collapses onto the top
/// distractor. Sticky per video; stochastic passes re-roll it.
const COLLAPSE_PROB: f64 = 0.40;

/// Stochastic passes widen the concept mixture: collapse odds shrink and the
/// mixture flattens by this factor.
const PASS_WIDEN: f64 = 1.5;

/// Base mixture over [top distractor, true concept, second distractor].
const MIX_WEIGHTS: [f64; 3] = [0.4, 0.4, 0.2];

const BASE_LOGPROB: f64 = -1.0;

/// Ground truth of a simulated captioning task.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub vocabulary: Vec<String>,
    pub templates: Vec<String>,
    pub concept_of: BTreeMap<String, usize>,
    /// Per-video distractor concepts with mixing weights (summing to 1).
    pub confusion: BTreeMap<String, Vec<(usize, f64)>>,
    pub noise: f64,
    /// Concepts the generator currently captions correctly; grows via update.
    pub learned: BTreeSet<usize>,
}

/// Shape of a generated world.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub train_size: usize,
    pub eval_size: usize,
    pub concepts: usize,
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            train_size: 200,
            eval_size: 100,
            concepts: CONCEPT_WORDS.len(),
            noise: 0.3,
        }
    }
}

impl SyntheticWorld {
    fn template_inventory(&self, concept: usize) -> Vec<usize> {
        // Same inventory size for every concept; otherwise cluster counts
        // become a concept fingerprint and batch selection piles onto the
        // concepts with the largest inventories.
        let n = self.templates.len();
        let size = 4.min(n);
        (0..size).map(|t| (concept + t) % n).collect()
    }

    fn caption(&self, concept: usize, slot: usize) -> Vec<String> {
        let inventory = self.template_inventory(concept);
        let template = &self.templates[inventory[slot % inventory.len()]];
        tokenize(&template.replace("{}", &self.vocabulary[concept]))
    }

    /// The two distractor concepts for a concept (fewer for tiny worlds).
    pub fn distractors(&self, concept: usize) -> Vec<usize> {
        let n = self.vocabulary.len();
        if n < 2 {
            return Vec::new();
        }
        let h1 = seeds::mix(&[self.seed, 0xd1, concept as u64]);
        let d1 = (concept + 1 + (h1 % (n as u64 - 1)) as usize) % n;
        if n < 3 {
            return vec![d1];
        }
        let h2 = seeds::mix(&[self.seed, 0xd2, concept as u64]);
        let mut offset = (h2 % (n as u64 - 1)) as usize;
        for _ in 0..n {
            let d2 = (concept + 1 + offset) % n;
            if d2 != concept && d2 != d1 {
                return vec![d1, d2];
            }
            offset = (offset + 1) % (n - 1);
        }
        vec![d1]
    }

    /// Which concept a caption names, if any.
    pub fn caption_concept(&self, tokens: &[String]) -> Option<usize> {
        tokens
            .iter()
            .find_map(|tok| self.vocabulary.iter().position(|w| w == tok))
    }

    fn learned_digest(&self) -> u64 {
        let mut parts = vec![self.learned.len() as u64];
        parts.extend(self.learned.iter().map(|&c| c as u64));
        seeds::mix(&parts)
    }

    /// One-hot of the video's concept plus seeded Gaussian noise with
    /// sigma = noise * 0.1, so visual clustering recovers concepts at low
    /// noise.
    pub fn visual_feature(&self, video_id: &str) -> Result<Vec<f64>> {
        let &concept = self
            .concept_of
            .get(video_id)
            .ok_or_else(|| CoreError::UnknownVideo(video_id.to_string()))?;
        let mut feature = vec![0.0; self.vocabulary.len()];
        feature[concept] = 1.0;
        let sigma = self.noise * 0.1;
        if sigma > 0.0 {
            let mut rng = ChaCha20Rng::seed_from_u64(seeds::mix(&[
                self.seed,
                seeds::hash_str("visual"),
                seeds::hash_str(video_id),
            ]));
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            for x in feature.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
        Ok(feature)
    }
}

/// Build a world together with its train and eval pools. Concepts are
/// assigned round-robin; every video carries two reference captions.
pub fn build_world(
    cfg: &SyntheticConfig,
) -> Result<(SyntheticWorld, Vec<VideoExample>, Vec<VideoExample>)> {
    if cfg.concepts == 0 || cfg.concepts > CONCEPT_WORDS.len() {
        return Err(CoreError::InvalidConfig(format!(
            "concepts must be in 1..={}",
            CONCEPT_WORDS.len()
        )));
    }
    if cfg.train_size == 0 {
        return Err(CoreError::InvalidConfig("train_size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(CoreError::InvalidConfig("noise must be in [0, 1]".into()));
    }

    let mut world = SyntheticWorld {
        seed: cfg.seed,
        vocabulary: CONCEPT_WORDS[..cfg.concepts]
            .iter()
            .map(|w| w.to_string())
            .collect(),
        templates: TEMPLATES.iter().map(|t| t.to_string()).collect(),
        concept_of: BTreeMap::new(),
        confusion: BTreeMap::new(),
        noise: cfg.noise,
        learned: BTreeSet::new(),
    };

    let register = |id: String, concept: usize, world: &mut SyntheticWorld| {
        world.concept_of.insert(id.clone(), concept);
        let ds = world.distractors(concept);
        let weights = match ds.len() {
            2 => vec![(ds[0], 0.6), (ds[1], 0.4)],
            1 => vec![(ds[0], 1.0)],
            _ => Vec::new(),
        };
        world.confusion.insert(id, weights);
    };

    for i in 0..cfg.train_size {
        register(format!("train_{i:04}"), i % cfg.concepts, &mut world);
    }
    for i in 0..cfg.eval_size {
        register(format!("eval_{i:04}"), i % cfg.concepts, &mut world);
    }

    let make_examples = |prefix: &str, count: usize, world: &SyntheticWorld| -> Result<Vec<VideoExample>> {
        (0..count)
            .map(|i| {
                let id = format!("{prefix}_{i:04}");
                let concept = world.concept_of[&id];
                let references = vec![world.caption(concept, 0), world.caption(concept, 1)];
                Ok(VideoExample {
                    visual_feature: world.visual_feature(&id)?,
                    id,
                    references: Some(references),
                })
            })
            .collect()
    };

    let train = make_examples("train", cfg.train_size, &world)?;
    let eval = make_examples("eval", cfg.eval_size, &world)?;
    Ok((world, train, eval))
}

/// Deterministic generator over a synthetic world.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    world: SyntheticWorld,
}

impl SyntheticGenerator {
    pub fn new(world: SyntheticWorld) -> Self {
        SyntheticGenerator { world }
    }

    pub fn world(&self) -> &SyntheticWorld {
        &self.world
    }

    /// Largest-remainder allocation of `k` slots to mixture weights; ties go
    /// to the lower index.
    fn mixture_counts(weights: &[f64], k: usize) -> Vec<usize> {
        let total: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|w| w / total * k as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).expect("finite weights").then(a.cmp(&b))
        });
        let mut i = 0;
        while assigned < k {
            counts[order[i % order.len()]] += 1;
            assigned += 1;
            i += 1;
        }
        counts
    }

    /// Interleave concepts into k slots by cycling, skipping exhausted ones.
    fn interleave(concepts: &[usize], counts: &[usize]) -> Vec<usize> {
        let mut remaining = counts.to_vec();
        let mut slots = Vec::with_capacity(remaining.iter().sum());
        while remaining.iter().any(|&r| r > 0) {
            for (j, &c) in concepts.iter().enumerate() {
                if remaining[j] > 0 {
                    remaining[j] -= 1;
                    slots.push(c);
                }
            }
        }
        slots
    }

    /// Emit a candidate set: slot i names `slots[i]` (cycling that concept's
    /// paraphrase templates) with strictly descending scores spanning
    /// `range` nats.
    fn emit(&self, video_id: &str, slots: &[usize], range: f64, origin: Origin) -> CandidateSet {
        let k = slots.len();
        let mut used: BTreeMap<usize, usize> = BTreeMap::new();
        let candidates: Vec<Candidate> = slots
            .iter()
            .enumerate()
            .map(|(i, &concept)| {
                let slot = *used.entry(concept).or_insert(0);
                *used.get_mut(&concept).expect("just inserted") += 1;
                let tokens = self.world.caption(concept, slot);
                let step = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
                let logprob = BASE_LOGPROB - range * step - 1e-9 * i as f64;
                Candidate { tokens, logprob }
            })
            .collect();
        CandidateSet {
            video_id: video_id.to_string(),
            candidates,
            origin,
        }
    }

    fn decode(
        &self,
        video_id: &str,
        concept: usize,
        feature_salt: u64,
        state_salt: u64,
        beam_width: usize,
        widen: bool,
        origin: Origin,
    ) -> CandidateSet {
        let k = beam_width;
        let mut rng = ChaCha20Rng::seed_from_u64(state_salt);

        if self.world.learned.contains(&concept) {
            let range = rng.gen_range(0.0..LEARNED_RANGE_MAX);
            return self.emit(video_id, &vec![concept; k], range, origin);
        }

        let distractors = self.world.distractors(concept);
        let range = rng.gen_range(0.0..UNLEARNED_RANGE_MAX);
        if distractors.is_empty() {
            return self.emit(video_id, &vec![concept; k], range, origin);
        }

        let collapse_prob = if widen {
            COLLAPSE_PROB / PASS_WIDEN
        } else {
            COLLAPSE_PROB
        };
        let collapse_draw = if widen {
            rng.gen::<f64>()
        } else {
            // Sticky per video: the base decode of a collapsed video always
            // leans on the distractor, until a pass re-rolls the mixture.
            (seeds::mix(&[feature_salt, seeds::hash_str("collapse")]) >> 11) as f64
                / (1u64 << 53) as f64
        };

        let slots = if collapse_draw < collapse_prob {
            // Almost all mass on the top distractor; the true concept trails
            // at the bottom of the beam.
            let top = distractors[0];
            let trailing = 1.max(k / 8).min(k.saturating_sub(1));
            let mut slots = vec![top; k - trailing];
            slots.extend(std::iter::repeat(concept).take(trailing));
            slots
        } else {
            let mut concepts = vec![distractors[0], concept];
            let mut weights = vec![MIX_WEIGHTS[0], MIX_WEIGHTS[1]];
            if distractors.len() > 1 {
                concepts.push(distractors[1]);
                weights.push(MIX_WEIGHTS[2]);
            }
            if widen && weights.len() == 3 {
                // The minor concept's share grows by the widening factor and
                // the rest is split evenly, so passes surface templates the
                // base beam had no room for.
                let minor = MIX_WEIGHTS[2] * PASS_WIDEN;
                weights = vec![(1.0 - minor) / 2.0, (1.0 - minor) / 2.0, minor];
            }
            let counts = Self::mixture_counts(&weights, k);
            Self::interleave(&concepts, &counts)
        };
        self.emit(video_id, &slots, range, origin)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Generator for SyntheticGenerator {
    fn generate(&self, video: &VideoExample, beam_width: usize) -> Result<CandidateSet> {
        let feature = self.encode_visual(video)?;
        self.decode_from_feature(&video.id, &feature, beam_width)
    }

    fn encode_visual(&self, video: &VideoExample) -> Result<Vec<f64>> {
        self.world.visual_feature(&video.id)
    }

    fn decode_from_feature(
        &self,
        video_id: &str,
        feature: &[f64],
        beam_width: usize,
    ) -> Result<CandidateSet> {
        if beam_width == 0 {
            return Err(CoreError::data("beam width must be >= 1"));
        }
        if feature.is_empty() || feature.len() != self.world.vocabulary.len() {
            return Err(CoreError::data(format!(
                "feature dimension {} does not match the world ({})",
                feature.len(),
                self.world.vocabulary.len()
            )));
        }
        // The decode depends on the feature only through its exact bits, so
        // perturbing it re-rolls the mixture.
        let concept = argmax(feature);
        let feature_salt = seeds::mix(&[self.world.seed, seeds::hash_f64_bits(feature)]);
        let state_salt = seeds::mix(&[feature_salt, self.world.learned_digest()]);
        Ok(self.decode(
            video_id,
            concept,
            feature_salt,
            state_salt,
            beam_width,
            false,
            Origin::Base,
        ))
    }

    fn stochastic_pass(
        &self,
        video: &VideoExample,
        beam_width: usize,
        pass: u32,
    ) -> Result<CandidateSet> {
        if beam_width == 0 {
            return Err(CoreError::data("beam width must be >= 1"));
        }
        let &concept = self
            .world
            .concept_of
            .get(&video.id)
            .ok_or_else(|| CoreError::UnknownVideo(video.id.clone()))?;
        let salt = seeds::mix(&[
            self.world.seed,
            seeds::hash_str("pass"),
            seeds::hash_str(&video.id),
            u64::from(pass),
            self.world.learned_digest(),
        ]);
        Ok(self.decode(
            &video.id,
            concept,
            salt,
            salt,
            beam_width,
            true,
            Origin::Mp(pass),
        ))
    }

    fn update(&mut self, labeled: &[VideoExample]) -> Result<()> {
        for video in labeled {
            let &concept = self
                .world
                .concept_of
                .get(&video.id)
                .ok_or_else(|| CoreError::UnknownVideo(video.id.clone()))?;
            self.world.learned.insert(concept);
        }
        Ok(())
    }

    fn supports_visual(&self) -> bool {
        true
    }

    fn supports_feature_perturbation(&self) -> bool {
        true
    }

    fn supports_stochastic(&self) -> bool {
        true
    }
}
