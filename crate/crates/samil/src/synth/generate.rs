//! Study and bundle generation. Every structural draw (bag size, view mix,
//! instance seeds, oracle noise) is label-independent, so regenerating a study
//! with a different label changes relevant-view pixels and nothing else.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::render::{render_instance, ViewType};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub image_side: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Studies generated with their label stripped, for pretraining.
    pub unlabeled_count: usize,
    pub class_proportions: [f64; 3],
    pub k_min: usize,
    pub k_max: usize,
    pub relevant_frac_min: f64,
    pub relevant_frac_max: f64,
    /// ρ: probability an oracle relevance flips toward a uniform draw.
    pub oracle_noise: f64,
    /// Scales the severity-coded ring contrast.
    pub signal_scale: f64,
    /// Strength of the nuisance factor on the irrelevant-view distractors
    /// (Bars amplitude and the decoy ring's fake-severity swing).
    pub distractor_corr: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            image_side: 16,
            train_count: 500,
            val_count: 150,
            test_count: 150,
            unlabeled_count: 500,
            class_proportions: [0.4, 0.3, 0.3],
            k_min: 20,
            k_max: 60,
            relevant_frac_min: 0.2,
            relevant_frac_max: 0.5,
            oracle_noise: 0.05,
            signal_scale: 1.0,
            distractor_corr: 0.7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_side < 8 {
            return Err(Error::Config(format!("image side {} too small", self.image_side)));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::Config(format!("bad bag-size range [{}, {}]", self.k_min, self.k_max)));
        }
        let psum: f64 = self.class_proportions.iter().sum();
        if self.class_proportions.iter().any(|&p| p < 0.0) || (psum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "class proportions {:?} must be nonnegative and sum to 1",
                self.class_proportions
            )));
        }
        if !(0.0 < self.relevant_frac_min
            && self.relevant_frac_min <= self.relevant_frac_max
            && self.relevant_frac_max <= 1.0)
        {
            return Err(Error::Config(format!(
                "bad relevant fraction range [{}, {}]",
                self.relevant_frac_min, self.relevant_frac_max
            )));
        }
        if !(0.0..=1.0).contains(&self.oracle_noise) {
            return Err(Error::Config(format!("oracle noise {} outside [0, 1]", self.oracle_noise)));
        }
        if self.signal_scale <= 0.0 || self.distractor_corr < 0.0 {
            return Err(Error::Config("bad signal/distractor scales".into()));
        }
        Ok(())
    }

    /// Content hash of the canonical config encoding; names the bundle.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn input_dim(&self) -> usize {
        self.image_side * self.image_side
    }
}

/// One bag of single-view images. The view types and oracle relevances are
/// generator ground truth: model code consumes only [`Self::bag_tensor`],
/// labels, and [`Self::oracle_relevance`] (the noisy relevance channel that
/// supervises attention).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticStudy {
    pub id: String,
    /// None once the label has been stripped (unlabeled pretraining split).
    pub label: Option<u8>,
    pub side: usize,
    pub(crate) pixels: Vec<f32>,
    pub(crate) view_types: Vec<ViewType>,
    pub(crate) oracle_relevance: Vec<f64>,
}

impl SyntheticStudy {
    pub fn k(&self) -> usize {
        self.view_types.len()
    }

    pub fn instance_pixels(&self, idx: usize) -> &[f32] {
        let d = self.side * self.side;
        &self.pixels[idx * d..(idx + 1) * d]
    }

    /// K×D bag matrix for the encoder.
    pub fn bag_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.k(), self.side * self.side],
            data: self.pixels.iter().map(|&p| p as f64).collect(),
        }
    }

    /// Noisy per-instance relevance probabilities — the only channel through
    /// which training sees view relevance.
    pub fn oracle_relevance(&self) -> &[f64] {
        &self.oracle_relevance
    }

    /// Ground-truth view type; audit/evaluation side only, never a model input.
    pub fn hidden_view_type(&self, idx: usize) -> ViewType {
        self.view_types[idx]
    }

    /// 1.0 for truly relevant instances, 0.0 otherwise (noise-free truth).
    pub fn true_relevance(&self, idx: usize) -> f64 {
        if self.view_types[idx].is_relevant() {
            1.0
        } else {
            0.0
        }
    }
}

/// Generates one study deterministically from its seed. The label feeds only
/// the severity parameter of relevant-view rendering.
pub fn generate_study(
    cfg: &GeneratorConfig,
    id: &str,
    label: u8,
    study_seed: u64,
) -> Result<SyntheticStudy> {
    cfg.validate()?;
    if label > 2 {
        return Err(Error::Domain(format!("label {label} outside {{0, 1, 2}}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(study_seed);

    let k = rng.gen_range(cfg.k_min..=cfg.k_max);
    let rel_frac = rng.gen_range(cfg.relevant_frac_min..=cfg.relevant_frac_max);
    let n_rel = ((rel_frac * k as f64).round() as usize).clamp(1, k);

    // choose which positions are relevant, then a type for every position
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut relevant = vec![false; k];
    for &pos in order.iter().take(n_rel) {
        relevant[pos] = true;
    }
    let view_types: Vec<ViewType> = relevant
        .iter()
        .map(|&is_rel| {
            if is_rel {
                if rng.gen_bool(0.5) {
                    ViewType::RelevantA
                } else {
                    ViewType::RelevantB
                }
            } else {
                // decoys take three quarters of the irrelevant slots: the
                // benchmark's teeth come from ring-shaped views that carry
                // no label signal
                match rng.gen_range(0..8u8) {
                    0 => ViewType::Stripes,
                    1 => ViewType::Bars,
                    _ => ViewType::DecoyRing,
                }
            }
        })
        .collect();

    let nuisance: f64 = rng.gen_range(0.0..1.0);
    let instance_seeds: Vec<u64> = (0..k).map(|_| rng.next_u64()).collect();

    // ρ-noisy relevance channel: flip toward a uniform draw
    let oracle_relevance: Vec<f64> = view_types
        .iter()
        .map(|vt| {
            let flip = rng.gen_range(0.0..1.0) < cfg.oracle_noise;
            let uniform: f64 = rng.gen_range(0.0..1.0);
            if flip {
                uniform
            } else if vt.is_relevant() {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let d = cfg.input_dim();
    let mut pixels = Vec::with_capacity(k * d);
    for (idx, &vt) in view_types.iter().enumerate() {
        let mut irng = ChaCha8Rng::seed_from_u64(instance_seeds[idx]);
        pixels.extend(render_instance(vt, label, nuisance, cfg, &mut irng));
    }

    Ok(SyntheticStudy {
        id: id.to_string(),
        label: Some(label),
        side: cfg.image_side,
        pixels,
        view_types,
        oracle_relevance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub config: GeneratorConfig,
    pub fingerprint: String,
    pub train: Vec<SyntheticStudy>,
    pub val: Vec<SyntheticStudy>,
    pub test: Vec<SyntheticStudy>,
    pub unlabeled: Vec<SyntheticStudy>,
}

/// Class labels hitting the configured proportions exactly (largest-remainder
/// rounding), in seeded shuffled order.
fn split_labels(count: usize, proportions: &[f64; 3], rng: &mut impl Rng) -> Vec<u8> {
    let mut counts = [0usize; 3];
    let mut fracs: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (c, &p) in proportions.iter().enumerate() {
        let exact = p * count as f64;
        counts[c] = exact.floor() as usize;
        assigned += counts[c];
        fracs.push((c, exact - exact.floor()));
    }
    // distribute the remainder by largest fractional part, ties to low class
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for i in 0..count - assigned {
        counts[fracs[i % 3].0] += 1;
    }
    let mut labels = Vec::with_capacity(count);
    for (c, &n) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(c as u8).take(n));
    }
    labels.shuffle(rng);
    labels
}

const SPLIT_TRAIN: u64 = 1;
const SPLIT_VAL: u64 = 2;
const SPLIT_TEST: u64 = 3;
const SPLIT_UNLABELED: u64 = 4;

/// Full benchmark: labeled train/val/test plus an unlabeled pretraining set.
pub fn generate_bundle(cfg: &GeneratorConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let make_split = |tag: u64, prefix: &str, count: usize, strip: bool| -> Result<Vec<SyntheticStudy>> {
        let mut label_rng = stream(cfg.seed, &[tag, 0x1abe1]);
        let labels = split_labels(count, &cfg.class_proportions, &mut label_rng);
        let mut out = Vec::with_capacity(count);
        for (i, &label) in labels.iter().enumerate() {
            let study_seed = derive_seed(cfg.seed, &[tag, i as u64]);
            let id = format!("{prefix}-{i:05}");
            let mut study = generate_study(cfg, &id, label, study_seed)?;
            if strip {
                study.label = None;
            }
            out.push(study);
        }
        Ok(out)
    };
    Ok(DatasetBundle {
        config: cfg.clone(),
        fingerprint: cfg.fingerprint(),
        train: make_split(SPLIT_TRAIN, "train", cfg.train_count, false)?,
        val: make_split(SPLIT_VAL, "val", cfg.val_count, false)?,
        test: make_split(SPLIT_TEST, "test", cfg.test_count, false)?,
        unlabeled: make_split(SPLIT_UNLABELED, "unlab", cfg.unlabeled_count, true)?,
    })
}
