//! Momentum-contrast pretraining. A query network is trained by InfoNCE
//! against a momentum-tracked key network and a FIFO queue of past keys; the
//! same loss drives both the instance-level and bag-level flavors, which
//! differ only in whether attention pooling sits between encoder and
//! projection head. The projection head is discarded from the returned
//! weights.

use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{augment, augment_bag, AugmentationPolicy};
use super::knn::{embed_bag_mean, embed_bag_pooled, knn_probe};
use super::queue::NegativeQueue;
use crate::autodiff::{NodeId, ParameterSet, SgdConfig, SgdOptimizer, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{attention_logits, combine_attention, encode_bag, EncoderConfig};
use crate::model::attention::init_branch;
use crate::rng::stream;
use crate::synth::SyntheticStudy;

// ── Configuration ────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMode {
    /// Pool with the combined dual-branch weights (default).
    Combined,
    /// Pool with branch-A weights alone.
    BranchA,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub encoder: EncoderConfig,
    pub attention_dim: usize,
    pub proj_dim: usize,
    pub temperature: f64,
    /// Key-network momentum m; the key tracks m·θ_k + (1−m)·θ_q.
    pub momentum: f64,
    pub queue_capacity: usize,
    pub lr: f64,
    /// Multiplier on `lr`, tunable per benchmark scale.
    pub lr_scale: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    /// Instance-level batch size; the bag-level loop always uses batch 1.
    pub batch_size: usize,
    pub epochs: usize,
    /// Consecutive probe evaluations without improvement before stopping.
    pub probe_patience: usize,
    pub probe_k: usize,
    pub pooling: PoolingMode,
    pub augment: AugmentationPolicy,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            encoder: EncoderConfig::default(),
            attention_dim: 128,
            proj_dim: 128,
            temperature: 0.1,
            momentum: 0.99,
            queue_capacity: 4096,
            lr: 0.00015,
            lr_scale: 1.0,
            sgd_momentum: 0.9,
            weight_decay: 0.0001,
            batch_size: 512,
            epochs: 200,
            probe_patience: 20,
            probe_k: 5,
            pooling: PoolingMode::Combined,
            augment: AugmentationPolicy::default(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.augment.validate()?;
        if self.attention_dim == 0 || self.proj_dim == 0 {
            return Err(Error::Config("zero attention or projection dimension".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Domain(format!("temperature {} not positive", self.temperature)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.queue_capacity == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("zero queue capacity, batch size, or epochs".into()));
        }
        if self.lr <= 0.0 || self.lr_scale <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.probe_k == 0 {
            return Err(Error::Domain("probe k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_lr(&self) -> f64 {
        self.lr * self.lr_scale
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.effective_lr(),
            momentum: self.sgd_momentum,
            weight_decay: self.weight_decay,
        }
    }
}

// ── Parameters ───────────────────────────────────────────────────────────

/// Registers the projection head: `proj.w0`/`proj.b0` (M→M) and
/// `proj.w1`/`proj.b1` (M→proj_dim).
pub fn init_projection(
    params: &mut ParameterSet,
    embed_dim: usize,
    proj_dim: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    params.insert("proj.w0", Tensor::uniform_fan_in(embed_dim, embed_dim, embed_dim, rng))?;
    params.insert("proj.b0", Tensor::zeros(&[embed_dim]))?;
    params.insert("proj.w1", Tensor::uniform_fan_in(proj_dim, embed_dim, embed_dim, rng))?;
    params.insert("proj.b1", Tensor::zeros(&[proj_dim]))?;
    Ok(())
}

/// Fresh query parameters for the bag-level task: encoder, both attention
/// branches, projection head.
pub fn init_bag_cl_params(cfg: &PretrainConfig) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[TAG_INIT]);
    let mut params = ParameterSet::default();
    cfg.encoder.init_params(&mut params, &mut rng)?;
    let m = cfg.encoder.embed_dim();
    init_branch(&mut params, "attn_a", cfg.attention_dim, m, &mut rng)?;
    init_branch(&mut params, "attn_b", cfg.attention_dim, m, &mut rng)?;
    init_projection(&mut params, m, cfg.proj_dim, &mut rng)?;
    Ok(params)
}

/// Fresh query parameters for the instance-level task: encoder and
/// projection head only.
pub fn init_img_cl_params(cfg: &PretrainConfig) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[TAG_INIT]);
    let mut params = ParameterSet::default();
    cfg.encoder.init_params(&mut params, &mut rng)?;
    init_projection(&mut params, cfg.encoder.embed_dim(), cfg.proj_dim, &mut rng)?;
    Ok(params)
}

/// Copy of `params` without the projection head.
pub fn strip_projection(params: &ParameterSet) -> Result<ParameterSet> {
    let mut out = ParameterSet::default();
    for (name, value) in params.iter() {
        if !name.starts_with("proj.") {
            out.insert(name, value.clone())?;
        }
    }
    Ok(out)
}

/// Query parameters plus a momentum-tracked key copy of identical shapes.
/// The key side is only ever touched by [`Self::momentum_update`].
pub struct EncoderPair {
    pub query: ParameterSet,
    pub key: ParameterSet,
    momentum: f64,
}

impl EncoderPair {
    pub fn new(query: ParameterSet, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        let key = query.clone();
        Ok(EncoderPair { query, key, momentum })
    }

    /// θ_k ← m·θ_k + (1−m)·θ_q, element-wise.
    pub fn momentum_update(&mut self) -> Result<()> {
        self.key.ema_update(&self.query, self.momentum)
    }
}

// ── Embeddings ───────────────────────────────────────────────────────────

fn project(tape: &mut Tape, params: &ParameterSet, z: NodeId) -> Result<NodeId> {
    let w0 = tape.param("proj.w0", params.get("proj.w0")?);
    let b0 = tape.param("proj.b0", params.get("proj.b0")?);
    let y = tape.matvec(w0, z)?;
    let y = tape.add(y, b0)?;
    let y = tape.relu(y)?;
    let w1 = tape.param("proj.w1", params.get("proj.w1")?);
    let b1 = tape.param("proj.b1", params.get("proj.b1")?);
    let y = tape.matvec(w1, y)?;
    let y = tape.add(y, b1)?;
    tape.l2_normalize(y)
}

/// Attention-pooled bag representation σ(f(X)) before projection.
pub fn pooled_z(
    tape: &mut Tape,
    cfg: &PretrainConfig,
    params: &ParameterSet,
    bag: &Tensor,
) -> Result<NodeId> {
    let h = encode_bag(tape, &cfg.encoder, params, bag)?;
    let la = attention_logits(tape, params, "attn_a", h)?;
    let a = tape.softmax_temp(la, 1.0)?;
    let weights = match cfg.pooling {
        PoolingMode::BranchA => a,
        PoolingMode::Combined => {
            let lb = attention_logits(tape, params, "attn_b", h)?;
            let b = tape.softmax_temp(lb, 1.0)?;
            combine_attention(tape, a, b)?
        }
    };
    tape.vecmat(weights, h)
}

/// Full bag embedding ψ(σ(f(X))), unit norm.
pub fn bag_embed(
    tape: &mut Tape,
    cfg: &PretrainConfig,
    params: &ParameterSet,
    bag: &Tensor,
) -> Result<NodeId> {
    let z = pooled_z(tape, cfg, params, bag)?;
    project(tape, params, z)
}

/// Instance embedding ψ(f(x)), unit norm; no pooling involved.
pub fn instance_embed(
    tape: &mut Tape,
    cfg: &PretrainConfig,
    params: &ParameterSet,
    pixels: &[f64],
) -> Result<NodeId> {
    let one_row = Tensor::matrix(1, pixels.len(), pixels.to_vec())?;
    let h = encode_bag(tape, &cfg.encoder, params, &one_row)?;
    let z = tape.row(h, 0)?;
    project(tape, params, z)
}

fn eval_key_embedding(
    cfg: &PretrainConfig,
    params: &ParameterSet,
    bag: Option<&Tensor>,
    pixels: Option<&[f64]>,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let node = match (bag, pixels) {
        (Some(b), None) => bag_embed(&mut tape, cfg, params, b)?,
        (None, Some(p)) => instance_embed(&mut tape, cfg, params, p)?,
        _ => return Err(Error::Config("key embedding needs exactly one input".into())),
    };
    Ok(tape.value(node).clone())
}

// ── InfoNCE ──────────────────────────────────────────────────────────────

fn check_unit(name: &str, data: &[f64]) -> Result<()> {
    let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("{name} norm {norm} is not 1")));
    }
    Ok(())
}

/// −log[ exp(qᵀk⁺/t) / (exp(qᵀk⁺/t) + Σ_p exp(qᵀk⁻_p/t)) ], built as a
/// (P+1)-way softmax cross-entropy with the positive in slot 0. Gradients
/// flow to `q` only; keys and negatives enter as constants.
pub fn info_nce(
    tape: &mut Tape,
    q: NodeId,
    k_pos: &Tensor,
    negatives: &Tensor,
    temperature: f64,
) -> Result<NodeId> {
    if temperature <= 0.0 {
        return Err(Error::Domain(format!("temperature {temperature} not positive")));
    }
    let dim = tape.value(q).len();
    if k_pos.rank() != 1 || k_pos.len() != dim || negatives.rank() != 2 || negatives.cols() != dim
    {
        return Err(Error::Shape {
            op: "info_nce",
            detail: format!("q dim {dim}, k {:?}, negatives {:?}", k_pos.shape, negatives.shape),
        });
    }
    check_unit("query", &tape.value(q).data.clone())?;
    check_unit("positive key", &k_pos.data)?;
    for p in 0..negatives.rows() {
        check_unit("negative key", &negatives.data[p * dim..(p + 1) * dim])?;
    }
    let mut keys = Vec::with_capacity((negatives.rows() + 1) * dim);
    keys.extend_from_slice(&k_pos.data);
    keys.extend_from_slice(&negatives.data);
    let keys = tape.constant(Tensor { shape: vec![negatives.rows() + 1, dim], data: keys });
    let sims = tape.matvec(keys, q)?;
    let probs = tape.softmax_temp(sims, temperature)?;
    tape.pick_neg_log(probs, 0)
}

// ── Training loops ───────────────────────────────────────────────────────

const TAG_INIT: u64 = 0x70;
const TAG_QUEUE: u64 = 0x71;
const TAG_ORDER: u64 = 0x72;
const TAG_AUG: u64 = 0x73;

#[derive(Clone, Debug)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub mean_loss: f64,
    pub probe_accuracy: f64,
}

pub struct PretrainOutcome {
    /// Query weights at the best probe epoch, projection head removed.
    pub params: ParameterSet,
    pub history: Vec<PretrainEpoch>,
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_probe: f64,
}

fn check_probe_sets(
    probe_train: &[SyntheticStudy],
    probe_val: &[SyntheticStudy],
) -> Result<()> {
    if probe_train.is_empty() || probe_val.is_empty() {
        return Err(Error::Config("empty probe split".into()));
    }
    for s in probe_train.iter().chain(probe_val) {
        if s.label.is_none() {
            return Err(Error::Config(format!("probe study {} has no label", s.id)));
        }
    }
    Ok(())
}

fn probe_labels(studies: &[SyntheticStudy]) -> Vec<u8> {
    studies.iter().map(|s| s.label.expect("checked labeled")).collect()
}

pub(crate) struct EarlyStop {
    pub(crate) best: f64,
    pub(crate) best_epoch: usize,
    bad: usize,
    pub(crate) snapshot: ParameterSet,
}

impl EarlyStop {
    pub(crate) fn new(params: &ParameterSet) -> Self {
        EarlyStop { best: f64::NEG_INFINITY, best_epoch: 0, bad: 0, snapshot: params.clone() }
    }

    /// Records one probe result; true means patience is exhausted.
    pub(crate) fn observe(&mut self, epoch: usize, acc: f64, params: &ParameterSet, patience: usize) -> bool {
        if acc > self.best {
            self.best = acc;
            self.best_epoch = epoch;
            self.snapshot = params.clone();
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        self.bad >= patience || patience == 0
    }
}

/// Bag-level contrastive pretraining: batch 1, one key enqueued per step,
/// early stopping on a bag-embedding probe. Returns encoder and attention
/// weights; the projection head is discarded.
pub fn pretrain_bag_cl(
    unlabeled: &[SyntheticStudy],
    probe_train: &[SyntheticStudy],
    probe_val: &[SyntheticStudy],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if unlabeled.is_empty() {
        return Err(Error::Config("empty pretraining dataset".into()));
    }
    check_probe_sets(probe_train, probe_val)?;
    let side = unlabeled[0].side;

    let mut pair = EncoderPair::new(init_bag_cl_params(cfg)?, cfg.momentum)?;
    let mut queue = NegativeQueue::new(cfg.queue_capacity, cfg.proj_dim)?;
    queue.seed_fill(&mut stream(cfg.seed, &[TAG_QUEUE]));
    let mut opt = SgdOptimizer::new(cfg.sgd());

    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut stopper = EarlyStop::new(&pair.query);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..unlabeled.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[TAG_ORDER, epoch as u64]));
        let mut loss_sum = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let bag = unlabeled[i].bag_tensor();
            let tags = [TAG_AUG, epoch as u64, step as u64];
            let xq = augment_bag(&bag, side, &cfg.augment, &mut stream(cfg.seed, &[tags[0], tags[1], tags[2], 0]))?;
            let xk = augment_bag(&bag, side, &cfg.augment, &mut stream(cfg.seed, &[tags[0], tags[1], tags[2], 1]))?;
            let key = eval_key_embedding(cfg, &pair.key, Some(&xk), None)?;

            let mut tape = Tape::new();
            let q = bag_embed(&mut tape, cfg, &pair.query, &xq)?;
            let negatives = queue.as_matrix();
            let loss = info_nce(&mut tape, q, &key, &negatives, cfg.temperature)?;
            step_losses.push(tape.value(loss).scalar_value()?);
            loss_sum += *step_losses.last().expect("just pushed");
            tape.backward(loss, &mut pair.query)?;
            opt.step(&mut pair.query)?;
            pair.momentum_update()?;
            queue.push(&key)?;
        }

        let embed = |s: &SyntheticStudy| embed_bag_pooled(cfg, &pair.query, s);
        let train_e = probe_train.iter().map(embed).collect::<Result<Vec<_>>>()?;
        let val_e = probe_val.iter().map(embed).collect::<Result<Vec<_>>>()?;
        let acc = knn_probe(&train_e, &probe_labels(probe_train), &val_e, &probe_labels(probe_val), cfg.probe_k)?;
        history.push(PretrainEpoch { epoch, mean_loss: loss_sum / order.len() as f64, probe_accuracy: acc });
        if stopper.observe(epoch, acc, &pair.query, cfg.probe_patience) {
            break;
        }
    }
    Ok(PretrainOutcome {
        params: strip_projection(&stopper.snapshot)?,
        history,
        step_losses,
        best_epoch: stopper.best_epoch,
        best_probe: stopper.best,
    })
}

/// Instance-level contrastive pretraining over all instances of all bags;
/// batches average the per-instance losses and enqueue every key. Probes use
/// mean-pooled instance embeddings per bag. Returns encoder weights only.
pub fn pretrain_img_cl(
    unlabeled: &[SyntheticStudy],
    probe_train: &[SyntheticStudy],
    probe_val: &[SyntheticStudy],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if unlabeled.is_empty() {
        return Err(Error::Config("empty pretraining dataset".into()));
    }
    check_probe_sets(probe_train, probe_val)?;
    let side = unlabeled[0].side;
    let d = side * side;

    let mut units: Vec<(usize, usize)> = Vec::new();
    for (s, study) in unlabeled.iter().enumerate() {
        for k in 0..study.k() {
            units.push((s, k));
        }
    }

    let mut pair = EncoderPair::new(init_img_cl_params(cfg)?, cfg.momentum)?;
    let mut queue = NegativeQueue::new(cfg.queue_capacity, cfg.proj_dim)?;
    queue.seed_fill(&mut stream(cfg.seed, &[TAG_QUEUE]));
    let mut opt = SgdOptimizer::new(cfg.sgd());

    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut stopper = EarlyStop::new(&pair.query);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &[TAG_ORDER, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let negatives = queue.as_matrix();
            let mut losses = Vec::with_capacity(chunk.len());
            let mut keys = Vec::with_capacity(chunk.len());
            for (j, &u) in chunk.iter().enumerate() {
                let (s, k) = units[u];
                let pixels: Vec<f64> =
                    unlabeled[s].instance_pixels(k).iter().map(|&p| p as f64).collect();
                debug_assert_eq!(pixels.len(), d);
                let tags = [epoch as u64, batch_idx as u64, j as u64];
                let xq = augment(&pixels, side, &cfg.augment, &mut stream(cfg.seed, &[TAG_AUG, tags[0], tags[1], tags[2], 0]))?;
                let xk = augment(&pixels, side, &cfg.augment, &mut stream(cfg.seed, &[TAG_AUG, tags[0], tags[1], tags[2], 1]))?;
                let key = eval_key_embedding(cfg, &pair.key, None, Some(&xk))?;
                let q = instance_embed(&mut tape, cfg, &pair.query, &xq)?;
                losses.push(info_nce(&mut tape, q, &key, &negatives, cfg.temperature)?);
                keys.push(key);
            }
            let total = tape.add_n(&losses)?;
            let mean = tape.scale(total, 1.0 / chunk.len() as f64)?;
            step_losses.push(tape.value(mean).scalar_value()?);
            loss_sum += *step_losses.last().expect("just pushed");
            batches += 1;
            tape.backward(mean, &mut pair.query)?;
            opt.step(&mut pair.query)?;
            pair.momentum_update()?;
            queue.push_batch(keys.iter())?;
        }

        let embed = |s: &SyntheticStudy| embed_bag_mean(&cfg.encoder, &pair.query, s);
        let train_e = probe_train.iter().map(embed).collect::<Result<Vec<_>>>()?;
        let val_e = probe_val.iter().map(embed).collect::<Result<Vec<_>>>()?;
        let acc = knn_probe(&train_e, &probe_labels(probe_train), &val_e, &probe_labels(probe_val), cfg.probe_k)?;
        history.push(PretrainEpoch { epoch, mean_loss: loss_sum / batches as f64, probe_accuracy: acc });
        if stopper.observe(epoch, acc, &pair.query, cfg.probe_patience) {
            break;
        }
    }
    Ok(PretrainOutcome {
        params: strip_projection(&stopper.snapshot)?,
        history,
        step_losses,
        best_epoch: stopper.best_epoch,
        best_probe: stopper.best,
    })
}
