//! Stage-2 supervised fine-tuning: SGD with a cosine schedule, validation
//! balanced accuracy tracked every epoch, best-checkpoint early stopping.

use rand::seq::SliceRandom;

use crate::autodiff::optim::{cosine_lr, SgdOptimizer};
use crate::autodiff::params::ParameterSet;
use crate::autodiff::tape::Tape;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::{balanced_accuracy, MetricsReport};
use crate::model::mil::{abmil_loss, samil_loss, MilModel, Variant};
use crate::pretrain::moco::EarlyStop;
use crate::rng::stream;
use crate::synth::generate::{DatasetBundle, SyntheticStudy};

const TAG_TRAIN_ORDER: u64 = 0x80;

// ── Outcome types ──

/// One epoch of the fine-tuning history.
#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_balanced_accuracy: f64,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
}

/// A fine-tuned model plus the evidence for how it was selected.
pub struct TrainOutcome {
    pub model: MilModel,
    pub best_epoch: usize,
    pub best_val_balanced: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    /// Tensors adopted from the warm-start weights, if any.
    pub loaded_tensors: usize,
}

/// Per-split predictions, probabilities, and attention for metric reports.
pub struct SplitEval {
    pub y_true: Vec<u8>,
    pub y_pred: Vec<u8>,
    pub probs: Vec<Vec<f64>>,
    /// Per study: final attention weights and oracle relevance, instance order.
    pub attention: Vec<(Vec<f64>, Vec<f64>)>,
}

// ── Training loop ──

fn labeled(study: &SyntheticStudy) -> Result<usize> {
    study
        .label
        .map(|l| l as usize)
        .ok_or_else(|| Error::Config(format!("study {} has no label for supervised training", study.id)))
}

/// Fine-tunes one model on the bundle's train split. `init` warm-starts every
/// parameter whose name and shape match. Selection: the strictly best
/// validation balanced accuracy, restored before returning.
pub fn train_model(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    seed: u64,
    init: Option<&ParameterSet>,
) -> Result<TrainOutcome> {
    let input_dim = bundle.config.input_dim();
    cfg.validate(input_dim)?;
    if bundle.train.is_empty() || bundle.val.is_empty() {
        return Err(Error::Config("training needs non-empty train and val splits".into()));
    }
    let model_cfg = cfg.model_config(input_dim)?;
    let mut model = MilModel::new(model_cfg, seed)?;
    let loaded_tensors = match init {
        Some(src) => model.load_matching(src)?,
        None => 0,
    };

    let labels: Vec<usize> = bundle.train.iter().map(labeled).collect::<Result<_>>()?;
    let val_true: Vec<u8> =
        bundle.val.iter().map(|s| labeled(s).map(|l| l as u8)).collect::<Result<_>>()?;

    let mut opt = SgdOptimizer::new(cfg.sgd());
    let total_steps = cfg.epochs * bundle.train.len();
    let mut global_step = 0usize;
    let mut history = Vec::new();
    let mut stopper = EarlyStop::new(&model.params);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..bundle.train.len()).collect();
        order.shuffle(&mut stream(seed, &[TAG_TRAIN_ORDER, epoch as u64]));
        let epoch_lr = cosine_lr(global_step, total_steps, cfg.lr)?;
        let mut loss_sum = 0.0;
        for &i in &order {
            opt.set_lr(cosine_lr(global_step, total_steps, cfg.lr)?);
            global_step += 1;
            let study = &bundle.train[i];
            let bag = study.bag_tensor();
            let mut tape = Tape::new();
            let loss = match model.cfg.variant {
                Variant::Samil => {
                    samil_loss(
                        &mut tape,
                        &model.cfg,
                        &model.params,
                        &bag,
                        labels[i],
                        study.oracle_relevance(),
                        cfg.lambda_sa,
                        cfg.tau_v,
                    )?
                    .loss
                }
                Variant::Abmil | Variant::AbmilGated => {
                    abmil_loss(&mut tape, &model.cfg, &model.params, &bag, labels[i])?.0
                }
            };
            loss_sum += tape.value(loss).scalar_value()?;
            tape.backward(loss, &mut model.params)?;
            opt.step(&mut model.params)?;
        }

        let val_pred: Vec<u8> = bundle
            .val
            .iter()
            .map(|s| model.predict(&s.bag_tensor()).map(|p| p.predicted_label() as u8))
            .collect::<Result<_>>()?;
        let acc = balanced_accuracy(&val_true, &val_pred)?;
        history.push(EpochRecord {
            epoch,
            mean_loss: loss_sum / order.len() as f64,
            val_balanced_accuracy: acc,
            lr: epoch_lr,
        });
        if stopper.observe(epoch, acc, &model.params, cfg.patience) {
            break;
        }
    }

    let epochs_run = history.len();
    model.params = stopper.snapshot.clone();
    Ok(TrainOutcome {
        model,
        best_epoch: stopper.best_epoch,
        best_val_balanced: stopper.best,
        epochs_run,
        history,
        loaded_tensors,
    })
}

// ── Evaluation ──

/// Runs the model over a labeled split, collecting everything the metric
/// suite consumes.
pub fn evaluate_split(model: &MilModel, studies: &[SyntheticStudy]) -> Result<SplitEval> {
    if studies.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let mut eval = SplitEval {
        y_true: Vec::with_capacity(studies.len()),
        y_pred: Vec::with_capacity(studies.len()),
        probs: Vec::with_capacity(studies.len()),
        attention: Vec::with_capacity(studies.len()),
    };
    for study in studies {
        let pred = model.predict(&study.bag_tensor())?;
        eval.y_true.push(labeled(study)? as u8);
        eval.y_pred.push(pred.predicted_label() as u8);
        eval.attention.push((pred.final_attention().to_vec(), study.oracle_relevance().to_vec()));
        eval.probs.push(pred.probs);
    }
    Ok(eval)
}

/// Full metric report for an evaluated split.
pub fn split_report(eval: &SplitEval, max_rank: usize) -> Result<MetricsReport> {
    MetricsReport::compute(&eval.y_true, &eval.y_pred, &eval.probs, &eval.attention, max_rank)
}

/// Trains on the bundle, then reports test-split metrics for the selected
/// checkpoint.
pub fn run_training(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    seed: u64,
    init: Option<&ParameterSet>,
) -> Result<(TrainOutcome, MetricsReport)> {
    let outcome = train_model(bundle, cfg, seed, init)?;
    let eval = evaluate_split(&outcome.model, &bundle.test)?;
    let report = split_report(&eval, cfg.audit_max_rank)?;
    Ok((outcome, report))
}

// ── Tests ──
