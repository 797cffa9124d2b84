//! Two-stage pipeline driver: dataset in, run directory out. Stage 1 output
//! is always consumed from its checkpoint file, so a reused checkpoint and a
//! freshly trained one produce identical fine-tuning trajectories.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autodiff::{load_checkpoint, save_checkpoint, ParameterSet, FLAG_PROJECTION_DISCARDED};
use crate::error::{Error, Result};
use crate::harness::audit::{audit_csv, audit_split, curve_csv, metrics_csv_row, METRICS_CSV_HEADER};
use crate::harness::config::{ExperimentConfig, PretrainMode};
use crate::harness::metrics::MetricsReport;
use crate::harness::train::run_training;
use crate::pretrain::{pretrain_bag_cl, pretrain_img_cl};
use crate::synth::{load_dataset, DatasetBundle};

// ── Manifest ──

/// Per-seed summary kept in the manifest.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_balanced_accuracy: f64,
    pub test_balanced_accuracy: f64,
    /// Tensors warm-started from the Stage 1 checkpoint.
    pub loaded_tensors: usize,
}

/// What the run directory claims about itself.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub dataset_fingerprint: String,
    pub pretrain: String,
    pub stage1_checkpoint: Option<String>,
    /// Checkpoint digest recorded by whoever wrote the file.
    pub stage1_fingerprint_written: Option<String>,
    /// Digest of the bytes this run actually loaded.
    pub stage1_fingerprint_consumed: Option<String>,
    /// True when written and consumed digests agree (vacuously true with no
    /// pretraining).
    pub stage1_fingerprint_matches: bool,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
}

/// Everything a finished pipeline run hands back.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub reports: Vec<(u64, MetricsReport)>,
    pub manifest: Manifest,
}

// ── Stage 1 plumbing ──

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut os = ckpt.as_os_str().to_owned();
    os.push(".sha256");
    PathBuf::from(os)
}

/// Trains Stage 1 for the configured mode, writes the checkpoint with its
/// projection head stripped, and records its digest in a sidecar file.
pub fn pretrain_stage1(bundle: &DatasetBundle, cfg: &ExperimentConfig) -> Result<(PathBuf, String)> {
    let input_dim = bundle.config.input_dim();
    let s1 = cfg.stage1_config(input_dim);
    let outcome = match cfg.pretrain {
        PretrainMode::None => {
            return Err(Error::Config("pretrain mode is none; nothing to pretrain".into()))
        }
        PretrainMode::BagCl => pretrain_bag_cl(&bundle.unlabeled, &bundle.train, &bundle.val, &s1)?,
        PretrainMode::ImgCl => pretrain_img_cl(&bundle.unlabeled, &bundle.train, &bundle.val, &s1)?,
    };
    let path = cfg.stage1_checkpoint_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    save_checkpoint(&path, &outcome.params, None, FLAG_PROJECTION_DISCARDED)?;
    let sha = file_sha256(&path)?;
    write_file(&sidecar_path(&path), format!("{sha}\n").as_bytes())?;
    Ok((path, sha))
}

/// Runs Stage 1 only when its checkpoint is not already on disk; returns
/// whether training happened.
pub fn ensure_stage1(bundle: &DatasetBundle, cfg: &ExperimentConfig) -> Result<bool> {
    if cfg.pretrain == PretrainMode::None {
        return Ok(false);
    }
    if cfg.stage1_checkpoint_path().exists() {
        return Ok(false);
    }
    pretrain_stage1(bundle, cfg)?;
    Ok(true)
}

/// Stage 1 weights plus the digests for the manifest cross-check.
#[derive(Debug)]
pub struct Stage1Init {
    pub params: ParameterSet,
    pub consumed: String,
    pub written: Option<String>,
}

/// Loads the Stage 1 checkpoint the configuration points at. Never trains:
/// a required-but-absent checkpoint is a configuration error.
pub fn load_stage1(cfg: &ExperimentConfig) -> Result<Option<Stage1Init>> {
    if cfg.pretrain == PretrainMode::None {
        return Ok(None);
    }
    let path = cfg.stage1_checkpoint_path();
    if !path.exists() {
        return Err(Error::Config(format!(
            "pretrain mode {} requires the stage 1 checkpoint {}, which does not exist; run pretraining first",
            cfg.pretrain,
            path.display()
        )));
    }
    let ck = load_checkpoint(&path)?;
    if ck.flags & FLAG_PROJECTION_DISCARDED == 0 {
        return Err(Error::Config(format!(
            "stage 1 checkpoint {} still carries its projection head",
            path.display()
        )));
    }
    let consumed = file_sha256(&path)?;
    let written = fs::read_to_string(sidecar_path(&path))
        .ok()
        .map(|s| s.trim().to_string());
    Ok(Some(Stage1Init { params: ck.params, consumed, written }))
}

// ── Orchestration ──

fn run_seeds(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    run_dir: &Path,
    stage1: Option<&Stage1Init>,
) -> Result<(Vec<(u64, MetricsReport)>, Vec<RunRecord>, String)> {
    let mut reports = Vec::new();
    let mut records = Vec::new();
    let mut metrics = String::from(METRICS_CSV_HEADER);
    for &seed in seeds {
        let (outcome, report) = run_training(bundle, cfg, seed, stage1.map(|s| &s.params))?;
        save_checkpoint(
            run_dir.join(format!("stage2-seed{seed}.ckpt")),
            &outcome.model.params,
            None,
            0,
        )?;
        let audit = audit_split(&outcome.model, &bundle.test)?;
        write_file(&run_dir.join(format!("audit-seed{seed}.csv")), audit_csv(&audit).as_bytes())?;
        write_file(&run_dir.join(format!("curve-seed{seed}.csv")), curve_csv(&report.curve).as_bytes())?;
        metrics.push_str(&metrics_csv_row(
            seed,
            outcome.best_epoch,
            outcome.epochs_run,
            outcome.best_val_balanced,
            &report,
        ));
        records.push(RunRecord {
            seed,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.epochs_run,
            val_balanced_accuracy: outcome.best_val_balanced,
            test_balanced_accuracy: report.balanced_accuracy,
            loaded_tensors: outcome.loaded_tensors,
        });
        reports.push((seed, report));
    }
    Ok((reports, records, metrics))
}

fn finish_run(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    seeds: &[u64],
    run_dir: PathBuf,
    stage1: Option<Stage1Init>,
) -> Result<PipelineOutcome> {
    let (reports, records, metrics) = run_seeds(bundle, cfg, seeds, &run_dir, stage1.as_ref())?;
    write_file(&run_dir.join("metrics.csv"), metrics.as_bytes())?;
    let manifest = Manifest {
        dataset: cfg.dataset.clone(),
        dataset_fingerprint: bundle.fingerprint.clone(),
        pretrain: cfg.pretrain.to_string(),
        stage1_checkpoint: stage1
            .as_ref()
            .map(|_| cfg.stage1_checkpoint_path().display().to_string()),
        stage1_fingerprint_written: stage1.as_ref().and_then(|s| s.written.clone()),
        stage1_fingerprint_consumed: stage1.as_ref().map(|s| s.consumed.clone()),
        stage1_fingerprint_matches: match &stage1 {
            None => true,
            Some(s) => s.written.as_deref() == Some(s.consumed.as_str()),
        },
        seeds: seeds.to_vec(),
        runs: records,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format { path: "manifest.json".into(), detail: e.to_string() })?;
    write_file(&run_dir.join("manifest.json"), json.as_bytes())?;
    Ok(PipelineOutcome { run_dir, reports, manifest })
}

fn prepare_run_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let run_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(run_dir.display().to_string(), e))?;
    write_file(&run_dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    Ok(run_dir)
}

/// Full experiment: load data, run Stage 1 unless its checkpoint already
/// exists, fine-tune every configured seed, and write all artifacts.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome> {
    let bundle = load_dataset(Path::new(&cfg.dataset))?;
    cfg.validate(bundle.config.input_dim())?;
    let run_dir = prepare_run_dir(cfg)?;
    ensure_stage1(&bundle, cfg)?;
    let stage1 = load_stage1(cfg)?;
    finish_run(&bundle, cfg, &cfg.seeds.clone(), run_dir, stage1)
}

/// Stage 2 only, for one seed: the Stage 1 checkpoint must already exist
/// when the mode calls for one.
pub fn run_train_only(cfg: &ExperimentConfig) -> Result<PipelineOutcome> {
    let bundle = load_dataset(Path::new(&cfg.dataset))?;
    cfg.validate(bundle.config.input_dim())?;
    let stage1 = load_stage1(cfg)?;
    let run_dir = prepare_run_dir(cfg)?;
    finish_run(&bundle, cfg, &[cfg.seed], run_dir, stage1)
}

// ── Tests ──
