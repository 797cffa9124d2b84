//! Hyperparameter sweep over the λ_SA × τ_v grid, every seed trained at
//! every cell, selection by mean validation balanced accuracy.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::pipeline::{ensure_stage1, load_stage1};
use crate::harness::train::train_model;
use crate::synth::{load_dataset, DatasetBundle};

// ── Records ──

/// One trained grid cell for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub lambda_sa: f64,
    pub tau_v: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_balanced_accuracy: f64,
}

/// Winning cell: the (λ, τ) pair with the best mean validation balanced
/// accuracy across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSelection {
    pub lambda_sa: f64,
    pub tau_v: f64,
    pub mean_val_balanced_accuracy: f64,
}

// ── Sweep ──

/// Trains the full grid. Grid order is λ outer, τ inner, seeds innermost, so
/// the CSV reads in configuration order.
pub fn run_sweep(
    bundle: &DatasetBundle,
    cfg: &ExperimentConfig,
    init: Option<&crate::autodiff::ParameterSet>,
) -> Result<Vec<SweepRecord>> {
    cfg.validate(bundle.config.input_dim())?;
    let mut records = Vec::new();
    for &lambda_sa in &cfg.lambda_grid {
        for &tau_v in &cfg.tau_grid {
            let mut cell = cfg.clone();
            cell.lambda_sa = lambda_sa;
            cell.tau_v = tau_v;
            for &seed in &cfg.seeds {
                let out = train_model(bundle, &cell, seed, init)?;
                records.push(SweepRecord {
                    lambda_sa,
                    tau_v,
                    seed,
                    best_epoch: out.best_epoch,
                    epochs_run: out.epochs_run,
                    val_balanced_accuracy: out.best_val_balanced,
                });
            }
        }
    }
    Ok(records)
}

/// Picks the grid cell with the highest seed-mean validation balanced
/// accuracy; ties keep the earlier cell in grid order.
pub fn select_best(records: &[SweepRecord]) -> Result<SweepSelection> {
    if records.is_empty() {
        return Err(Error::Config("cannot select from an empty sweep".into()));
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !cells.contains(&(r.lambda_sa, r.tau_v)) {
            cells.push((r.lambda_sa, r.tau_v));
        }
    }
    let mut best: Option<SweepSelection> = None;
    for (lambda_sa, tau_v) in cells {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.lambda_sa == lambda_sa && r.tau_v == tau_v)
            .map(|r| r.val_balanced_accuracy)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if best.map_or(true, |b| mean > b.mean_val_balanced_accuracy) {
            best = Some(SweepSelection { lambda_sa, tau_v, mean_val_balanced_accuracy: mean });
        }
    }
    Ok(best.expect("non-empty records"))
}

/// Sweep records as CSV, one row per (cell, seed).
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out =
        String::from("lambda_sa,tau_v,seed,best_epoch,epochs_run,val_balanced_accuracy\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.lambda_sa, r.tau_v, r.seed, r.best_epoch, r.epochs_run, r.val_balanced_accuracy
        ));
    }
    out
}

/// Loads data and any Stage 1 checkpoint, trains the grid, and writes
/// `sweep.csv` into the run directory.
pub fn run_sweep_to_dir(cfg: &ExperimentConfig) -> Result<(PathBuf, Vec<SweepRecord>, SweepSelection)> {
    let bundle = load_dataset(Path::new(&cfg.dataset))?;
    cfg.validate(bundle.config.input_dim())?;
    ensure_stage1(&bundle, cfg)?;
    let stage1 = load_stage1(cfg)?;
    let records = run_sweep(&bundle, cfg, stage1.as_ref().map(|s| &s.params))?;
    let selection = select_best(&records)?;
    let run_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| Error::io(run_dir.display().to_string(), e))?;
    std::fs::write(run_dir.join("sweep.csv"), sweep_csv(&records))
        .map_err(|e| Error::io(run_dir.join("sweep.csv").display().to_string(), e))?;
    Ok((run_dir, records, selection))
}

// ── Tests ──
