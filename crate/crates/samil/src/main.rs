//! samil command line: synthetic data generation, contrastive pretraining,
//! attention-supervised fine-tuning, evaluation, audit, and grid sweeps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use samil::autodiff::load_checkpoint;
use samil::harness::audit::{audit_csv, audit_split, metrics_csv_row, METRICS_CSV_HEADER};
use samil::harness::config::{ExperimentConfig, PretrainMode};
use samil::harness::pipeline::{pretrain_stage1, run_pipeline, run_train_only};
use samil::harness::sweep::run_sweep_to_dir;
use samil::harness::train::{evaluate_split, split_report};
use samil::model::{MilModel, Variant};
use samil::synth::{generate_bundle, load_dataset, save_dataset, GeneratorConfig};

#[derive(Parser)]
#[command(name = "samil", version, about = "Attention-pooled study classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    GenData(GenDataArgs),
    /// Stage 1: contrastive pretraining; writes the stage 1 checkpoint.
    Pretrain(ExperimentArgs),
    /// Stage 2: fine-tune one seed from any existing stage 1 checkpoint.
    Train(ExperimentArgs),
    /// Full pipeline: pretrain if needed, then fine-tune every seed.
    Run(ExperimentArgs),
    /// Evaluate a trained checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Emit the attention audit CSV for a trained checkpoint.
    Audit(EvalArgs),
    /// Train the full lambda x tau x seed grid and write sweep.csv.
    Sweep(ExperimentArgs),
}

// ── gen-data ──

#[derive(Args)]
struct GenDataArgs {
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    image_side: Option<usize>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    val_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    unlabeled_count: Option<usize>,
    /// Three comma-separated class proportions, e.g. 0.4,0.3,0.3.
    #[arg(long, value_delimiter = ',')]
    class_proportions: Option<Vec<f64>>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    relevant_frac_min: Option<f64>,
    #[arg(long)]
    relevant_frac_max: Option<f64>,
    #[arg(long)]
    oracle_noise: Option<f64>,
    #[arg(long)]
    signal_scale: Option<f64>,
    #[arg(long)]
    distractor_corr: Option<f64>,
}

impl GenDataArgs {
    fn build(&self) -> anyhow::Result<GeneratorConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => GeneratorConfig::default(),
        };
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        take!(seed);
        take!(image_side);
        take!(train_count);
        take!(val_count);
        take!(test_count);
        take!(unlabeled_count);
        take!(k_min);
        take!(k_max);
        take!(relevant_frac_min);
        take!(relevant_frac_max);
        take!(oracle_noise);
        take!(signal_scale);
        take!(distractor_corr);
        if let Some(p) = &self.class_proportions {
            let [a, b, c] = p.as_slice() else {
                bail!("--class-proportions needs exactly three values");
            };
            cfg.class_proportions = [*a, *b, *c];
        }
        Ok(cfg)
    }
}

// ── experiment commands ──

#[derive(Args)]
struct ExperimentArgs {
    /// TOML file with experiment settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Model variant: samil, abmil, or abmil-gated.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Pretraining mode: none, img-cl, or bag-cl.
    #[arg(long, value_parser = parse_pretrain)]
    pretrain: Option<PretrainMode>,
    /// Stage 1 checkpoint path (default: <out-dir>/stage1.ckpt).
    #[arg(long)]
    stage1_checkpoint: Option<String>,
    #[arg(long)]
    lambda_sa: Option<f64>,
    #[arg(long)]
    tau_v: Option<f64>,
    /// Comma-separated lambda grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Comma-separated tau grid for sweeps.
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sgd_momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Seed for stage 1 and single-seed training.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seed list for multi-seed runs and sweeps.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated encoder widths, e.g. 500,250,500.
    #[arg(long, value_delimiter = ',')]
    encoder_widths: Option<Vec<usize>>,
    #[arg(long)]
    attention_dim: Option<usize>,
    /// Stop attention-loss gradients at the embeddings.
    #[arg(long)]
    sa_stop_grad_at_h: bool,
    #[arg(long)]
    audit_max_rank: Option<usize>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "samil" => Ok(Variant::Samil),
        "abmil" => Ok(Variant::Abmil),
        "abmil-gated" => Ok(Variant::AbmilGated),
        other => Err(format!("unknown variant '{other}' (samil, abmil, abmil-gated)")),
    }
}

fn parse_pretrain(s: &str) -> Result<PretrainMode, String> {
    match s {
        "none" => Ok(PretrainMode::None),
        "img-cl" => Ok(PretrainMode::ImgCl),
        "bag-cl" => Ok(PretrainMode::BagCl),
        other => Err(format!("unknown pretrain mode '{other}' (none, img-cl, bag-cl)")),
    }
}

impl ExperimentArgs {
    fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_path(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            };
        }
        take!(dataset);
        take!(out_dir);
        take!(variant);
        take!(pretrain);
        take!(lambda_sa);
        take!(tau_v);
        take!(lambda_grid);
        take!(tau_grid);
        take!(lr);
        take!(sgd_momentum);
        take!(weight_decay);
        take!(epochs);
        take!(patience);
        take!(seed);
        take!(seeds);
        take!(encoder_widths);
        take!(attention_dim);
        take!(audit_max_rank);
        if let Some(p) = self.stage1_checkpoint.clone() {
            cfg.stage1_checkpoint = Some(p);
        }
        if self.sa_stop_grad_at_h {
            cfg.sa_stop_grad_at_h = true;
        }
        Ok(cfg)
    }
}

// ── eval / audit ──

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Trained stage 2 checkpoint to load.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to run on: train, val, or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Write CSV output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_model(cfg: &ExperimentConfig, input_dim: usize, ckpt: &Path) -> anyhow::Result<MilModel> {
    let ck = load_checkpoint(ckpt)?;
    let model = MilModel::from_params(cfg.model_config(input_dim)?, ck.params)?;
    Ok(model)
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_eval(args: &EvalArgs, audit_only: bool) -> anyhow::Result<()> {
    let cfg = args.experiment.build()?;
    let bundle = load_dataset(Path::new(&cfg.dataset))?;
    let input_dim = bundle.config.input_dim();
    cfg.validate(input_dim)?;
    let split = match args.split.as_str() {
        "train" => &bundle.train,
        "val" => &bundle.val,
        "test" => &bundle.test,
        other => bail!("unknown split '{other}' (train, val, test)"),
    };
    let model = load_model(&cfg, input_dim, &args.checkpoint)?;
    if audit_only {
        let records = audit_split(&model, split)?;
        return emit(&args.out, &audit_csv(&records));
    }
    let eval = evaluate_split(&model, split)?;
    let report = split_report(&eval, cfg.audit_max_rank)?;
    let mut text = String::from(METRICS_CSV_HEADER);
    text.push_str(&metrics_csv_row(cfg.seed, 0, 0, f64::NAN, &report));
    emit(&args.out, &text)?;
    if args.out.is_some() {
        println!(
            "{} split balanced accuracy {:.4}",
            args.split, report.balanced_accuracy
        );
    }
    Ok(())
}

// ── driver ──

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::GenData(args) => {
            let cfg = args.build()?;
            let bundle = generate_bundle(&cfg)?;
            save_dataset(&args.out, &bundle)?;
            println!(
                "wrote {} (train {} / val {} / test {} / unlabeled {}, fingerprint {})",
                args.out.display(),
                bundle.train.len(),
                bundle.val.len(),
                bundle.test.len(),
                bundle.unlabeled.len(),
                &bundle.fingerprint[..12]
            );
        }
        Command::Pretrain(args) => {
            let cfg = args.build()?;
            let bundle = load_dataset(Path::new(&cfg.dataset))?;
            cfg.validate(bundle.config.input_dim())?;
            let (path, sha) = pretrain_stage1(&bundle, &cfg)?;
            println!("wrote {} (sha256 {})", path.display(), &sha[..12]);
        }
        Command::Train(args) => {
            let cfg = args.build()?;
            let out = run_train_only(&cfg)?;
            for r in &out.manifest.runs {
                println!(
                    "seed {}: best epoch {} val {:.4} test {:.4}",
                    r.seed, r.best_epoch, r.val_balanced_accuracy, r.test_balanced_accuracy
                );
            }
            println!("artifacts in {}", out.run_dir.display());
        }
        Command::Run(args) => {
            let cfg = args.build()?;
            let out = run_pipeline(&cfg)?;
            for r in &out.manifest.runs {
                println!(
                    "seed {}: best epoch {} val {:.4} test {:.4}",
                    r.seed, r.best_epoch, r.val_balanced_accuracy, r.test_balanced_accuracy
                );
            }
            println!("artifacts in {}", out.run_dir.display());
        }
        Command::Eval(args) => run_eval(&args, false)?,
        Command::Audit(args) => run_eval(&args, true)?,
        Command::Sweep(args) => {
            let cfg = args.build()?;
            let (dir, records, sel) = run_sweep_to_dir(&cfg)?;
            println!(
                "{} cells trained; best lambda {} tau {} (mean val {:.4})",
                records.len(),
                sel.lambda_sa,
                sel.tau_v,
                sel.mean_val_balanced_accuracy
            );
            println!("sweep table in {}", dir.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
