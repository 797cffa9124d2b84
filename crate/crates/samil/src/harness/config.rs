//! Experiment configuration: one struct covering both pipeline stages,
//! loadable from a TOML file with every field defaulted, so a config file or
//! command line only has to name what it changes.

use std::path::Path;

use crate::autodiff::SgdConfig;
use crate::error::{Error, Result};
use crate::model::{EncoderConfig, ModelConfig, Variant};
use crate::pretrain::PretrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PretrainMode {
    None,
    ImgCl,
    BagCl,
}

impl std::fmt::Display for PretrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PretrainMode::None => "none",
            PretrainMode::ImgCl => "img-cl",
            PretrainMode::BagCl => "bag-cl",
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset file; see the synth module for its format.
    pub dataset: String,
    /// Run directory for checkpoints, CSVs, and the manifest.
    pub out_dir: String,
    pub variant: Variant,
    pub pretrain: PretrainMode,
    /// Stage 1 checkpoint path; defaults to `<out_dir>/stage1.ckpt`.
    pub stage1_checkpoint: Option<String>,
    pub lambda_sa: f64,
    pub tau_v: f64,
    /// Sweep grids; the scalar fields above drive single runs.
    pub lambda_grid: Vec<f64>,
    pub tau_grid: Vec<f64>,
    pub lr: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Seeds for multi-seed commands (sweep); single runs use `seed`.
    pub seeds: Vec<u64>,
    pub encoder_widths: Vec<usize>,
    pub attention_dim: usize,
    pub sa_stop_grad_at_h: bool,
    /// Ranks reported by the attention audit.
    pub audit_max_rank: usize,
    /// Stage 1 knobs; encoder shape, attention size, and seed are overridden
    /// from the fields above so the two stages cannot disagree.
    pub stage1: PretrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "data.smds".into(),
            out_dir: "runs/default".into(),
            variant: Variant::Samil,
            pretrain: PretrainMode::None,
            stage1_checkpoint: None,
            lambda_sa: 15.0,
            tau_v: 0.05,
            lambda_grid: vec![5.0, 15.0, 20.0],
            tau_grid: vec![0.1, 0.05, 0.03],
            lr: 0.0005,
            sgd_momentum: 0.9,
            weight_decay: 0.0001,
            epochs: 200,
            patience: 40,
            seed: 0,
            seeds: vec![0, 1, 2],
            encoder_widths: EncoderConfig::default().widths,
            attention_dim: 128,
            sa_stop_grad_at_h: false,
            audit_max_rank: 5,
            stage1: PretrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Stage 2 optimizer settings.
    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { lr: self.lr, momentum: self.sgd_momentum, weight_decay: self.weight_decay }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        self.model_config(input_dim)?.validate()?;
        if self.lambda_grid.is_empty() || self.tau_grid.is_empty() {
            return Err(Error::Config("empty hyperparameter grid".into()));
        }
        if self.patience > self.epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.lambda_sa < 0.0 || !self.lambda_sa.is_finite() {
            return Err(Error::Domain(format!("bad attention loss weight {}", self.lambda_sa)));
        }
        if self.tau_v <= 0.0 {
            return Err(Error::Domain(format!("bad target temperature {}", self.tau_v)));
        }
        if self.lr <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("bad learning rate or weight decay".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("empty seed list".into()));
        }
        if self.audit_max_rank == 0 {
            return Err(Error::Config("audit rank must be at least 1".into()));
        }
        self.stage1_config(input_dim).validate()?;
        Ok(())
    }

    /// Stage 2 model shape for a dataset with the given instance dimension.
    pub fn model_config(&self, input_dim: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            encoder: EncoderConfig { input_dim, widths: self.encoder_widths.clone() },
            attention_dim: self.attention_dim,
            variant: self.variant,
            sa_stop_grad_at_h: self.sa_stop_grad_at_h,
            ..ModelConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stage 1 settings with shape and seed pinned to this experiment.
    pub fn stage1_config(&self, input_dim: usize) -> PretrainConfig {
        PretrainConfig {
            encoder: EncoderConfig { input_dim, widths: self.encoder_widths.clone() },
            attention_dim: self.attention_dim,
            seed: self.seed,
            ..self.stage1.clone()
        }
    }

    pub fn stage1_checkpoint_path(&self) -> std::path::PathBuf {
        match &self.stage1_checkpoint {
            Some(p) => p.into(),
            None => Path::new(&self.out_dir).join("stage1.ckpt"),
        }
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), format!("config parse: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("config encode: {e}")))
    }
}
