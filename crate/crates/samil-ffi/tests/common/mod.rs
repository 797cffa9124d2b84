//! Shared fixture for the FFI tests: a small dataset, an experiment file
//! sized to match, and an untrained checkpoint.

use std::ffi::CString;
use std::path::Path;

use samil::autodiff::save_checkpoint;
use samil::harness::ExperimentConfig;
use samil::model::MilModel;
use samil::synth::{generate_bundle, save_dataset, DatasetBundle, GeneratorConfig};

pub fn tiny_bundle() -> DatasetBundle {
    let cfg = GeneratorConfig {
        seed: 31,
        train_count: 8,
        val_count: 4,
        test_count: 4,
        unlabeled_count: 3,
        k_min: 3,
        k_max: 5,
        ..GeneratorConfig::default()
    };
    generate_bundle(&cfg).expect("generate")
}

pub fn small_experiment() -> ExperimentConfig {
    ExperimentConfig {
        encoder_widths: vec![16, 8, 16],
        attention_dim: 8,
        ..ExperimentConfig::default()
    }
}

/// Writes dataset, experiment TOML, and an untrained checkpoint into `dir`;
/// returns their paths as C strings.
pub fn fixture(dir: &Path) -> (CString, CString, CString) {
    let bundle = tiny_bundle();
    let data_path = dir.join("tiny.smds");
    save_dataset(&data_path, &bundle).expect("save dataset");

    let cfg = small_experiment();
    let toml_path = dir.join("exp.toml");
    std::fs::write(&toml_path, cfg.to_toml().expect("toml")).expect("write toml");

    let model_cfg = cfg.model_config(bundle.config.input_dim()).expect("model cfg");
    let model = MilModel::new(model_cfg, 7).expect("model");
    let ckpt_path = dir.join("model.ckpt");
    save_checkpoint(&ckpt_path, &model.params, None, 0).expect("save ckpt");

    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    (c(&data_path), c(&toml_path), c(&ckpt_path))
}
