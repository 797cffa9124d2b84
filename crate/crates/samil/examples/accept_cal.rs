//! Scratch calibration harness for acceptance-scale configs. Not part of
//! the deliverable; deleted after use.
//!
//! train:    accept_cal train <samil|abmil> <w0,w1,w2> <attn> <lr> <epochs> <patience> <seed> [lambda]
//! pretrain: accept_cal pretrain <w0,w1,w2> <attn> <proj> <lr_scale> <epochs> <queue> <batch> <seed>

use std::time::Instant;

use samil::harness::{run_training, ExperimentConfig};
use samil::model::Variant;
use samil::pretrain::{embed_bag_pooled, knn_probe, pretrain_bag_cl, PretrainConfig};
use samil::synth::{generate_bundle, DatasetBundle, GeneratorConfig, SyntheticStudy};

fn widths(s: &str) -> Vec<usize> {
    s.split(',').map(|w| w.parse().unwrap()).collect()
}

fn default_bundle() -> DatasetBundle {
    let t = Instant::now();
    let b = generate_bundle(&GeneratorConfig { seed: 0, ..GeneratorConfig::default() }).unwrap();
    eprintln!("bundle generated in {:.1}s", t.elapsed().as_secs_f64());
    let ks: Vec<usize> = b.train.iter().map(|s| s.k()).collect();
    eprintln!(
        "train bags: {} (k {}..{}), val {}, test {}, unlabeled {}",
        b.train.len(),
        ks.iter().min().unwrap(),
        ks.iter().max().unwrap(),
        b.val.len(),
        b.test.len(),
        b.unlabeled.len()
    );
    b
}

fn labels(studies: &[SyntheticStudy]) -> Vec<u8> {
    studies.iter().map(|s| s.label.unwrap()).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args[1].as_str() {
        "train" => {
            let variant = match args[2].as_str() {
                "samil" => Variant::Samil,
                "abmil" => Variant::Abmil,
                other => panic!("variant {other}"),
            };
            let cfg = ExperimentConfig {
                variant,
                encoder_widths: widths(&args[3]),
                attention_dim: args[4].parse().unwrap(),
                lr: args[5].parse().unwrap(),
                epochs: args[6].parse().unwrap(),
                patience: args[7].parse().unwrap(),
                lambda_sa: args.get(9).map(|v| v.parse().unwrap()).unwrap_or(15.0),
                ..ExperimentConfig::default()
            };
            let seed: u64 = args[8].parse().unwrap();
            let bundle = default_bundle();
            let t = Instant::now();
            let (out, report) = run_training(&bundle, &cfg, seed, None).unwrap();
            let dt = t.elapsed().as_secs_f64();
            for e in &out.history {
                eprintln!(
                    "  ep {:3}  loss {:8.4}  val {:.4}  lr {:.6}",
                    e.epoch, e.mean_loss, e.val_balanced_accuracy, e.lr
                );
            }
            let curve = &report.curve;
            let mean5: f64 = curve.iter().sum::<f64>() / curve.len() as f64;
            // branch-A curve on the best model, for diagnosis
            if variant == Variant::Samil {
                let pairs: Vec<(Vec<f64>, Vec<f64>)> = bundle
                    .test
                    .iter()
                    .map(|s| {
                        let p = out.model.predict(&s.bag_tensor()).unwrap();
                        (p.attn_a.clone(), s.oracle_relevance().to_vec())
                    })
                    .collect();
                let a_curve =
                    samil::harness::attention_relevance_curve(&pairs, 5).unwrap();
                let a_mean: f64 = a_curve.iter().sum::<f64>() / 5.0;
                eprintln!("branch-A curve {a_curve:?} mean {a_mean:.4}");
            }
            println!(
                "{variant:?} seed {seed}: {:.1}s ({:.2}s/ep over {} eps), best ep {} val {:.4}, TEST BA {:.4}, curve {:?} mean {:.4}",
                dt,
                dt / out.epochs_run as f64,
                out.epochs_run,
                out.best_epoch,
                out.best_val_balanced,
                report.balanced_accuracy,
                curve.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                mean5
            );
        }
        "pretrain" => {
            let w = widths(&args[2]);
            let cfg = PretrainConfig {
                encoder: samil::model::EncoderConfig { input_dim: 256, widths: w },
                attention_dim: args[3].parse().unwrap(),
                proj_dim: args[4].parse().unwrap(),
                lr_scale: args[5].parse().unwrap(),
                epochs: args[6].parse().unwrap(),
                queue_capacity: args[7].parse().unwrap(),
                batch_size: args[8].parse().unwrap(),
                seed: args[9].parse().unwrap(),
                ..PretrainConfig::default()
            };
            let bundle = default_bundle();

            // Probe baseline: random init, same probe protocol.
            let rand_params = samil::pretrain::init_bag_cl_params(&cfg).unwrap();
            let embed = |p: &samil::autodiff::ParameterSet, s: &SyntheticStudy| {
                embed_bag_pooled(&cfg, p, s).unwrap()
            };
            let t0 = Instant::now();
            let tr: Vec<_> = bundle.train.iter().map(|s| embed(&rand_params, s)).collect();
            let va: Vec<_> = bundle.val.iter().map(|s| embed(&rand_params, s)).collect();
            let base = knn_probe(&tr, &labels(&bundle.train), &va, &labels(&bundle.val), cfg.probe_k).unwrap();
            eprintln!("random-init probe {:.4} ({:.1}s)", base, t0.elapsed().as_secs_f64());

            let t = Instant::now();
            let out = pretrain_bag_cl(&bundle.unlabeled, &bundle.train, &bundle.val, &cfg).unwrap();
            let dt = t.elapsed().as_secs_f64();
            for e in &out.history {
                eprintln!("  ep {:3}  loss {:8.4}  probe {:.4}", e.epoch, e.mean_loss, e.probe_accuracy);
            }
            println!(
                "bag-cl seed {}: {:.1}s ({:.2}s/ep over {} eps), best ep {} probe {:.4} vs random {:.4} (gap {:+.1} pts)",
                cfg.seed,
                dt,
                dt / out.history.len() as f64,
                out.history.len(),
                out.best_epoch,
                out.best_probe,
                base,
                (out.best_probe - base) * 100.0
            );
        }
        other => panic!("mode {other}"),
    }
}
