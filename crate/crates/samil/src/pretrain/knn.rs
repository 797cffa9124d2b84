//! Cosine k-nearest-neighbor probe used for pretraining early stopping: a
//! cheap label-efficiency readout of embedding quality.

use super::moco::{pooled_z, PretrainConfig};
use crate::autodiff::{ParameterSet, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{encode_bag, EncoderConfig};
use crate::synth::SyntheticStudy;

/// Attention-pooled bag embedding σ(f(X)); the probe representation for
/// bag-level pretraining.
pub fn embed_bag_pooled(
    cfg: &PretrainConfig,
    params: &ParameterSet,
    study: &SyntheticStudy,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let z = pooled_z(&mut tape, cfg, params, &study.bag_tensor())?;
    Ok(tape.value(z).clone())
}

/// Mean of instance embeddings f(x); the probe representation for
/// instance-level pretraining, where no pooling is learned.
pub fn embed_bag_mean(
    cfg: &EncoderConfig,
    params: &ParameterSet,
    study: &SyntheticStudy,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let h = encode_bag(&mut tape, cfg, params, &study.bag_tensor())?;
    let hv = tape.value(h);
    let (k, m) = (hv.rows(), hv.cols());
    let mut mean = vec![0.0; m];
    for r in 0..k {
        for c in 0..m {
            mean[c] += hv.data[r * m + c];
        }
    }
    for v in mean.iter_mut() {
        *v /= k as f64;
    }
    Ok(Tensor::vector(mean))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Accuracy of a cosine k-nearest-neighbor vote of `train` labels on the
/// validation embeddings. Vote ties break toward the smallest class index;
/// similarity ties break toward the earliest reference point.
pub fn knn_probe(
    train: &[Tensor],
    train_labels: &[u8],
    val: &[Tensor],
    val_labels: &[u8],
    k: usize,
) -> Result<f64> {
    if train.len() != train_labels.len() || val.len() != val_labels.len() {
        return Err(Error::Domain("embedding and label counts disagree".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Domain(format!("k {} outside 1..={}", k, train.len())));
    }
    if val.is_empty() {
        return Err(Error::Domain("empty validation set".into()));
    }
    let mut correct = 0usize;
    for (v, &truth) in val.iter().zip(val_labels) {
        let mut sims: Vec<(usize, f64)> = train
            .iter()
            .enumerate()
            .map(|(i, t)| (i, cosine(&v.data, &t.data)))
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let mut votes = [0usize; 256];
        for &(i, _) in sims.iter().take(k) {
            votes[train_labels[i] as usize] += 1;
        }
        let winner = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c as u8)
            .expect("votes nonempty");
        if winner == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / val.len() as f64)
}
