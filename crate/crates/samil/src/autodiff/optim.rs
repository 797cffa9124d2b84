//! SGD with classical momentum and coupled weight decay, plus the half-cosine
//! learning-rate schedule the training loops run on.

use std::collections::BTreeMap;

use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 0.0005, momentum: 0.9, weight_decay: 0.0001 }
    }
}

/// v ← μ·v + (g + λ·θ);  θ ← θ − lr·v
pub struct SgdOptimizer {
    pub cfg: SgdConfig,
    velocity: BTreeMap<String, Tensor>,
}

impl SgdOptimizer {
    pub fn new(cfg: SgdConfig) -> Self {
        SgdOptimizer { cfg, velocity: BTreeMap::new() }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update over every parameter; gradients are zeroed afterward.
    pub fn step(&mut self, params: &mut ParameterSet) -> Result<()> {
        let names: Vec<String> = params.names().map(str::to_string).collect();
        for name in names {
            let grad = params.grad(&name)?.clone();
            let theta = params.get_mut(&name)?;
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&theta.shape));
            for ((vi, ti), gi) in v.data.iter_mut().zip(theta.data.iter_mut()).zip(&grad.data) {
                *vi = self.cfg.momentum * *vi + (gi + self.cfg.weight_decay * *ti);
                *ti -= self.cfg.lr * *vi;
            }
        }
        params.zero_grads();
        Ok(())
    }

    /// Velocity tensors in sorted-name order, for checkpointing.
    pub fn velocity(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.velocity.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn restore_velocity(&mut self, entries: BTreeMap<String, Tensor>) {
        self.velocity = entries;
    }
}

/// Half-cosine decay: `base · ½(1 + cos(π·step/total))`; errors past the end.
pub fn cosine_lr(step: usize, total: usize, base: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::Domain("cosine schedule needs total > 0".into()));
    }
    if step > total {
        return Err(Error::Domain(format!("cosine schedule step {step} beyond total {total}")));
    }
    let progress = step as f64 / total as f64;
    Ok(base * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn two_momentum_steps_match_hand_unroll() {
        // lr 0.1, μ 0.9, wd 0, grad 1 twice from θ=0:
        // v₁=1, θ₁=−0.1;  v₂=1.9, θ₂=−0.29
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::scalar(0.0)).unwrap();
        let mut opt = SgdOptimizer::new(SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.0 });
        for _ in 0..2 {
            p.accumulate_grad("x", &Tensor::scalar(1.0)).unwrap();
            opt.step(&mut p).unwrap();
        }
        assert_close(p.get("x").unwrap().data[0], -0.29, 1e-12);
    }

    #[test]
    fn zero_lr_step_leaves_parameters_unchanged() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![1.0, -2.0])).unwrap();
        p.accumulate_grad("x", &Tensor::vector(vec![5.0, 5.0])).unwrap();
        let mut opt = SgdOptimizer::new(SgdConfig { lr: 0.0, momentum: 0.9, weight_decay: 0.1 });
        opt.step(&mut p).unwrap();
        assert_eq!(p.get("x").unwrap().data, vec![1.0, -2.0]);
        // and gradients were consumed
        assert_eq!(p.grad("x").unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn weight_decay_couples_into_velocity() {
        // one step: v = g + λθ = 1 + 0.5·2 = 2; θ = 2 − 0.1·2 = 1.8
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::scalar(2.0)).unwrap();
        p.accumulate_grad("x", &Tensor::scalar(1.0)).unwrap();
        let mut opt = SgdOptimizer::new(SgdConfig { lr: 0.1, momentum: 0.9, weight_decay: 0.5 });
        opt.step(&mut p).unwrap();
        assert_close(p.get("x").unwrap().data[0], 1.8, 1e-12);
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert_close(cosine_lr(0, 100, 0.06).unwrap(), 0.06, 1e-15);
        assert_close(cosine_lr(50, 100, 0.06).unwrap(), 0.03, 1e-15);
        assert!(cosine_lr(100, 100, 0.06).unwrap().abs() < 1e-17);
        assert!(cosine_lr(101, 100, 0.06).is_err());
        assert!(cosine_lr(0, 0, 0.06).is_err());
    }

    #[test]
    fn cosine_is_monotone_decreasing() {
        let mut last = f64::INFINITY;
        for s in 0..=200 {
            let lr = cosine_lr(s, 200, 1.0).unwrap();
            assert!(lr <= last);
            last = lr;
        }
    }
}
