//! Central-difference gradient oracle. Slow and exact-on-purpose; the test
//! suites use it to cross-check every hand-derived VJP on the tape.

use std::collections::BTreeMap;

use super::params::ParameterSet;
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Loss value for one parameter assignment, via a freshly built graph.
fn eval_loss(
    params: &ParameterSet,
    build: &impl Fn(&mut Tape, &ParameterSet) -> Result<NodeId>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.value(loss).scalar_value()
}

/// d loss / d θ ≈ (loss(θ+h) − loss(θ−h)) / 2h, elementwise over every
/// parameter in the set.
pub fn finite_difference_grads(
    params: &ParameterSet,
    step: f64,
    build: impl Fn(&mut Tape, &ParameterSet) -> Result<NodeId>,
) -> Result<BTreeMap<String, Tensor>> {
    let mut out = BTreeMap::new();
    for (name, value) in params.iter() {
        let mut grad = Tensor::zeros(&value.shape);
        for idx in 0..value.len() {
            let mut plus = params.clone();
            plus.get_mut(name)?.data[idx] += step;
            let mut minus = params.clone();
            minus.get_mut(name)?.data[idx] -= step;
            grad.data[idx] = (eval_loss(&plus, &build)? - eval_loss(&minus, &build)?) / (2.0 * step);
        }
        out.insert(name.to_string(), grad);
    }
    Ok(out)
}

/// Worst relative disagreement between analytic gradients stored in `params`
/// and a finite-difference map, with a small absolute floor so near-zero
/// components don't divide by nothing.
pub fn max_relative_error(
    params: &ParameterSet,
    fd: &BTreeMap<String, Tensor>,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (name, numeric) in fd {
        let analytic = params.grad(name)?;
        if analytic.shape != numeric.shape {
            return Err(Error::Shape {
                op: "max_relative_error",
                detail: format!("{name}: {:?} vs {:?}", analytic.shape, numeric.shape),
            });
        }
        for (&a, &n) in analytic.data.iter().zip(&numeric.data) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            worst = worst.max((a - n).abs() / denom);
        }
    }
    Ok(worst)
}
