//! Dense row-major f64 tensors plus the raw kernels the tape builds on.

use crate::error::{Error, Result};
use rand::Rng;

/// Rank 0 (scalar, shape `[]`), rank 1 (`[n]`) and rank 2 (`[r, c]`) cover
/// everything this engine computes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "matrix",
                detail: format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            });
        }
        Ok(Tensor { shape: vec![rows, cols], data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    /// Weights drawn from U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
    pub fn uniform_fan_in(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor { shape: vec![rows, cols], data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// The one value of a rank-0 tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::Shape { op: "scalar_value", detail: format!("shape {:?}", self.shape) });
        }
        Ok(self.data[0])
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// Errors if any stored value is NaN or infinite.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }

    /// In-place `self += other` over identical shapes.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op: "add_assign",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}

// ── Raw kernels ──────────────────────────────────────────────────────────────
// Plain loops, deterministic accumulation order; shapes are the caller's
// responsibility (the tape validates before dispatching here).

/// C = A(m×k) · B(k×n)
pub fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &ail) in arow.iter().enumerate() {
            if ail == 0.0 {
                continue;
            }
            let brow = &b.data[l * n..(l + 1) * n];
            for (o, &blj) in orow.iter_mut().zip(brow) {
                *o += ail * blj;
            }
        }
    }
    Tensor { shape: vec![m, n], data: out }
}

/// C = A(m×k) · B(n×k)ᵀ
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] = acc;
        }
    }
    Tensor { shape: vec![m, n], data: out }
}

/// C = A(m×k)ᵀ · B(m×n)
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let brow = &b.data[i * n..(i + 1) * n];
        for (l, &ail) in arow.iter().enumerate() {
            if ail == 0.0 {
                continue;
            }
            let orow = &mut out[l * n..(l + 1) * n];
            for (o, &bij) in orow.iter_mut().zip(brow) {
                *o += ail * bij;
            }
        }
    }
    Tensor { shape: vec![k, n], data: out }
}

/// y = A(m×n) · x(n)
pub fn matvec(a: &Tensor, x: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; m];
    for i in 0..m {
        let arow = &a.data[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (p, q) in arow.iter().zip(&x.data) {
            acc += p * q;
        }
        out[i] = acc;
    }
    Tensor { shape: vec![m], data: out }
}

/// y = A(m×n)ᵀ · x(m)
pub fn matvec_t(a: &Tensor, x: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = vec![0.0; n];
    for i in 0..m {
        let xi = x.data[i];
        if xi == 0.0 {
            continue;
        }
        let arow = &a.data[i * n..(i + 1) * n];
        for (o, &aij) in out.iter_mut().zip(arow) {
            *o += xi * aij;
        }
    }
    Tensor { shape: vec![n], data: out }
}

/// C = x(m) · y(n)ᵀ
pub fn outer(x: &Tensor, y: &Tensor) -> Tensor {
    let (m, n) = (x.len(), y.len());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let xi = x.data[i];
        let orow = &mut out[i * n..(i + 1) * n];
        for (o, &yj) in orow.iter_mut().zip(&y.data) {
            *o = xi * yj;
        }
    }
    Tensor { shape: vec![m, n], data: out }
}

/// Numerically stable softmax of `logits / temp`; single kernel shared by the
/// tape op and every plain-math caller (relevance targets, key encoder, ...).
pub fn softmax_temp_values(logits: &[f64], temp: f64) -> Vec<f64> {
    let mut scaled: Vec<f64> = logits.iter().map(|&x| x / temp).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in scaled.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in scaled.iter_mut() {
        *v /= sum;
    }
    scaled
}
