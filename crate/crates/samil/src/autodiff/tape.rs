//! Define-by-run reverse-mode tape. Ops evaluate eagerly into a node arena;
//! `backward` replays the arena in reverse with hand-derived VJPs and adds
//! the resulting leaf gradients into a [`ParameterSet`].
//!
//! Intermediate adjoints are transient per backward call, while parameter
//! gradients accumulate additively — running backward twice on the same
//! graph yields exactly twice the gradient.

use super::params::ParameterSet;
use super::tensor::{self, Tensor};
use crate::error::{Error, Result};

/// Floor applied inside every log so probabilities of zero stay finite.
pub const LOG_EPS: f64 = 1e-12;

/// Index into a tape's node arena. Only valid on the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    MatmulNT(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddN(Vec<NodeId>),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    SoftmaxTemp(NodeId, f64),
    KlDiv(NodeId, NodeId),
    PickNegLog(NodeId, usize),
    Sum(NodeId),
    DivByScalar(NodeId, NodeId),
    L2Normalize(NodeId),
    Reshape(NodeId),
    Row(NodeId, usize),
    StopGrad,
}

struct Node {
    op: Op,
    value: Tensor,
    /// Parameter name for leaves created through [`Tape::param`].
    param: Option<String>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, param: Option<String>) -> NodeId {
        self.nodes.push(Node { op, value, param });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId, op: &'static str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Shape { op, detail: format!("node id {} not on this tape", id.0) });
        }
        Ok(())
    }

    // ── Graph construction ───────────────────────────────────────────────

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, None)
    }

    /// Leaf bound to a named parameter; backward adds its adjoint into the
    /// matching [`ParameterSet`] gradient slot.
    pub fn param(&mut self, name: &str, value: &Tensor) -> NodeId {
        self.push(Op::Leaf, value.clone(), Some(name.to_string()))
    }

    /// C = A(m×k) · B(k×n)
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "matmul")?;
        self.check(b, "matmul")?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows() {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("{:?} x {:?}", va.shape, vb.shape),
            });
        }
        let out = tensor::matmul_nn(va, vb);
        Ok(self.push(Op::Matmul(a, b), out, None))
    }

    /// C = A(m×k) · B(n×k)ᵀ — the layout of an affine layer with row-major weights.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "matmul_nt")?;
        self.check(b, "matmul_nt")?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols() {
            return Err(Error::Shape {
                op: "matmul_nt",
                detail: format!("{:?} x {:?}ᵀ", va.shape, vb.shape),
            });
        }
        let out = tensor::matmul_nt(va, vb);
        Ok(self.push(Op::MatmulNT(a, b), out, None))
    }

    /// y = A(m×n) · x(n)
    pub fn matvec(&mut self, a: NodeId, x: NodeId) -> Result<NodeId> {
        self.check(a, "matvec")?;
        self.check(x, "matvec")?;
        let (va, vx) = (self.value(a), self.value(x));
        if va.rank() != 2 || vx.rank() != 1 || va.cols() != vx.len() {
            return Err(Error::Shape {
                op: "matvec",
                detail: format!("{:?} x {:?}", va.shape, vx.shape),
            });
        }
        let out = tensor::matvec(va, vx);
        Ok(self.push(Op::MatVec(a, x), out, None))
    }

    /// y = x(m)ᵀ · A(m×n); pools rows of A with weights x.
    pub fn vecmat(&mut self, x: NodeId, a: NodeId) -> Result<NodeId> {
        self.check(x, "vecmat")?;
        self.check(a, "vecmat")?;
        let (vx, va) = (self.value(x), self.value(a));
        if vx.rank() != 1 || va.rank() != 2 || vx.len() != va.rows() {
            return Err(Error::Shape {
                op: "vecmat",
                detail: format!("{:?}ᵀ x {:?}", vx.shape, va.shape),
            });
        }
        let out = tensor::matvec_t(va, vx);
        Ok(self.push(Op::VecMat(x, a), out, None))
    }

    /// Adds a length-n vector to every row of an m×n matrix.
    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        self.check(m, "add_row")?;
        self.check(v, "add_row")?;
        let (vm, vv) = (self.value(m), self.value(v));
        if vm.rank() != 2 || vv.rank() != 1 || vm.cols() != vv.len() {
            return Err(Error::Shape {
                op: "add_row",
                detail: format!("{:?} + row {:?}", vm.shape, vv.shape),
            });
        }
        let cols = vm.cols();
        let mut out = vm.clone();
        for (i, x) in out.data.iter_mut().enumerate() {
            *x += vv.data[i % cols];
        }
        Ok(self.push(Op::AddRow(m, v), out, None))
    }

    fn binary_same_shape(
        &mut self,
        a: NodeId,
        b: NodeId,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(NodeId, NodeId) -> Op,
    ) -> Result<NodeId> {
        self.check(a, op_name)?;
        self.check(b, op_name)?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape != vb.shape {
            return Err(Error::Shape {
                op: op_name,
                detail: format!("{:?} vs {:?}", va.shape, vb.shape),
            });
        }
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor { shape: va.shape.clone(), data };
        Ok(self.push(op(a, b), out, None))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Sum of any number of same-shaped nodes.
    pub fn add_n(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        let first = *ids.first().ok_or(Error::Shape { op: "add_n", detail: "empty input list".into() })?;
        self.check(first, "add_n")?;
        let mut out = self.value(first).clone();
        for &id in &ids[1..] {
            self.check(id, "add_n")?;
            let v = self.value(id);
            if v.shape != out.shape {
                return Err(Error::Shape {
                    op: "add_n",
                    detail: format!("{:?} vs {:?}", out.shape, v.shape),
                });
            }
            for (o, x) in out.data.iter_mut().zip(&v.data) {
                *o += x;
            }
        }
        Ok(self.push(Op::AddN(ids.to_vec()), out, None))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.check(x, "scale")?;
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        Ok(self.push(Op::Scale(x, c), out, None))
    }

    fn unary(
        &mut self,
        x: NodeId,
        op_name: &'static str,
        f: impl Fn(f64) -> f64,
        op: impl Fn(NodeId) -> Op,
    ) -> Result<NodeId> {
        self.check(x, op_name)?;
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        Ok(self.push(op(x), out, None))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "tanh", f64::tanh, Op::Tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "relu", |v| v.max(0.0), Op::Relu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "sigmoid", |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid)
    }

    /// softmax(x / temp) over a vector, max-subtracted for stability.
    pub fn softmax_temp(&mut self, x: NodeId, temp: f64) -> Result<NodeId> {
        self.check(x, "softmax_temp")?;
        if temp <= 0.0 || !temp.is_finite() {
            return Err(Error::Domain(format!("softmax temperature {temp} must be positive")));
        }
        let v = self.value(x);
        if v.rank() != 1 || v.is_empty() {
            return Err(Error::Shape {
                op: "softmax_temp",
                detail: format!("need a nonempty vector, got {:?}", v.shape),
            });
        }
        let out = Tensor::vector(tensor::softmax_temp_values(&v.data, temp));
        Ok(self.push(Op::SoftmaxTemp(x, temp), out, None))
    }

    /// KL(p ‖ q) = Σ p_k (log p_k − log max(q_k, ε)), with 0·log 0 = 0.
    pub fn kl_div(&mut self, p: NodeId, q: NodeId) -> Result<NodeId> {
        self.check(p, "kl_div")?;
        self.check(q, "kl_div")?;
        let (vp, vq) = (self.value(p), self.value(q));
        if vp.rank() != 1 || vp.shape != vq.shape {
            return Err(Error::Shape {
                op: "kl_div",
                detail: format!("{:?} vs {:?}", vp.shape, vq.shape),
            });
        }
        if vp.data.iter().any(|&x| x < 0.0) || vq.data.iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("kl_div expects nonnegative inputs".into()));
        }
        let mut acc = 0.0;
        for (&pk, &qk) in vp.data.iter().zip(&vq.data) {
            if pk > 0.0 {
                acc += pk * (pk.ln() - qk.max(LOG_EPS).ln());
            }
        }
        Ok(self.push(Op::KlDiv(p, q), Tensor::scalar(acc), None))
    }

    /// −log(max(p[idx], ε)); cross-entropy against a one-hot target.
    pub fn pick_neg_log(&mut self, p: NodeId, idx: usize) -> Result<NodeId> {
        self.check(p, "pick_neg_log")?;
        let v = self.value(p);
        if v.rank() != 1 || idx >= v.len() {
            return Err(Error::Shape {
                op: "pick_neg_log",
                detail: format!("index {idx} into {:?}", v.shape),
            });
        }
        let out = Tensor::scalar(-(v.data[idx].max(LOG_EPS).ln()));
        Ok(self.push(Op::PickNegLog(p, idx), out, None))
    }

    /// Sum of all elements, rank 0 output.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "sum")?;
        let s: f64 = self.value(x).data.iter().sum();
        Ok(self.push(Op::Sum(x), Tensor::scalar(s), None))
    }

    /// Elementwise x / s for scalar node s.
    pub fn div_by_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.check(x, "div_by_scalar")?;
        self.check(s, "div_by_scalar")?;
        let sv = self.value(s).scalar_value()?;
        if sv == 0.0 {
            return Err(Error::Domain("division by zero scalar node".into()));
        }
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v /= sv);
        Ok(self.push(Op::DivByScalar(x, s), out, None))
    }

    /// x / ‖x‖₂ for a vector; errors on the zero vector.
    pub fn l2_normalize(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "l2_normalize")?;
        let v = self.value(x);
        if v.rank() != 1 {
            return Err(Error::Shape {
                op: "l2_normalize",
                detail: format!("need a vector, got {:?}", v.shape),
            });
        }
        let norm = v.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Domain("cannot normalize the zero vector".into()));
        }
        let out = Tensor::vector(v.data.iter().map(|x| x / norm).collect());
        Ok(self.push(Op::L2Normalize(x), out, None))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.check(x, "reshape")?;
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::Shape {
                op: "reshape",
                detail: format!("{:?} -> {:?}", v.shape, shape),
            });
        }
        let out = Tensor { shape: shape.to_vec(), data: v.data.clone() };
        Ok(self.push(Op::Reshape(x), out, None))
    }

    /// Row i of a matrix as a vector.
    pub fn row(&mut self, m: NodeId, i: usize) -> Result<NodeId> {
        self.check(m, "row")?;
        let v = self.value(m);
        if v.rank() != 2 || i >= v.rows() {
            return Err(Error::Shape {
                op: "row",
                detail: format!("row {i} of {:?}", v.shape),
            });
        }
        let n = v.cols();
        let out = Tensor::vector(v.data[i * n..(i + 1) * n].to_vec());
        Ok(self.push(Op::Row(m, i), out, None))
    }

    /// Identity forward, zero backward.
    pub fn stop_grad(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "stop_grad")?;
        let out = self.value(x).clone();
        Ok(self.push(Op::StopGrad, out, None))
    }

    // ── Backward ─────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss node. Visits each node at most once in
    /// reverse creation (= topological) order and adds leaf adjoints into
    /// `params` by name. Constants and stop-gradient inputs get nothing.
    pub fn backward(&mut self, loss: NodeId, params: &mut ParameterSet) -> Result<()> {
        self.check(loss, "backward")?;
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.value(loss).shape),
            });
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(d) = adj[i].take() else { continue };
            // Parameter leaves flush straight into the gradient map.
            if let Some(name) = &self.nodes[i].param {
                params.accumulate_grad(name, &d)?;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = tensor::matmul_nt(&d, vb);
                    let db = tensor::matmul_tn(va, &d);
                    accum(&mut adj, *a, da);
                    accum(&mut adj, *b, db);
                }
                Op::MatmulNT(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = tensor::matmul_nn(&d, vb);
                    let db = tensor::matmul_tn(&d, va);
                    accum(&mut adj, *a, da);
                    accum(&mut adj, *b, db);
                }
                Op::MatVec(a, x) => {
                    let (va, vx) = (&self.nodes[a.0].value, &self.nodes[x.0].value);
                    accum(&mut adj, *a, tensor::outer(&d, vx));
                    accum(&mut adj, *x, tensor::matvec_t(va, &d));
                }
                Op::VecMat(x, a) => {
                    let (vx, va) = (&self.nodes[x.0].value, &self.nodes[a.0].value);
                    accum(&mut adj, *x, tensor::matvec(va, &d));
                    accum(&mut adj, *a, tensor::outer(vx, &d));
                }
                Op::AddRow(m, v) => {
                    let cols = self.nodes[v.0].value.len();
                    let mut dv = vec![0.0; cols];
                    for (j, x) in d.data.iter().enumerate() {
                        dv[j % cols] += x;
                    }
                    accum(&mut adj, *m, d);
                    accum(&mut adj, *v, Tensor::vector(dv));
                }
                Op::Add(a, b) => {
                    accum(&mut adj, *a, d.clone());
                    accum(&mut adj, *b, d);
                }
                Op::Sub(a, b) => {
                    let mut neg = d.clone();
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    accum(&mut adj, *a, d);
                    accum(&mut adj, *b, neg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let da = elementwise(&d, vb, |x, y| x * y);
                    let db = elementwise(&d, va, |x, y| x * y);
                    accum(&mut adj, *a, da);
                    accum(&mut adj, *b, db);
                }
                Op::AddN(ids) => {
                    for &id in ids.clone().iter() {
                        accum(&mut adj, id, d.clone());
                    }
                }
                Op::Scale(x, c) => {
                    let mut dx = d;
                    let c = *c;
                    dx.data.iter_mut().for_each(|v| *v *= c);
                    accum(&mut adj, *x, dx);
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[i].value;
                    let dx = elementwise(&d, y, |g, t| g * (1.0 - t * t));
                    accum(&mut adj, *x, dx);
                }
                Op::Relu(x) => {
                    let vx = &self.nodes[x.0].value;
                    let dx = elementwise(&d, vx, |g, v| if v > 0.0 { g } else { 0.0 });
                    accum(&mut adj, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[i].value;
                    let dx = elementwise(&d, y, |g, s| g * s * (1.0 - s));
                    accum(&mut adj, *x, dx);
                }
                Op::SoftmaxTemp(x, temp) => {
                    let p = &self.nodes[i].value;
                    let dot: f64 = p.data.iter().zip(&d.data).map(|(a, b)| a * b).sum();
                    let dx = Tensor::vector(
                        p.data
                            .iter()
                            .zip(&d.data)
                            .map(|(&pi, &gi)| pi * (gi - dot) / temp)
                            .collect(),
                    );
                    accum(&mut adj, *x, dx);
                }
                Op::KlDiv(p, q) => {
                    let ds = d.data[0];
                    let (vp, vq) = (&self.nodes[p.0].value, &self.nodes[q.0].value);
                    let dp = Tensor::vector(
                        vp.data
                            .iter()
                            .zip(&vq.data)
                            .map(|(&pk, &qk)| {
                                if pk > 0.0 {
                                    ds * (pk.ln() - qk.max(LOG_EPS).ln() + 1.0)
                                } else {
                                    0.0
                                }
                            })
                            .collect(),
                    );
                    let dq = Tensor::vector(
                        vp.data
                            .iter()
                            .zip(&vq.data)
                            .map(|(&pk, &qk)| if qk > LOG_EPS { -ds * pk / qk } else { 0.0 })
                            .collect(),
                    );
                    accum(&mut adj, *p, dp);
                    accum(&mut adj, *q, dq);
                }
                Op::PickNegLog(p, idx) => {
                    let ds = d.data[0];
                    let vp = &self.nodes[p.0].value;
                    let mut dp = Tensor::zeros(&vp.shape);
                    if vp.data[*idx] > LOG_EPS {
                        dp.data[*idx] = -ds / vp.data[*idx];
                    }
                    accum(&mut adj, *p, dp);
                }
                Op::Sum(x) => {
                    let ds = d.data[0];
                    let vx = &self.nodes[x.0].value;
                    let dx = Tensor { shape: vx.shape.clone(), data: vec![ds; vx.len()] };
                    accum(&mut adj, *x, dx);
                }
                Op::DivByScalar(x, s) => {
                    let sv = self.nodes[s.0].value.data[0];
                    let vx = &self.nodes[x.0].value;
                    let dx = Tensor {
                        shape: vx.shape.clone(),
                        data: d.data.iter().map(|g| g / sv).collect(),
                    };
                    let dsv: f64 =
                        d.data.iter().zip(&vx.data).map(|(g, x)| -g * x / (sv * sv)).sum();
                    accum(&mut adj, *x, dx);
                    accum(&mut adj, *s, Tensor::scalar(dsv));
                }
                Op::L2Normalize(x) => {
                    let y = &self.nodes[i].value;
                    let vx = &self.nodes[x.0].value;
                    let norm = vx.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let ydot: f64 = y.data.iter().zip(&d.data).map(|(a, b)| a * b).sum();
                    let dx = Tensor::vector(
                        d.data
                            .iter()
                            .zip(&y.data)
                            .map(|(&g, &yi)| (g - yi * ydot) / norm)
                            .collect(),
                    );
                    accum(&mut adj, *x, dx);
                }
                Op::Reshape(x) => {
                    let shape = self.nodes[x.0].value.shape.clone();
                    accum(&mut adj, *x, Tensor { shape, data: d.data });
                }
                Op::Row(m, r) => {
                    let vm = &self.nodes[m.0].value;
                    let mut dm = Tensor::zeros(&vm.shape);
                    let n = vm.cols();
                    dm.data[r * n..(r + 1) * n].copy_from_slice(&d.data);
                    accum(&mut adj, *m, dm);
                }
                Op::StopGrad => {}
            }
        }
        Ok(())
    }
}

fn accum(adj: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut adj[id.0] {
        Some(t) => {
            for (a, b) in t.data.iter_mut().zip(&delta.data) {
                *a += b;
            }
        }
        slot => *slot = Some(delta),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{finite_difference_grads, max_relative_error};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn random_params(shapes: &[(&str, &[usize])], seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            p.insert(name, Tensor { shape: shape.to_vec(), data }).unwrap();
        }
        p
    }

    #[test]
    fn forward_matmul_value() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data, vec![3.0, 7.0]);
    }

    #[test]
    fn kl_hand_value_and_zero_at_equal() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![1.0, 0.0]));
        let q = t.constant(Tensor::vector(vec![0.5, 0.5]));
        let kl = t.kl_div(p, q).unwrap();
        assert_close(t.value(kl).scalar_value().unwrap(), 2.0f64.ln(), 1e-9);

        let r = t.constant(Tensor::vector(vec![0.3, 0.7]));
        let kl2 = t.kl_div(r, r).unwrap();
        assert_eq!(t.value(kl2).scalar_value().unwrap(), 0.0);
    }

    #[test]
    fn mul_with_shared_input_doubles_gradient() {
        // d/dx sum(x*x) = 2x
        let mut params = ParameterSet::new();
        params.insert("x", Tensor::vector(vec![1.5, -2.0, 0.25])).unwrap();
        let mut t = Tape::new();
        let x = t.param("x", params.get("x").unwrap());
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq).unwrap();
        t.backward(loss, &mut params).unwrap();
        assert_eq!(params.grad("x").unwrap().data, vec![3.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_twice_doubles_gradients_exactly() {
        let mut params = ParameterSet::new();
        params.insert("x", Tensor::vector(vec![0.3, 0.9])).unwrap();
        let mut t = Tape::new();
        let x = t.param("x", params.get("x").unwrap());
        let h = t.tanh(x).unwrap();
        let loss = t.sum(h).unwrap();
        t.backward(loss, &mut params).unwrap();
        let once = params.grad("x").unwrap().data.clone();
        t.backward(loss, &mut params).unwrap();
        let twice = params.grad("x").unwrap().data.clone();
        assert_eq!(twice, once.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    }

    #[test]
    fn stop_grad_blocks_and_passes_value() {
        let mut params = ParameterSet::new();
        params.insert("x", Tensor::vector(vec![0.4, -0.7])).unwrap();
        let mut t = Tape::new();
        let x = t.param("x", params.get("x").unwrap());
        let frozen = t.stop_grad(x).unwrap();
        assert_eq!(t.value(frozen).data, t.value(x).data);
        let sq = t.mul(frozen, frozen).unwrap();
        let loss = t.sum(sq).unwrap();
        t.backward(loss, &mut params).unwrap();
        assert_eq!(params.grad("x").unwrap().data, vec![0.0, 0.0]);
    }

    #[test]
    fn mlp_composite_matches_finite_differences() {
        // sum(tanh(relu(X·Wᵀ + b)·W2ᵀ)) over a 3x4 input
        let params = random_params(&[("w1", &[5, 4]), ("b1", &[5]), ("w2", &[2, 5])], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xdata: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::matrix(3, 4, xdata).unwrap();

        let build = |t: &mut Tape, p: &ParameterSet| -> crate::Result<NodeId> {
            let xin = t.constant(x.clone());
            let w1 = t.param("w1", p.get("w1")?);
            let b1 = t.param("b1", p.get("b1")?);
            let w2 = t.param("w2", p.get("w2")?);
            let h = t.matmul_nt(xin, w1)?;
            let h = t.add_row(h, b1)?;
            let h = t.relu(h)?;
            let o = t.matmul_nt(h, w2)?;
            let o = t.tanh(o)?;
            t.sum(o)
        };

        let mut analytic = params.clone();
        let mut t = Tape::new();
        let loss = build(&mut t, &analytic).unwrap();
        t.backward(loss, &mut analytic).unwrap();
        let fd = finite_difference_grads(&params, 1e-5, build).unwrap();
        let err = max_relative_error(&analytic, &fd).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn softmax_kl_pipeline_matches_finite_differences() {
        // KL(const target ‖ softmax(Wx / τ)) exercises SoftmaxTemp + KlDiv VJPs
        let params = random_params(&[("w", &[4, 3])], 21);
        let x = Tensor::vector(vec![0.2, -0.5, 0.8]);
        let target = Tensor::vector(vec![0.1, 0.2, 0.3, 0.4]);

        let build = |t: &mut Tape, p: &ParameterSet| -> crate::Result<NodeId> {
            let w = t.param("w", p.get("w")?);
            let xc = t.constant(x.clone());
            let logits = t.matvec(w, xc)?;
            let probs = t.softmax_temp(logits, 0.7)?;
            let tgt = t.constant(target.clone());
            t.kl_div(tgt, probs)
        };

        let mut analytic = params.clone();
        let mut t = Tape::new();
        let loss = build(&mut t, &analytic).unwrap();
        t.backward(loss, &mut analytic).unwrap();
        let fd = finite_difference_grads(&params, 1e-5, build).unwrap();
        let err = max_relative_error(&analytic, &fd).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn pooling_and_normalize_match_finite_differences() {
        // l2_normalize(aᵀH) pooled with softmax weights, then pick_neg_log
        let params = random_params(&[("u", &[3, 4]), ("wv", &[3]), ("h", &[5, 4])], 31);

        let build = |t: &mut Tape, p: &ParameterSet| -> crate::Result<NodeId> {
            let h = t.param("h", p.get("h")?);
            let u = t.param("u", p.get("u")?);
            let wv = t.param("wv", p.get("wv")?);
            let scores = t.matmul_nt(h, u)?; // 5x3
            let scores = t.tanh(scores)?;
            let logits = t.matvec(scores, wv)?; // 5
            let a = t.softmax_temp(logits, 1.0)?;
            let z = t.vecmat(a, h)?; // 4
            let zn = t.l2_normalize(z)?;
            let sm = t.softmax_temp(zn, 0.5)?;
            t.pick_neg_log(sm, 1)
        };

        let mut analytic = params.clone();
        let mut t = Tape::new();
        let loss = build(&mut t, &analytic).unwrap();
        t.backward(loss, &mut analytic).unwrap();
        let fd = finite_difference_grads(&params, 1e-5, build).unwrap();
        let err = max_relative_error(&analytic, &fd).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn combine_ratio_matches_finite_differences() {
        // c = (a ⊙ b) / Σ(a ⊙ b) via mul + sum + div_by_scalar
        let params = random_params(&[("la", &[4]), ("lb", &[4])], 41);

        let build = |t: &mut Tape, p: &ParameterSet| -> crate::Result<NodeId> {
            let la = t.param("la", p.get("la")?);
            let lb = t.param("lb", p.get("lb")?);
            let a = t.softmax_temp(la, 1.0)?;
            let b = t.softmax_temp(lb, 1.0)?;
            let prod = t.mul(a, b)?;
            let denom = t.sum(prod)?;
            let c = t.div_by_scalar(prod, denom)?;
            // arbitrary scalar readout with nonuniform weights
            let wts = t.constant(Tensor::vector(vec![1.0, -2.0, 0.5, 3.0]));
            let weighted = t.mul(c, wts)?;
            let s = t.sum(weighted)?;
            let sq = t.mul(s, s)?;
            t.reshape(sq, &[])
        };

        let mut analytic = params.clone();
        let mut t = Tape::new();
        let loss = build(&mut t, &analytic).unwrap();
        t.backward(loss, &mut analytic).unwrap();
        let fd = finite_difference_grads(&params, 1e-5, build).unwrap();
        let err = max_relative_error(&analytic, &fd).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn row_and_sigmoid_match_finite_differences() {
        let params = random_params(&[("w", &[3, 4])], 51);

        let build = |t: &mut Tape, p: &ParameterSet| -> crate::Result<NodeId> {
            let w = t.param("w", p.get("w")?);
            let s = t.sigmoid(w)?;
            let r0 = t.row(s, 0)?;
            let r2 = t.row(s, 2)?;
            let m = t.mul(r0, r2)?;
            t.sum(m)
        };

        let mut analytic = params.clone();
        let mut t = Tape::new();
        let loss = build(&mut t, &analytic).unwrap();
        t.backward(loss, &mut analytic).unwrap();
        let fd = finite_difference_grads(&params, 1e-5, build).unwrap();
        let err = max_relative_error(&analytic, &fd).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = t.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        assert!(t.matmul(a, b).is_err());
        let v = t.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(t.softmax_temp(v, 0.0).is_err());
        assert!(t.softmax_temp(v, -1.0).is_err());
        let m = t.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        assert!(t.softmax_temp(m, 1.0).is_err());
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut params = ParameterSet::new();
        params.insert("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut t = Tape::new();
        let x = t.param("x", params.get("x").unwrap());
        assert!(t.backward(x, &mut params).is_err());
    }
}
