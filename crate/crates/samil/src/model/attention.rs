//! Attention branches over bag embeddings, the product-combine rule for the
//! dual-branch model, and the softened relevance targets that supervise it.

use rand::Rng;

use crate::autodiff::tensor::softmax_temp_values;
use crate::autodiff::{NodeId, ParameterSet, Tape, Tensor};
use crate::error::{Error, Result};

/// Registers one branch: `{prefix}.u` (L×M) and `{prefix}.w` (L).
pub fn init_branch(
    params: &mut ParameterSet,
    prefix: &str,
    attn_dim: usize,
    embed_dim: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    params.insert(&format!("{prefix}.u"), Tensor::uniform_fan_in(attn_dim, embed_dim, embed_dim, rng))?;
    let mut w = Tensor::uniform_fan_in(1, attn_dim, attn_dim, rng);
    w.shape = vec![attn_dim];
    params.insert(&format!("{prefix}.w"), w)?;
    Ok(())
}

/// Registers the gate matrix `{prefix}.v` (L×M) for the gated variant.
pub fn init_gate(
    params: &mut ParameterSet,
    prefix: &str,
    attn_dim: usize,
    embed_dim: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    params.insert(&format!("{prefix}.v"), Tensor::uniform_fan_in(attn_dim, embed_dim, embed_dim, rng))
}

/// Per-instance scores wᵀ tanh(U hₖ) for branch `prefix`; softmax of these is
/// the attention distribution.
pub fn attention_logits(
    tape: &mut Tape,
    params: &ParameterSet,
    prefix: &str,
    h: NodeId,
) -> Result<NodeId> {
    let u = tape.param(&format!("{prefix}.u"), params.get(&format!("{prefix}.u"))?);
    let w = tape.param(&format!("{prefix}.w"), params.get(&format!("{prefix}.w"))?);
    let scores = tape.matmul_nt(h, u)?; // K×L
    let scores = tape.tanh(scores)?;
    tape.matvec(scores, w) // K
}

/// Gated scores wᵀ (tanh(U hₖ) ⊙ sigm(V hₖ)).
pub fn gated_attention_logits(
    tape: &mut Tape,
    params: &ParameterSet,
    prefix: &str,
    h: NodeId,
) -> Result<NodeId> {
    let u = tape.param(&format!("{prefix}.u"), params.get(&format!("{prefix}.u"))?);
    let v = tape.param(&format!("{prefix}.v"), params.get(&format!("{prefix}.v"))?);
    let w = tape.param(&format!("{prefix}.w"), params.get(&format!("{prefix}.w"))?);
    let tg = tape.matmul_nt(h, u)?;
    let tg = tape.tanh(tg)?;
    let sg = tape.matmul_nt(h, v)?;
    let sg = tape.sigmoid(sg)?;
    let gated = tape.mul(tg, sg)?;
    tape.matvec(gated, w)
}

/// cₖ = aₖ·bₖ / Σⱼ aⱼ·bⱼ. Errors if every product is zero — the bag
/// embedding would be undefined.
pub fn combine_attention(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let prod = tape.mul(a, b)?;
    let denom = tape.sum(prod)?;
    if tape.value(denom).scalar_value()? == 0.0 {
        return Err(Error::DegenerateAttention);
    }
    tape.div_by_scalar(prod, denom)
}

/// Supervised-attention targets R = softmax(v / τᵥ) from per-instance
/// relevance probabilities. Plain values — gradients never flow into these.
pub fn relevance_targets(v_probs: &[f64], tau_v: f64) -> Result<Tensor> {
    if v_probs.is_empty() {
        return Err(Error::Domain("relevance_targets needs at least one instance".into()));
    }
    if tau_v <= 0.0 || !tau_v.is_finite() {
        return Err(Error::Domain(format!("relevance temperature {tau_v} must be positive")));
    }
    if v_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::Domain("relevance probabilities must lie in [0, 1]".into()));
    }
    Ok(Tensor::vector(softmax_temp_values(v_probs, tau_v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn combine_hand_case() {
        // A=[.5,.5,0], B=[.2,.4,.4] → C=[1/3, 2/3, 0]
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![0.5, 0.5, 0.0]));
        let b = t.constant(Tensor::vector(vec![0.2, 0.4, 0.4]));
        let c = combine_attention(&mut t, a, b).unwrap();
        let v = t.value(c);
        assert_close(v.data[0], 1.0 / 3.0, 1e-12);
        assert_close(v.data[1], 2.0 / 3.0, 1e-12);
        assert_close(v.data[2], 0.0, 1e-12);
    }

    #[test]
    fn combine_rejects_all_zero_products() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 0.0]));
        let b = t.constant(Tensor::vector(vec![0.0, 1.0]));
        match combine_attention(&mut t, a, b) {
            Err(Error::DegenerateAttention) => {}
            other => panic!("expected DegenerateAttention, got {other:?}"),
        }
    }

    #[test]
    fn plain_logits_match_straight_line_evaluation() {
        let mut p = ParameterSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        init_branch(&mut p, "attn_a", 3, 4, &mut rng).unwrap();
        let h = Tensor::matrix(2, 4, vec![0.3, -0.1, 0.8, 0.2, -0.5, 0.6, 0.0, 1.0]).unwrap();

        let mut t = Tape::new();
        let hn = t.constant(h.clone());
        let logits = attention_logits(&mut t, &p, "attn_a", hn).unwrap();
        let got = t.value(logits).data.clone();

        let u = p.get("attn_a.u").unwrap();
        let w = p.get("attn_a.w").unwrap();
        for k in 0..2 {
            let mut expect = 0.0;
            for l in 0..3 {
                let mut dot = 0.0;
                for m in 0..4 {
                    dot += u.at(l, m) * h.at(k, m);
                }
                expect += w.data[l] * dot.tanh();
            }
            assert_close(got[k], expect, 1e-12);
        }
    }

    #[test]
    fn gated_logits_match_straight_line_evaluation() {
        let mut p = ParameterSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        init_branch(&mut p, "attn_a", 3, 4, &mut rng).unwrap();
        init_gate(&mut p, "attn_a", 3, 4, &mut rng).unwrap();
        let h = Tensor::matrix(2, 4, vec![0.3, -0.1, 0.8, 0.2, -0.5, 0.6, 0.0, 1.0]).unwrap();

        let mut t = Tape::new();
        let hn = t.constant(h.clone());
        let logits = gated_attention_logits(&mut t, &p, "attn_a", hn).unwrap();
        let got = t.value(logits).data.clone();

        let u = p.get("attn_a.u").unwrap();
        let v = p.get("attn_a.v").unwrap();
        let w = p.get("attn_a.w").unwrap();
        for k in 0..2 {
            let mut expect = 0.0;
            for l in 0..3 {
                let mut du = 0.0;
                let mut dv = 0.0;
                for m in 0..4 {
                    du += u.at(l, m) * h.at(k, m);
                    dv += v.at(l, m) * h.at(k, m);
                }
                expect += w.data[l] * du.tanh() * (1.0 / (1.0 + (-dv).exp()));
            }
            assert_close(got[k], expect, 1e-12);
        }
    }

    #[test]
    fn relevance_targets_hand_case() {
        // v=[1,0], τ=0.1 → softmax([10,0]) = [e¹⁰/(e¹⁰+1), 1/(e¹⁰+1)]
        let r = relevance_targets(&[1.0, 0.0], 0.1).unwrap();
        let e10 = 10.0f64.exp();
        assert_close(r.data[0], e10 / (e10 + 1.0), 1e-9);
        assert_close(r.data[1], 1.0 / (e10 + 1.0), 1e-9);
        assert_close(r.data[0], 0.99995, 1e-5);
        assert_close(r.data[1], 0.0000454, 1e-6);
    }

    #[test]
    fn relevance_targets_validate_inputs() {
        assert!(relevance_targets(&[], 0.1).is_err());
        assert!(relevance_targets(&[0.5], 0.0).is_err());
        assert!(relevance_targets(&[1.5], 0.1).is_err());
        assert!(relevance_targets(&[-0.1], 0.1).is_err());
    }
}
