//! Feed-forward instance encoder: flattened pixels → M-dim embeddings, one
//! rectified affine layer per configured width, applied to a whole bag at once.

use rand::Rng;

use crate::autodiff::{NodeId, ParameterSet, Tape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Flattened input dimension (image side squared).
    pub input_dim: usize,
    /// Hidden widths; the last entry is the embedding dimension M.
    pub widths: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { input_dim: 256, widths: vec![500, 250, 500] }
    }
}

impl EncoderConfig {
    pub fn embed_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("encoder input_dim must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("bad encoder widths {:?}", self.widths)));
        }
        Ok(())
    }

    /// Registers `enc.w{i}` / `enc.b{i}` parameters, weights U(±1/√fan_in),
    /// biases zero.
    pub fn init_params(&self, params: &mut ParameterSet, rng: &mut impl Rng) -> Result<()> {
        self.validate()?;
        let mut fan_in = self.input_dim;
        for (i, &width) in self.widths.iter().enumerate() {
            params.insert(&format!("enc.w{i}"), Tensor::uniform_fan_in(width, fan_in, fan_in, rng))?;
            params.insert(&format!("enc.b{i}"), Tensor::zeros(&[width]))?;
            fan_in = width;
        }
        Ok(())
    }
}

/// Bag matrix (K×D) → embeddings (K×M): relu(X·Wᵢᵀ + bᵢ) layer by layer.
pub fn encode_bag(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    params: &ParameterSet,
    bag: &Tensor,
) -> Result<NodeId> {
    if bag.rank() != 2 || bag.rows() == 0 || bag.cols() != cfg.input_dim {
        return Err(Error::Shape {
            op: "encode_bag",
            detail: format!("bag {:?}, expected [K>0, {}]", bag.shape, cfg.input_dim),
        });
    }
    bag.ensure_finite("encode_bag input")?;
    let mut h = tape.constant(bag.clone());
    for i in 0..cfg.widths.len() {
        let w = tape.param(&format!("enc.w{i}"), params.get(&format!("enc.w{i}"))?);
        let b = tape.param(&format!("enc.b{i}"), params.get(&format!("enc.b{i}"))?);
        h = tape.matmul_nt(h, w)?;
        h = tape.add_row(h, b)?;
        h = tape.relu(h)?;
    }
    Ok(h)
}
