//! The bag classifier: instance encoder, attention pooling (plain, gated, or
//! supervised dual-branch), the diagnosis head, and the training losses.

pub mod attention;
pub mod encoder;
pub mod mil;

pub use attention::{
    attention_logits, combine_attention, gated_attention_logits, relevance_targets,
};
pub use encoder::{encode_bag, EncoderConfig};
pub use mil::{
    abmil_loss, classify, samil_loss, AbmilOutputs, BagPrediction, MilModel, ModelConfig,
    SamilLossOutputs, SamilOutputs, Variant,
};
