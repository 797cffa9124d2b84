//! Attention-pooled multiple-instance learning for multi-view studies.
//!
//! A study is a bag of single-view images with one study-level label.
//! The engine trains a bag classifier whose attention is supervised by
//! per-instance view-relevance probabilities, optionally after a
//! momentum-contrastive pretraining stage over unlabeled bags.
//!
//! Layout:
//! - [`autodiff`]  dense tensors, reverse-mode tape, SGD + cosine schedule, checkpoints
//! - [`model`]     instance encoder, attention pooling (plain / gated / dual-branch), losses
//! - [`pretrain`]  augmentations, momentum encoder pair, negative queue, InfoNCE, kNN probe
//! - [`synth`]     deterministic synthetic study generator with known view relevance
//! - [`harness`]   metrics, training loops, pipeline orchestration, attention audit

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod model;
pub mod pretrain;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
