//! Momentum-contrast pretraining: augmented views, a query/key encoder pair,
//! a FIFO negative queue, the InfoNCE objective at instance and bag level,
//! and the kNN probe that drives early stopping.

pub mod augment;
pub mod knn;
pub mod moco;
pub mod queue;

pub use augment::{augment, augment_bag, AugmentationPolicy};
pub use knn::{embed_bag_mean, embed_bag_pooled, knn_probe};
pub use moco::{
    bag_embed, info_nce, init_bag_cl_params, init_img_cl_params, instance_embed, pooled_z,
    pretrain_bag_cl, pretrain_img_cl, strip_projection, EncoderPair, PoolingMode, PretrainConfig,
    PretrainEpoch, PretrainOutcome,
};
pub use queue::NegativeQueue;
