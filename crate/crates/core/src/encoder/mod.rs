//! Patch encoders trained with a supervised contrastive loss, and node-level
//! feature extraction.

mod augment;
mod features;
mod network;
mod supcon;
mod train;

pub use augment::{augment, gaussian_blur, mirror, AugmentationConfig, Axis};
pub use features::{
    config_hash, embed_nodes, load_encoder, node_patch, pixel_of, read_features, sample_patches, save_encoder, write_features,
    FeatureHeader,
};
pub use network::{Architecture, Encoder, EncoderConfig, ResBlock};
pub use supcon::{supcon_loss, NORM_TOLERANCE};
pub use train::{train_encoder, EncoderOptimizer, EncoderSchedule, PatchDataset, TrainedEncoder};
