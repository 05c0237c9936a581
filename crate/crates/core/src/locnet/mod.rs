//! Stage I: multi-view localization of the abdominal slice range.
//!
//! A residual 3D backbone turns the resampled volume into `D' = D / 16`
//! tokens (mean over the in-plane axes). Two small 2D encoders do the same
//! for the central coronal and sagittal planes. Each view queries the
//! volume tokens through cross-attention; both results are added back onto
//! the volume tokens, which two affine heads map to start and end heatmaps.

mod config;
mod model;
mod train;

pub use config::{LocNetConfig, ViewMode, SLICE_REDUCTION};
pub use model::{fuse_multiview, fuse_on_tape, Fusion, LocForward, LocInputs, LocNet, QueryKey};
pub use train::{
    batch_loss, heatmap_spacing, predict, train, train_with, Checkpoint, Prediction, TrainConfig, TrainMeta, TrainSample,
};
