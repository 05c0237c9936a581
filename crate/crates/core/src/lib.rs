//! Abdominal CT body-composition toolkit.
//!
//! The pipeline has two stages:
//!
//! 1. **Localization** ([`locnet`]): a multi-view network finds the first and
//!    last abdominal slice of a CT volume. It sees the whole (resampled)
//!    volume through a 3D residual backbone, plus the central coronal and
//!    sagittal planes through light 2D encoders, fuses them with two
//!    cross-attention modules and predicts one 1D heatmap per endpoint
//!    ([`heatmap`]). It is built on the from-scratch autodiff engine in
//!    [`tensor`].
//! 2. **Segmentation and quantification** ([`seg`], [`metrics`]): every
//!    slice in the localized range is split into muscle, subcutaneous fat
//!    (SFA) and visceral fat (VFA), masks can be replaced by externally
//!    produced ones, and tissue areas/volumes/mean HU are reported.
//!
//! [`phantom`] generates synthetic abdomens with exact ground truth for all
//! of the above.

pub mod error;
pub mod heatmap;
pub mod locnet;
pub mod metrics;
pub mod phantom;
pub mod seg;
pub mod tensor;
pub mod volume;

pub use error::{Error, Result};
