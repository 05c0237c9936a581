//! Rule-based tissue segmentation of axial slices and label-mask handling.

mod baseline;
mod mask;
pub mod morphology;

pub use baseline::{
    body_mask, segment_range, segment_slice, segment_volume, BodyMask, HuRange, SegParams,
    SliceSegmentation,
};
pub use mask::{ingest_mask, BinaryMask, LabelMask, MaskStack, Tissue};
