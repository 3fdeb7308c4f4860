//! Core library for SSD-MobileNetV2 mask detection on CPU.
//!
//! The crate is organized around a per-frame inference pipeline plus the
//! surrounding tooling needed to feed and score it:
//!
//! - [`tensor`]: dense HWC tensors and the convolution/activation/resize
//!   primitives every layer is built from
//! - [`backbone`]: the MobileNetV2 feature extractor (stem, 17 inverted
//!   residual blocks, head conv) with two SSD feature taps
//! - [`ssd`]: anchor generation, extra feature layers, the detection head
//!   and the box offset coder
//! - [`postprocess`]: score filtering, per-class NMS and the assembled
//!   [`model::SsdModel::detect`] pipeline
//! - [`dataset`]: Pascal-VOC XML ingestion, label maps, splits and the
//!   record container
//! - [`augment`]: MixUp and geometric augmentation with box bookkeeping
//! - [`eval`]: IoU, detection matching and COCO-style AP/mAP/AR
//! - [`weights`]: the weight container format, validation and seeded
//!   random initialization

pub mod augment;
pub mod backbone;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod postprocess;
pub mod rng;
pub mod ssd;
pub mod tensor;
pub mod weights;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
