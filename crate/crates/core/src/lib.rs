//! Lensless coded-aperture imaging at desk scale: a forward capture model,
//! fixed and learnable binary masks, privacy losses with analytic gradients,
//! a small trainable recognizer, and objective privacy metrics (blurriness
//! and isometry curves).

pub mod capture;
pub mod dataset;
pub mod error;
pub mod image;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod recognizer;
pub mod reference;

pub use capture::{capture, energy_ratio, CaptureConfig, ConvOperator, Measurement};
pub use error::{Error, Result};
pub use image::{Image, PixelGrid};
pub use losses::{
    inv_loss, rip_loss, sim_loss, total_loss, tv_loss, HiKind, LossValue, LossWeights,
};
pub use mask::{
    aperture_ratio, make_full_open, make_pinhole, make_random, CodedMask, MaskKind, MaskLogits,
    RelaxedMask,
};
