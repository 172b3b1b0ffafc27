//! Augmentation bank: pure `Image -> Image` operators and the ordered action
//! list the agents choose from.

mod bank;
mod image;
mod ops;

pub use bank::{default_bank, Bank};
pub use image::Image;
pub use ops::{apply, AugmentationAction, AugmentationOp};
