//! Synthetic two-domain real/fake images. A real image is a textured
//! background with a rendered face ellipse; a fake pastes a face region from a
//! different sample over it, leaving a blending seam. Each domain renders and
//! post-processes differently, which is what produces the domain shift.

mod dataset;
mod render;
mod spec;

pub use dataset::{Dataset, DATASET_MAGIC, LABELS_CSV};
pub use render::{generate, render_sample, SeamGeometry};
pub use spec::{Background, DatasetManifest, DomainCounts, DomainSpec, PatchSource, SplitRatios, Splits};
