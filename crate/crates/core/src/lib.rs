//! Pedestrian localization in overhead depth maps.
//!
//! The crate covers the full offline pipeline:
//!
//! - [`depth`]: depth rasters, the min-composition algebra and file formats;
//! - [`patchlib`]: the curated patch library (pedestrians, objects, sensor artifacts);
//! - [`augment`]: per-patch transforms and scene noise;
//! - [`synth`]: annotated synthetic scene generation on an `S x S` grid;
//! - [`gridnet`]: the grid detector network, its loss, gradients and training loop;
//! - [`clusterloc`]: the complete-linkage clustering baseline;
//! - [`evalkit`]: per-cell precision, recall and IoU evaluation.

pub mod augment;
pub mod clusterloc;
pub mod depth;
pub mod detection;
pub mod error;
pub mod evalkit;
pub mod grid;
pub mod gridnet;
pub mod patchlib;
pub mod synth;

pub use depth::{DepthMap, Intrinsics, PixelRect, Translation};
pub use detection::{Detection, DetectionSource};
pub use error::{Error, Result};
pub use grid::{CellVector, GridSpec};
pub use patchlib::{Patch, PatchCategory, PatchLibrary};
