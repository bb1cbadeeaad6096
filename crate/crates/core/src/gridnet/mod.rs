//! Grid detector network.
//!
//! Parameters are generic over [`Real`] so gradients can be checked in
//! 64-bit while training runs in 32-bit.

mod arch;
mod checkpoint;
mod decode;
mod model;
mod scalar;
mod train;

pub use arch::{init, LayerParams, LayerSpec, NetArch, NetworkParams, CELL_OUTPUTS};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use decode::decode;
pub use model::{
    backward, batch_loss, forward, forward_raw, forward_raw_batch, loss, loss_and_grad, normalize_input,
    outputs_to_prediction, GridPrediction, LossWeights,
};
pub use scalar::Real;
pub use train::{
    dataset_loss, samples_from_scenes, train, EpochRecord, Optimizer, OptimizerState, TrainConfig, TrainHistory,
    TrainSample, Trainer,
};

use crate::depth::DepthMap;
use crate::detection::Detection;
use crate::error::Result;
use crate::grid::GridSpec;

/// Forward pass followed by [`decode`] on the grid matching the image.
pub fn localize(params: &NetworkParams<f32>, image: &DepthMap, threshold: f64) -> Result<Vec<Detection>> {
    let pred = forward(params, image)?;
    let grid = GridSpec {
        s: params.arch.grid,
        width: image.width(),
        height: image.height(),
        extent_x: image.width() as f64 * image.pixel_pitch() as f64,
        extent_y: image.height() as f64 * image.pixel_pitch() as f64,
    };
    decode(&pred, &grid, threshold)
}

/// Brings `image` to the network's input size: unchanged when it already
/// matches, min-pooled when it is an exact integer multiple.
pub fn fit_input(params: &NetworkParams<f32>, image: &DepthMap) -> Result<DepthMap> {
    let (w, h) = (params.arch.input_width, params.arch.input_height);
    if (image.width(), image.height()) == (w, h) {
        return Ok(image.clone());
    }
    let k = image.width() / w;
    if k > 1 && image.width() == k * w && image.height() == k * h {
        return image.downsample(k);
    }
    Err(crate::error::Error::ShapeMismatch(format!(
        "image is {}x{}, network expects {w}x{h}",
        image.width(),
        image.height()
    )))
}
