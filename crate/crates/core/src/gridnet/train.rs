use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::NetworkParams;
use super::model::{batch_loss, loss_and_grad, normalize_input, LossWeights};
use crate::depth::DepthMap;
use crate::error::{invalid, io_err, Error, Result};
use crate::synth::{GroundTruthGrid, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn sgd() -> Self {
        Optimizer::Sgd { momentum: 0.9 }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 64,
            learning_rate: 3e-4,
            optimizer: Optimizer::default(),
            seed: 0,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        // zero is accepted so that a run can be replayed without updates
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} must be finite and non-negative", self.learning_rate)));
        }
        match self.optimizer {
            Optimizer::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                return Err(invalid("momentum must be in [0, 1)"));
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                return Err(invalid("adam needs betas in [0, 1) and eps > 0"));
            }
            _ => {}
        }
        self.loss_weights.validate()
    }
}

/// A network input with its target grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub input: Vec<f32>,
    pub truth: GroundTruthGrid,
}

impl TrainSample {
    pub fn new(image: &DepthMap, truth: GroundTruthGrid) -> Self {
        Self {
            input: normalize_input(image),
            truth,
        }
    }

    pub fn from_scene(scene: &Scene) -> Self {
        Self::new(&scene.image, scene.truth.clone())
    }
}

pub fn samples_from_scenes(scenes: &[Scene]) -> Vec<TrainSample> {
    scenes.iter().map(TrainSample::from_scene).collect()
}

/// Mean loss of `params` over `samples`, evaluated in chunks.
pub fn dataset_loss(params: &NetworkParams<f32>, samples: &[TrainSample], w: &LossWeights) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("empty sample set"));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(64) {
        let inputs: Vec<&[f32]> = chunk.iter().map(|s| s.input.as_slice()).collect();
        let truths: Vec<&GroundTruthGrid> = chunk.iter().map(|s| &s.truth).collect();
        total += batch_loss(params, &inputs, &truths, w)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch, before each update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss` with an empty field for a missing validation loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for r in &self.epochs {
            let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, val);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(io_err(format!("writing {}", path.display())))
    }
}

/// Moment buffers of the optimizer; `second` is only used by Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Option<NetworkParams<f32>>,
    pub second: Option<NetworkParams<f32>>,
}

impl OptimizerState {
    pub fn fresh() -> Self {
        Self {
            step: 0,
            first: None,
            second: None,
        }
    }
}

/// Resumable training loop. Each epoch visits the training set in an order
/// drawn from `(seed, epoch)`, so resuming from a checkpoint replays exactly
/// the same updates as an uninterrupted run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: NetworkParams<f32>,
    pub config: TrainConfig,
    pub state: OptimizerState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub history: TrainHistory,
}

impl Trainer {
    pub fn new(params: NetworkParams<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        params.arch.validate()?;
        Ok(Self {
            params,
            config,
            state: OptimizerState::fresh(),
            epoch: 0,
            history: TrainHistory::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    fn epoch_order(&self, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    fn apply(&mut self, grads: &NetworkParams<f32>) -> Result<()> {
        let lr = self.config.learning_rate;
        self.state.step += 1;
        match self.config.optimizer {
            Optimizer::Sgd { momentum } => {
                let vel = self.state.first.get_or_insert_with(|| {
                    let mut z = grads.clone();
                    z.fill_zero();
                    z
                });
                for ((p, v), g) in self.params.tensors_mut().zip(vel.tensors_mut()).zip(grads.tensors()) {
                    for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                        *v = (momentum * *v as f64 + g as f64) as f32;
                        *p -= (lr * *v as f64) as f32;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let zero = || {
                    let mut z = grads.clone();
                    z.fill_zero();
                    z
                };
                let m = self.state.first.get_or_insert_with(zero);
                let v = self.state.second.get_or_insert_with(zero);
                let t = self.state.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, m), v), g) in self
                    .params
                    .tensors_mut()
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                    .zip(grads.tensors())
                {
                    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                        let g = g as f64;
                        let mm = beta1 * *m as f64 + (1.0 - beta1) * g;
                        let vv = beta2 * *v as f64 + (1.0 - beta2) * g * g;
                        *m = mm as f32;
                        *v = vv as f32;
                        *p -= (lr * (mm / c1) / ((vv / c2).sqrt() + eps)) as f32;
                    }
                }
            }
        }
        if !self.params.all_finite() {
            return Err(Error::Diverged {
                epoch: self.epoch + 1,
                loss: f64::NAN,
            });
        }
        Ok(())
    }

    /// One pass over `train`, then the validation loss if `val` is non-empty.
    pub fn run_epoch(&mut self, train: &[TrainSample], val: &[TrainSample]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(invalid("empty training set"));
        }
        let order = self.epoch_order(train.len());
        let w = self.config.loss_weights;
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let inputs: Vec<&[f32]> = batch.iter().map(|&i| train[i].input.as_slice()).collect();
            let truths: Vec<&GroundTruthGrid> = batch.iter().map(|&i| &train[i].truth).collect();
            let (loss, grads) = loss_and_grad(&self.params, &inputs, &truths, &w)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.epoch + 1,
                    loss,
                });
            }
            total += loss * batch.len() as f64;
            self.apply(&grads)?;
        }
        self.epoch += 1;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(dataset_loss(&self.params, val, &w)?)
        };
        let rec = EpochRecord {
            epoch: self.epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        };
        log::debug!("epoch {} train {:.5} val {:?}", rec.epoch, rec.train_loss, rec.val_loss);
        self.history.epochs.push(rec);
        Ok(rec)
    }

    /// Runs the remaining epochs up to `config.epochs`.
    pub fn run(&mut self, train: &[TrainSample], val: &[TrainSample]) -> Result<()> {
        while !self.is_done() {
            self.run_epoch(train, val)?;
        }
        Ok(())
    }
}

/// Trains `params` for `cfg.epochs` epochs from scratch optimizer state.
pub fn train(
    params: NetworkParams<f32>,
    train: &[TrainSample],
    val: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<(NetworkParams<f32>, TrainHistory)> {
    let mut trainer = Trainer::new(params, cfg.clone())?;
    trainer.run(train, val)?;
    Ok((trainer.params, trainer.history))
}
