//! Checkpoint files: `GNC1`, a little-endian `u32` header length, a JSON
//! header, then every tensor as little-endian `f32` in declaration order.
//! Optimizer moment buffers, when present, follow the parameters in the same
//! layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{NetArch, NetworkParams};
use super::train::{OptimizerState, TrainConfig, TrainHistory, Trainer};
use crate::error::{io_err, Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GNC1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    arch: NetArch,
    epoch: usize,
    config: Option<TrainConfig>,
    optimizer_step: u64,
    has_first: bool,
    has_second: bool,
    history: TrainHistory,
}

/// Parameters plus, optionally, everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub config: Option<TrainConfig>,
    pub epoch: usize,
    pub state: OptimizerState,
    pub history: TrainHistory,
}

fn push_tensors(out: &mut Vec<u8>, p: &NetworkParams<f32>) {
    for t in p.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_tensors(arch: &NetArch, bytes: &[u8], at: &mut usize) -> std::result::Result<NetworkParams<f32>, String> {
    let mut p = NetworkParams::<f32>::zeros(arch).map_err(|e| e.to_string())?;
    let need = p.len() * 4;
    if bytes.len() < *at + need {
        return Err(format!("truncated tensor data: need {need} bytes at offset {}", *at));
    }
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
            *at += 4;
        }
    }
    if !p.all_finite() {
        return Err("non-finite parameter".into());
    }
    Ok(p)
}

impl Checkpoint {
    pub fn from_params(params: NetworkParams<f32>) -> Self {
        Self {
            params,
            config: None,
            epoch: 0,
            state: OptimizerState::fresh(),
            history: TrainHistory::default(),
        }
    }

    pub fn from_trainer(t: &Trainer) -> Self {
        Self {
            params: t.params.clone(),
            config: Some(t.config.clone()),
            epoch: t.epoch,
            state: t.state.clone(),
            history: t.history.clone(),
        }
    }

    /// Rebuilds a trainer positioned after the saved epoch. `config` replaces
    /// the stored one when given (for example to extend the epoch count).
    pub fn into_trainer(self, config: Option<TrainConfig>) -> Result<Trainer> {
        let cfg = config.or(self.config).unwrap_or_default();
        let mut t = Trainer::new(self.params, cfg)?;
        t.state = self.state;
        t.epoch = self.epoch;
        t.history = self.history;
        Ok(t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            arch: self.params.arch.clone(),
            epoch: self.epoch,
            config: self.config.clone(),
            optimizer_step: self.state.step,
            has_first: self.state.first.is_some(),
            has_second: self.state.second.is_some(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + self.params.len() * 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        push_tensors(&mut out, &self.params);
        for buf in [&self.state.first, &self.state.second].into_iter().flatten() {
            push_tensors(&mut out, buf);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: origin.to_path_buf(),
            reason,
        };
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing GNC1 magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if bytes.len() < 8 + hlen {
            return Err(bad("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[8..8 + hlen]).map_err(|e| bad(format!("header: {e}")))?;
        let mut at = 8 + hlen;
        let params = read_tensors(&header.arch, bytes, &mut at).map_err(bad)?;
        let first = if header.has_first {
            Some(read_tensors(&header.arch, bytes, &mut at).map_err(bad)?)
        } else {
            None
        };
        let second = if header.has_second {
            Some(read_tensors(&header.arch, bytes, &mut at).map_err(bad)?)
        } else {
            None
        };
        if at != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - at)));
        }
        Ok(Self {
            params,
            config: header.config,
            epoch: header.epoch,
            state: OptimizerState {
                step: header.optimizer_step,
                first,
                second,
            },
            history: header.history,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(io_err(format!("writing {}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(io_err(format!("renaming to {}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(io_err(format!("reading {}", path.display())))?;
        Self::from_bytes(&bytes, path)
    }
}
