use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use pedloc_core::DepthMap;
use serde::Serialize;

use crate::ServiceError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FrameInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

/// Read-only set of DFM frames keyed by file stem, loaded once at startup.
#[derive(Debug, Default)]
pub struct FrameStore {
    frames: BTreeMap<String, Arc<DepthMap>>,
}

impl FrameStore {
    /// Loads every `*.dfm` file in `dir`. Any unreadable frame is an error.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        if !dir.is_dir() {
            return Err(ServiceError::Config(format!("frame directory {} does not exist", dir.display())));
        }
        let mut frames = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|e| ServiceError::Config(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| ServiceError::Config(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("dfm") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let map = DepthMap::load_dfm(&path).map_err(|e| ServiceError::Config(e.to_string()))?;
            frames.insert(id.to_string(), Arc::new(map));
        }
        Ok(Self { frames })
    }

    pub fn from_maps(maps: impl IntoIterator<Item = (String, DepthMap)>) -> Self {
        Self {
            frames: maps.into_iter().map(|(id, m)| (id, Arc::new(m))).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<DepthMap>> {
        self.frames.get(id).cloned()
    }

    pub fn list(&self) -> Vec<FrameInfo> {
        self.frames
            .iter()
            .map(|(id, m)| FrameInfo {
                id: id.clone(),
                width: m.width(),
                height: m.height(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
