//! Expert-curated patch library.
//!
//! On disk a library is a directory:
//!
//! ```text
//! <root>/manifest.json
//! <root>/patches/<id>.dfm
//! ```
//!
//! The manifest is replaced via write-then-rename so readers never observe a
//! half-written document. A pedestrian patch's raster extent doubles as its
//! ground-truth bounding box, so every stored patch is tightly cropped.

pub mod silhouettes;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, PixelRect};
use crate::error::{invalid, io_err, Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PATCH_DIR: &str = "patches";
pub const SCHEMA_VERSION: u32 = 1;

/// Largest metric side accepted for a pedestrian silhouette.
pub const MAX_PEDESTRIAN_SIDE_M: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchCategory {
    Pedestrian,
    Object,
    NoiseArtifact,
}

impl PatchCategory {
    pub const ALL: [PatchCategory; 3] = [
        PatchCategory::Pedestrian,
        PatchCategory::Object,
        PatchCategory::NoiseArtifact,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatchCategory::Pedestrian => "pedestrian",
            PatchCategory::Object => "object",
            PatchCategory::NoiseArtifact => "noise_artifact",
        }
    }
}

impl fmt::Display for PatchCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatchCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pedestrian" => Ok(PatchCategory::Pedestrian),
            "object" => Ok(PatchCategory::Object),
            "noise_artifact" | "noise" => Ok(PatchCategory::NoiseArtifact),
            other => Err(invalid(format!("unknown patch category {other:?}"))),
        }
    }
}

/// Where a patch was cut from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_frame: Option<String>,
    pub source_rect: Option<PixelRect>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub id: String,
    pub category: PatchCategory,
    pub map: DepthMap,
    pub provenance: Provenance,
    pub created_at: String,
}

impl Patch {
    /// Metric size `(width, height)` of the raster, which is also the box annotation.
    pub fn extent_m(&self) -> (f64, f64) {
        self.map.extent_m()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: PatchCategory,
    pub file: String,
    pub source_frame: Option<String>,
    pub source_rect: Option<PixelRect>,
    pub created_at: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
}

/// Checks the stored-patch invariants.
pub fn validate_patch(map: &DepthMap, category: PatchCategory) -> Result<()> {
    if map.is_all_floor() {
        return Err(Error::EmptyPatch);
    }
    if !map.is_tight() {
        return Err(invalid("patch raster has an all-floor border row or column"));
    }
    if category == PatchCategory::Pedestrian {
        let (w, h) = map.extent_m();
        if w > MAX_PEDESTRIAN_SIDE_M + 1e-6 || h > MAX_PEDESTRIAN_SIDE_M + 1e-6 {
            return Err(invalid(format!(
                "pedestrian patch is {w:.2} m x {h:.2} m, above the {MAX_PEDESTRIAN_SIDE_M} m bound"
            )));
        }
    }
    Ok(())
}

/// A set of patches, optionally persisted under a root directory.
#[derive(Clone, Debug, Default)]
pub struct PatchLibrary {
    root: Option<PathBuf>,
    patches: Vec<Patch>,
    by_category: [Vec<usize>; 3],
    next_serial: u64,
    warnings: Vec<String>,
}

fn category_slot(c: PatchCategory) -> usize {
    match c {
        PatchCategory::Pedestrian => 0,
        PatchCategory::Object => 1,
        PatchCategory::NoiseArtifact => 2,
    }
}

fn serial_of(id: &str) -> Option<u64> {
    id.strip_prefix('p').and_then(|s| s.parse().ok())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(format!("renaming onto {}", path.display()))(e)
    })
}

impl PatchLibrary {
    /// A library that lives only in memory; `add_patch` never touches disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates an empty library at `root`, or loads the one already there.
    pub fn open_or_create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        if root.join(MANIFEST_FILE).exists() {
            return Self::load(root);
        }
        let lib = Self {
            root: Some(root.to_path_buf()),
            ..Self::default()
        };
        lib.save()?;
        Ok(lib)
    }

    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let manifest_path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .map_err(io_err(format!("reading {}", manifest_path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Format {
                path: manifest_path,
                reason: format!("unsupported schema_version {}", manifest.schema_version),
            });
        }

        let mut lib = Self {
            root: Some(root.to_path_buf()),
            ..Self::default()
        };
        let mut seen = BTreeSet::new();
        for entry in manifest.entries {
            if !seen.insert(entry.id.clone()) {
                return Err(Error::CorruptPatch {
                    id: entry.id,
                    reason: "duplicate id in manifest".into(),
                });
            }
            let map = DepthMap::load_dfm(root.join(&entry.file)).map_err(|e| Error::CorruptPatch {
                id: entry.id.clone(),
                reason: e.to_string(),
            })?;
            validate_patch(&map, entry.category).map_err(|e| Error::CorruptPatch {
                id: entry.id.clone(),
                reason: e.to_string(),
            })?;
            lib.insert(Patch {
                id: entry.id,
                category: entry.category,
                map,
                provenance: Provenance {
                    source_frame: entry.source_frame,
                    source_rect: entry.source_rect,
                },
                created_at: entry.created_at,
            });
        }

        let patch_dir = root.join(PATCH_DIR);
        if let Ok(dir) = fs::read_dir(&patch_dir) {
            let mut orphans: Vec<String> = dir
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|name| name.ends_with(".dfm"))
                .filter(|name| !seen.contains(name.trim_end_matches(".dfm")))
                .collect();
            orphans.sort();
            for name in orphans {
                let msg = format!("orphaned patch file {PATCH_DIR}/{name} is not in the manifest");
                log::warn!("{msg}");
                lib.warnings.push(msg);
            }
        }
        Ok(lib)
    }

    /// Writes every patch raster and the manifest.
    pub fn save(&self) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let patch_dir = root.join(PATCH_DIR);
        fs::create_dir_all(&patch_dir).map_err(io_err(format!("creating {}", patch_dir.display())))?;
        for p in &self.patches {
            write_atomic(&root.join(Self::file_name(&p.id)), &p.map.to_dfm_bytes())?;
        }
        self.write_manifest()
    }

    fn file_name(id: &str) -> String {
        format!("{PATCH_DIR}/{id}.dfm")
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            entries: self
                .patches
                .iter()
                .map(|p| ManifestEntry {
                    id: p.id.clone(),
                    category: p.category,
                    file: Self::file_name(&p.id),
                    source_frame: p.provenance.source_frame.clone(),
                    source_rect: p.provenance.source_rect,
                    created_at: p.created_at.clone(),
                })
                .collect(),
        }
    }

    fn write_manifest(&self) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let json = serde_json::to_vec_pretty(&self.manifest())?;
        write_atomic(&root.join(MANIFEST_FILE), &json)
    }

    fn insert(&mut self, patch: Patch) {
        if let Some(n) = serial_of(&patch.id) {
            self.next_serial = self.next_serial.max(n + 1);
        }
        self.by_category[category_slot(patch.category)].push(self.patches.len());
        self.patches.push(patch);
    }

    fn reindex(&mut self) {
        self.by_category = Default::default();
        for (i, p) in self.patches.iter().enumerate() {
            self.by_category[category_slot(p.category)].push(i);
        }
    }

    fn fresh_id(&self) -> String {
        format!("p{:06}", self.next_serial.max(1))
    }

    /// Tightens `map`, assigns a fresh id and persists it.
    pub fn add_patch(
        &mut self,
        map: &DepthMap,
        category: PatchCategory,
        provenance: Provenance,
    ) -> Result<Patch> {
        let (tight, _) = map.tighten()?;
        validate_patch(&tight, category)?;
        let patch = Patch {
            id: self.fresh_id(),
            category,
            map: tight,
            provenance,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };

        if let Some(root) = self.root.clone() {
            let patch_dir = root.join(PATCH_DIR);
            fs::create_dir_all(&patch_dir).map_err(io_err(format!("creating {}", patch_dir.display())))?;
            let file = root.join(Self::file_name(&patch.id));
            write_atomic(&file, &patch.map.to_dfm_bytes())?;
            self.insert(patch.clone());
            if let Err(e) = self.write_manifest() {
                self.patches.pop();
                self.reindex();
                let _ = fs::remove_file(&file);
                return Err(e);
            }
        } else {
            self.insert(patch.clone());
        }
        Ok(patch)
    }

    pub fn delete_patch(&mut self, id: &str) -> Result<Patch> {
        let pos = self
            .patches
            .iter()
            .position(|p| p.id == id)
            .ok_or_else(|| Error::UnknownPatch(id.to_string()))?;
        let removed = self.patches.remove(pos);
        self.reindex();
        if let Some(root) = &self.root {
            if let Err(e) = self.write_manifest() {
                self.patches.insert(pos, removed);
                self.reindex();
                return Err(e);
            }
            let _ = fs::remove_file(root.join(Self::file_name(id)));
        }
        Ok(removed)
    }

    /// Uniform draw from one category.
    pub fn sample<R: Rng + ?Sized>(&self, category: PatchCategory, rng: &mut R) -> Result<&Patch> {
        let idx = &self.by_category[category_slot(category)];
        if idx.is_empty() {
            return Err(Error::EmptyCategory(category.to_string()));
        }
        Ok(&self.patches[idx[rng.random_range(0..idx.len())]])
    }

    /// Uniform draw over the union of several categories; `None` when all are empty.
    pub fn sample_union<R: Rng + ?Sized>(
        &self,
        categories: &[PatchCategory],
        rng: &mut R,
    ) -> Option<&Patch> {
        let total: usize = categories.iter().map(|&c| self.count(c)).sum();
        if total == 0 {
            return None;
        }
        let mut k = rng.random_range(0..total);
        for &c in categories {
            let idx = &self.by_category[category_slot(c)];
            if k < idx.len() {
                return Some(&self.patches[idx[k]]);
            }
            k -= idx.len();
        }
        unreachable!("draw index within union size")
    }

    pub fn get(&self, id: &str) -> Option<&Patch> {
        self.patches.iter().find(|p| p.id == id)
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn by_category(&self, category: PatchCategory) -> impl Iterator<Item = &Patch> {
        self.by_category[category_slot(category)]
            .iter()
            .map(move |&i| &self.patches[i])
    }

    pub fn count(&self, category: PatchCategory) -> usize {
        self.by_category[category_slot(category)].len()
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Problems found while loading that did not prevent it (orphaned files).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn blob(w: usize, h: usize, ring: usize) -> DepthMap {
        DepthMap::from_fn(w, h, 0.0182, 4.0, |x, y| {
            if x >= ring && y >= ring && x < w - ring && y < h - ring {
                2.2 + 0.01 * (x + y) as f32
            } else {
                4.0
            }
        })
        .unwrap()
    }

    #[test]
    fn add_trims_and_assigns_ids() {
        let mut lib = PatchLibrary::in_memory();
        let one = lib.add_patch(&blob(1, 1, 0), PatchCategory::Pedestrian, Provenance::default()).unwrap();
        assert_eq!((one.map.width(), one.map.height()), (1, 1));
        let ringed = lib.add_patch(&blob(10, 10, 1), PatchCategory::Pedestrian, Provenance::default()).unwrap();
        assert_eq!((ringed.map.width(), ringed.map.height()), (8, 8));
        assert!(ringed.map.is_tight());
        assert_ne!(one.id, ringed.id);
        let floor = DepthMap::new_background(5, 5, 0.0182, 4.0).unwrap();
        assert!(matches!(
            lib.add_patch(&floor, PatchCategory::Object, Provenance::default()),
            Err(Error::EmptyPatch)
        ));
        assert_eq!(lib.len(), 2);
    }

    #[test]
    fn oversized_pedestrian_rejected() {
        let mut lib = PatchLibrary::in_memory();
        // 70 px at 18.2 mm is 1.27 m
        let big = blob(70, 20, 0);
        assert!(lib.add_patch(&big, PatchCategory::Pedestrian, Provenance::default()).is_err());
        assert!(lib.add_patch(&big, PatchCategory::Object, Provenance::default()).is_ok());
    }

    #[test]
    fn sampling_respects_category() {
        let mut lib = PatchLibrary::in_memory();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(lib.sample(PatchCategory::Pedestrian, &mut rng), Err(Error::EmptyCategory(_))));
        let ped = lib.add_patch(&blob(3, 3, 0), PatchCategory::Pedestrian, Provenance::default()).unwrap();
        lib.add_patch(&blob(4, 4, 0), PatchCategory::Object, Provenance::default()).unwrap();
        for _ in 0..50 {
            assert_eq!(lib.sample(PatchCategory::Pedestrian, &mut rng).unwrap().id, ped.id);
        }
        assert!(lib.sample_union(&[PatchCategory::NoiseArtifact], &mut rng).is_none());
        let d = lib
            .sample_union(&[PatchCategory::Object, PatchCategory::NoiseArtifact], &mut rng)
            .unwrap();
        assert_eq!(d.category, PatchCategory::Object);
    }

    #[test]
    fn category_names_round_trip() {
        for c in PatchCategory::ALL {
            assert_eq!(c.as_str().parse::<PatchCategory>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{}\"", c.as_str()));
        }
        assert!("person".parse::<PatchCategory>().is_err());
    }

    #[test]
    fn delete_unknown_id() {
        let mut lib = PatchLibrary::in_memory();
        assert!(matches!(lib.delete_patch("p000009"), Err(Error::UnknownPatch(_))));
    }
}
