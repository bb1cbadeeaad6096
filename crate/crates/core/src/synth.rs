//! Annotated synthetic scenes.
//!
//! A scene starts as an all-floor canvas at native resolution. Each grid cell
//! independently receives an augmented pedestrian patch with probability `q`,
//! centred uniformly inside the cell; then `N ~ Poisson(lambda)` augmented
//! object/artifact patches are dropped anywhere in frame. Everything is merged
//! with the min-composition, scene noise is added last and the result is
//! min-pooled to the network resolution. Only pedestrians produce truth.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{gaussian_noise, random_augment, AugmentConfig};
use crate::depth::{DepthMap, DEFAULT_FLOOR_DEPTH};
use crate::error::{invalid, io_err, Error, Result};
pub use crate::grid::{min_center_distance, CellVector, GridSpec};
use crate::patchlib::{PatchCategory, PatchLibrary};

/// Ground-truth flavour of the per-cell vector.
pub type CellTruth = CellVector;

pub const DATASET_MANIFEST: &str = "dataset.json";
pub const SCENE_DIR: &str = "scenes";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub grid: GridSpec,
    /// Per-cell pedestrian probability.
    pub q: f64,
    /// Mean number of distractor patches.
    pub lambda: f64,
    pub augment: AugmentConfig,
    /// Standard deviation of the scene noise, meters.
    pub noise_sigma: f32,
    pub native_width: usize,
    pub native_height: usize,
    pub downsample: usize,
    pub floor_depth: f32,
    /// When set, replaces per-cell Bernoulli draws: the pedestrian count is
    /// drawn uniformly from this inclusive range and that many distinct cells
    /// are chosen uniformly. Used for evaluation sets spanning a count range.
    pub count_range: Option<(usize, usize)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_grid(5, 0.5)
    }
}

impl SynthConfig {
    pub fn with_grid(s: usize, q: f64) -> Self {
        Self {
            grid: GridSpec::with_cells(s),
            q,
            lambda: 3.0,
            augment: AugmentConfig::default(),
            noise_sigma: 0.01,
            native_width: 640,
            native_height: 480,
            downsample: 4,
            floor_depth: DEFAULT_FLOOR_DEPTH,
            count_range: None,
        }
    }

    /// Square native pixel pitch spanning the grid's horizontal extent.
    pub fn native_pitch(&self) -> f32 {
        (self.grid.extent_x / self.native_width as f64) as f32
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(0.0..=1.0).contains(&self.q) {
            return Err(invalid(format!("q = {} outside [0, 1]", self.q)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(invalid("noise sigma must be >= 0"));
        }
        self.augment.validate()?;
        if self.downsample == 0
            || self.native_width != self.grid.width * self.downsample
            || self.native_height != self.grid.height * self.downsample
        {
            return Err(invalid(format!(
                "native {}x{} / {} does not match grid {}x{}",
                self.native_width, self.native_height, self.downsample, self.grid.width, self.grid.height
            )));
        }
        if let Some((lo, hi)) = self.count_range {
            if lo > hi || hi > self.grid.cell_count() {
                return Err(invalid(format!("count range ({lo}, {hi}) invalid for {} cells", self.grid.cell_count())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthGrid {
    pub grid: GridSpec,
    pub cells: Vec<CellTruth>,
}

impl GroundTruthGrid {
    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            cells: vec![CellTruth::EMPTY; grid.cell_count()],
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.p > 0.5).count()
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.p > 0.5).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: DepthMap,
    pub truth: GroundTruthGrid,
    pub seed: u64,
    pub pedestrian_count: usize,
    pub distractor_count: usize,
}

fn choose_cells<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Vec<bool> {
    let cells = cfg.grid.cell_count();
    match cfg.count_range {
        None => (0..cells).map(|_| rng.random_bool(cfg.q)).collect(),
        Some((lo, hi)) => {
            let k = rng.random_range(lo..=hi);
            let mut occ = vec![false; cells];
            for i in index::sample(rng, cells, k) {
                occ[i] = true;
            }
            occ
        }
    }
}

/// Builds one scene; identical for identical `(cfg, lib, seed)`.
pub fn generate_scene(cfg: &SynthConfig, lib: &PatchLibrary, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    if lib.count(PatchCategory::Pedestrian) == 0 {
        return Err(Error::EmptyCategory(PatchCategory::Pedestrian.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitch = cfg.native_pitch();
    let (nw, nh) = (cfg.native_width, cfg.native_height);
    let mut canvas = DepthMap::new_background(nw, nh, pitch, cfg.floor_depth)?;
    let s = cfg.grid.s;
    let (cw, ch) = (nw as f64 / s as f64, nh as f64 / s as f64);

    let occupied = choose_cells(cfg, &mut rng);
    let mut truth = GroundTruthGrid::empty(cfg.grid);
    for (cell, _) in occupied.iter().enumerate().filter(|(_, &o)| o) {
        let (col, row) = cfg.grid.cell_pos(cell);
        let patch = lib.sample(PatchCategory::Pedestrian, &mut rng)?;
        let patch = random_augment(patch, &cfg.augment, &mut rng)?;
        let u = rng.random_range(col as f64 * cw..(col + 1) as f64 * cw);
        let v = rng.random_range(row as f64 * ch..(row + 1) as f64 * ch);
        let at = ((u as usize).min(nw - 1), (v as usize).min(nh - 1));
        let rect = canvas.paste_in_place(&patch.map, at)?;
        // cell-relative centre; kept strictly below 1 against rounding
        let below_one = 1.0 - f32::EPSILON;
        truth.cells[cell] = CellTruth::occupied(
            ((u / cw - col as f64) as f32).clamp(0.0, below_one),
            ((v / ch - row as f64) as f32).clamp(0.0, below_one),
            rect.w as f32 / nw as f32,
            rect.h as f32 / nh as f32,
        );
    }

    let n_distractors = if cfg.lambda > 0.0 {
        let poisson = Poisson::new(cfg.lambda).map_err(|e| invalid(e.to_string()))?;
        poisson.sample(&mut rng) as usize
    } else {
        0
    };
    let pool = [PatchCategory::Object, PatchCategory::NoiseArtifact];
    let mut placed = 0;
    for _ in 0..n_distractors {
        let Some(patch) = lib.sample_union(&pool, &mut rng) else {
            break;
        };
        let patch = random_augment(patch, &cfg.augment, &mut rng)?;
        let at = (rng.random_range(0..nw), rng.random_range(0..nh));
        canvas.paste_in_place(&patch.map, at)?;
        placed += 1;
    }

    let noisy = gaussian_noise(&canvas, cfg.noise_sigma, &mut rng)?;
    let image = noisy.downsample(cfg.downsample)?;
    let pedestrian_count = truth.occupied_count();
    Ok(Scene {
        image,
        truth,
        seed,
        pedestrian_count,
        distractor_count: placed,
    })
}

/// Scenes for seeds `base_seed..base_seed + count`, in seed order.
pub fn generate_scenes(cfg: &SynthConfig, lib: &PatchLibrary, base_seed: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_scene(cfg, lib, base_seed + i))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub complete: bool,
    pub config: SynthConfig,
    pub base_seed: u64,
    pub count: usize,
    /// Inclusive seed range `[first, last]`.
    pub seeds: (u64, u64),
    pub pedestrian_counts: Vec<usize>,
    pub distractor_counts: Vec<usize>,
}

impl DatasetManifest {
    pub fn mean_pedestrians(&self) -> f64 {
        if self.pedestrian_counts.is_empty() {
            return 0.0;
        }
        self.pedestrian_counts.iter().sum::<usize>() as f64 / self.pedestrian_counts.len() as f64
    }
}

pub fn scene_stem(dir: &Path, index: usize) -> PathBuf {
    dir.join(SCENE_DIR).join(format!("{index:06}"))
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join(DATASET_MANIFEST);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(manifest)?).map_err(io_err(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, &path).map_err(io_err(format!("renaming onto {}", path.display())))
}

/// Writes `count` scenes plus a manifest under `out_dir`.
///
/// The manifest is first written with `complete: false` and rewritten at the
/// end, so an interrupted run is recognisable.
pub fn generate_dataset(
    cfg: &SynthConfig,
    lib: &PatchLibrary,
    base_seed: u64,
    count: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(invalid("dataset count must be at least 1"));
    }
    cfg.validate()?;
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir.join(SCENE_DIR)).map_err(io_err(format!("creating {}", dir.display())))?;
    let mut manifest = DatasetManifest {
        complete: false,
        config: cfg.clone(),
        base_seed,
        count,
        seeds: (base_seed, base_seed + count as u64 - 1),
        pedestrian_counts: Vec::new(),
        distractor_counts: Vec::new(),
    };
    write_manifest(dir, &manifest)?;

    let stats: Vec<(usize, usize)> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<(usize, usize)> {
            let scene = generate_scene(cfg, lib, base_seed + i as u64)?;
            let stem = scene_stem(dir, i);
            scene.image.save_dfm(stem.with_extension("dfm"))?;
            let truth_path = stem.with_extension("truth.json");
            fs::write(&truth_path, scene.truth.to_json()?)
                .map_err(io_err(format!("writing {}", truth_path.display())))?;
            Ok((scene.pedestrian_count, scene.distractor_count))
        })
        .collect::<Result<_>>()?;

    manifest.pedestrian_counts = stats.iter().map(|s| s.0).collect();
    manifest.distractor_counts = stats.iter().map(|s| s.1).collect();
    manifest.complete = true;
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// A dataset directory read back into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<DepthMap>,
    pub truths: Vec<GroundTruthGrid>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(DATASET_MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(format!("reading {}", path.display())))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        if !manifest.complete {
            return Err(Error::Format {
                path,
                reason: "dataset generation did not complete".into(),
            });
        }
        let mut images = Vec::with_capacity(manifest.count);
        let mut truths = Vec::with_capacity(manifest.count);
        for i in 0..manifest.count {
            let stem = scene_stem(dir, i);
            images.push(DepthMap::load_dfm(stem.with_extension("dfm"))?);
            let tp = stem.with_extension("truth.json");
            let t = fs::read_to_string(&tp).map_err(io_err(format!("reading {}", tp.display())))?;
            truths.push(serde_json::from_str(&t)?);
        }
        Ok(Self {
            manifest,
            images,
            truths,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}
