//! Procedural stand-ins for expert-curated patches.
//!
//! Real libraries are cut from recorded frames through the curation service.
//! These generators produce plausible overhead shapes (head and shoulders,
//! furniture, sensor stains) so the pipeline can be exercised end to end
//! without recorded data.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatchCategory, PatchLibrary, Provenance};
use crate::depth::DepthMap;
use crate::error::Result;

/// How many procedural patches of each category to generate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LibraryCounts {
    pub pedestrians: usize,
    pub objects: usize,
    pub artifacts: usize,
}

impl Default for LibraryCounts {
    fn default() -> Self {
        Self {
            pedestrians: 24,
            objects: 8,
            artifacts: 8,
        }
    }
}

fn raster(side_m: f64, pitch: f32, floor: f32, mut height_at: impl FnMut(f64, f64) -> f64) -> Result<DepthMap> {
    let p = pitch as f64;
    let n = ((side_m / p).ceil() as usize).max(1) | 1;
    let half = (n / 2) as f64;
    let map = DepthMap::from_fn(n, n, pitch, floor, |x, y| {
        let h = height_at((x as f64 - half) * p, (y as f64 - half) * p);
        if h > 0.0 {
            (floor as f64 - h).clamp(0.05, floor as f64) as f32
        } else {
            floor
        }
    })?;
    Ok(map.tighten()?.0)
}

/// Head-and-shoulders silhouette of a person between 1.05 m and 1.95 m tall.
pub fn pedestrian<R: Rng + ?Sized>(rng: &mut R, pitch: f32, floor: f32) -> Result<DepthMap> {
    let stature = rng.random_range(1.05..1.95);
    let a = 0.13 * stature;
    let b = a * rng.random_range(0.5..0.62);
    let r = 0.058 * stature;
    let theta = rng.random_range(0.0..PI);
    let (s, c) = theta.sin_cos();
    let shoulder = 0.82 * stature;
    let head_fwd = 0.15 * b;
    raster(2.0 * a + 2.0 * pitch as f64, pitch, floor, |px, py| {
        let u = c * px + s * py;
        let v = -s * px + c * py;
        let e = (u / a).powi(2) + (v / b).powi(2);
        let mut h: f64 = 0.0;
        if e <= 1.0 {
            h = shoulder - 0.06 * e;
        }
        let dh = u * u + (v - head_fwd).powi(2);
        if dh <= r * r {
            h = h.max(stature - 0.08 * dh / (r * r));
        }
        h
    })
}

/// Furniture-like clutter: boxes, round tables or thin bars.
pub fn object<R: Rng + ?Sized>(rng: &mut R, pitch: f32, floor: f32) -> Result<DepthMap> {
    match rng.random_range(0..3) {
        0 => {
            let (hw, hh): (f64, f64) = (rng.random_range(0.12..0.4), rng.random_range(0.12..0.4));
            let top = rng.random_range(0.4..1.1);
            raster(2.0 * hw.max(hh) + 0.02, pitch, floor, |x, y| {
                if x.abs() <= hw && y.abs() <= hh {
                    top
                } else {
                    0.0
                }
            })
        }
        1 => {
            let rad = rng.random_range(0.2..0.45);
            let top = rng.random_range(0.6..0.8);
            raster(2.0 * rad + 0.02, pitch, floor, |x, y| if x * x + y * y <= rad * rad { top } else { 0.0 })
        }
        _ => {
            let len = rng.random_range(0.3..0.5);
            let thick = rng.random_range(0.03..0.06);
            let top = rng.random_range(1.0..2.0);
            let horizontal = rng.random_bool(0.5);
            raster(2.0 * len + 0.02, pitch, floor, |x, y| {
                let (along, across) = if horizontal { (x, y) } else { (y, x) };
                if along.abs() <= len && across.abs() <= thick {
                    top
                } else {
                    0.0
                }
            })
        }
    }
}

/// A stain of a few to a few dozen pixels at an arbitrary spurious depth.
pub fn artifact<R: Rng + ?Sized>(rng: &mut R, pitch: f32, floor: f32) -> Result<DepthMap> {
    const SIDE: usize = 17;
    let target = rng.random_range(3..=60usize);
    let base = rng.random_range(0.8..(floor as f64 - 0.5));
    let mut cells = vec![false; SIDE * SIDE];
    let (mut x, mut y) = (SIDE / 2, SIDE / 2);
    let mut filled = 0;
    while filled < target {
        if !cells[y * SIDE + x] {
            cells[y * SIDE + x] = true;
            filled += 1;
        }
        match rng.random_range(0..4) {
            0 if x + 1 < SIDE => x += 1,
            1 if x > 0 => x -= 1,
            2 if y + 1 < SIDE => y += 1,
            3 if y > 0 => y -= 1,
            _ => {}
        }
    }
    let depths: Vec<f32> = cells
        .iter()
        .map(|&on| {
            if on {
                (base + rng.random_range(-0.3..0.3)).clamp(0.2, floor as f64 - 0.05) as f32
            } else {
                floor
            }
        })
        .collect();
    Ok(DepthMap::from_depths(SIDE, SIDE, pitch, floor, depths)?.tighten()?.0)
}

/// Adds procedural patches to `lib`, reproducibly for a given seed.
pub fn fill_library(
    lib: &mut PatchLibrary,
    counts: LibraryCounts,
    seed: u64,
    pitch: f32,
    floor: f32,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let add = |lib: &mut PatchLibrary, map: DepthMap, cat: PatchCategory, i: usize| {
        let prov = Provenance {
            source_frame: Some(format!("procedural:{seed}:{cat}:{i}")),
            source_rect: None,
        };
        lib.add_patch(&map, cat, prov).map(|_| ())
    };
    for i in 0..counts.pedestrians {
        let m = pedestrian(&mut rng, pitch, floor)?;
        add(lib, m, PatchCategory::Pedestrian, i)?;
    }
    for i in 0..counts.objects {
        let m = object(&mut rng, pitch, floor)?;
        add(lib, m, PatchCategory::Object, i)?;
    }
    for i in 0..counts.artifacts {
        let m = artifact(&mut rng, pitch, floor)?;
        add(lib, m, PatchCategory::NoiseArtifact, i)?;
    }
    Ok(())
}

/// In-memory library of procedural patches.
pub fn synthetic_library(counts: LibraryCounts, seed: u64, pitch: f32, floor: f32) -> Result<PatchLibrary> {
    let mut lib = PatchLibrary::in_memory();
    fill_library(&mut lib, counts, seed, pitch, floor)?;
    Ok(lib)
}
