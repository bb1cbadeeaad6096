//! Patch transforms (dihedral symmetries, pixel speckle, rigid depth shift)
//! and additive scene noise.
//!
//! Every randomized function takes an explicit rng so parallel callers can
//! own independent seeded streams.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{invalid, Error, Result};
use crate::patchlib::Patch;

/// Smallest depth allowed after noise; keeps the map strictly positive.
pub const MIN_DEPTH: f32 = 1e-3;

const SHIFT_MARGIN: f32 = 1e-3;
const MAX_ATTEMPTS: usize = 10;

/// Per-patch augmentation settings. Scene-level noise lives in the synthesis config.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub dihedral_enabled: bool,
    pub dropout_rate: f64,
    pub addition_rate: f64,
    pub depth_shift_range: (f32, f32),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            dihedral_enabled: true,
            dropout_rate: 0.05,
            addition_rate: 0.05,
            depth_shift_range: (-0.15, 0.15),
        }
    }
}

impl AugmentConfig {
    /// No-op configuration.
    pub fn disabled() -> Self {
        Self {
            dihedral_enabled: false,
            dropout_rate: 0.0,
            addition_rate: 0.0,
            depth_shift_range: (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.dropout_rate)?;
        check_rate(self.addition_rate)?;
        let (lo, hi) = self.depth_shift_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(format!("bad depth shift range ({lo}, {hi})")));
        }
        Ok(())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(invalid(format!("rate {rate} outside [0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeckleMode {
    /// Selected foreground pixels drop to the floor.
    Remove,
    /// Selected floor pixels take the median foreground depth.
    Add,
}

/// Element `k` of the dihedral group: `k % 4` clockwise quarter turns, then a
/// horizontal mirror when `k >= 4`.
pub fn dihedral(map: &DepthMap, element: u8) -> Result<DepthMap> {
    if element > 7 {
        return Err(invalid(format!("dihedral element {element} outside 0..=7")));
    }
    let mut cur = map.clone();
    for _ in 0..element % 4 {
        cur = rotate_cw(&cur);
    }
    if element >= 4 {
        cur = mirror(&cur);
    }
    Ok(cur)
}

fn rotate_cw(m: &DepthMap) -> DepthMap {
    let (w, h) = (m.width(), m.height());
    // new raster is h wide and w tall
    let mut out = Vec::with_capacity(w * h);
    for y in 0..w {
        for x in 0..h {
            out.push(m.get(y, h - 1 - x));
        }
    }
    DepthMap::from_parts_unchecked(h, w, m.pixel_pitch(), m.floor_depth(), out)
}

fn mirror(m: &DepthMap) -> DepthMap {
    let w = m.width();
    let mut out = m.depths().to_vec();
    for row in out.chunks_exact_mut(w) {
        row.reverse();
    }
    m.with_depths_unchecked(out)
}

/// Median of the foreground depths (lower median for even counts).
pub fn foreground_median(map: &DepthMap) -> Option<f32> {
    let floor = map.floor_depth();
    let mut fg: Vec<f32> = map.depths().iter().copied().filter(|&d| d < floor).collect();
    if fg.is_empty() {
        return None;
    }
    let mid = (fg.len() - 1) / 2;
    let (_, m, _) = fg.select_nth_unstable_by(mid, f32::total_cmp);
    Some(*m)
}

/// Independently selects each eligible pixel with probability `rate`.
pub fn speckle<R: Rng + ?Sized>(map: &DepthMap, mode: SpeckleMode, rate: f64, rng: &mut R) -> Result<DepthMap> {
    check_rate(rate)?;
    let floor = map.floor_depth();
    let fill = match mode {
        SpeckleMode::Remove => floor,
        SpeckleMode::Add => foreground_median(map).ok_or(Error::EmptyPatch)?,
    };
    if rate == 0.0 {
        return Ok(map.clone());
    }
    let depths = map
        .depths()
        .iter()
        .map(|&d| {
            let eligible = match mode {
                SpeckleMode::Remove => d < floor,
                SpeckleMode::Add => d >= floor,
            };
            if eligible && rng.random_bool(rate) {
                fill
            } else {
                d
            }
        })
        .collect();
    Ok(map.with_depths_unchecked(depths))
}

/// Adds `dz` to every foreground pixel; fails if any would leave `(0, floor)`.
pub fn depth_shift(map: &DepthMap, dz: f32) -> Result<DepthMap> {
    if !dz.is_finite() {
        return Err(invalid(format!("non-finite depth shift {dz}")));
    }
    let floor = map.floor_depth();
    let mut depths = Vec::with_capacity(map.depths().len());
    for (i, &d) in map.depths().iter().enumerate() {
        if d >= floor {
            depths.push(d);
            continue;
        }
        let nd = d + dz;
        if !(nd > 0.0 && nd < floor) {
            return Err(Error::DepthOutOfRange {
                x: i % map.width(),
                y: i / map.width(),
                value: nd,
                floor,
            });
        }
        depths.push(nd);
    }
    Ok(map.with_depths_unchecked(depths))
}

/// I.i.d. `N(0, sigma^2)` on every pixel, clamped to `[MIN_DEPTH, floor]`.
pub fn gaussian_noise<R: Rng + ?Sized>(map: &DepthMap, sigma: f32, rng: &mut R) -> Result<DepthMap> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(map.clone());
    }
    let normal = Normal::new(0.0f32, sigma).map_err(|e| invalid(e.to_string()))?;
    let floor = map.floor_depth();
    let depths = map
        .depths()
        .iter()
        .map(|&d| (d + normal.sample(rng)).clamp(MIN_DEPTH, floor))
        .collect();
    Ok(map.with_depths_unchecked(depths))
}

/// Shift interval that keeps every foreground pixel inside `(0, floor)`.
fn feasible_shift(map: &DepthMap, range: (f32, f32)) -> (f32, f32) {
    let floor = map.floor_depth();
    let (mut dmin, mut dmax) = (f32::INFINITY, f32::NEG_INFINITY);
    for &d in map.depths().iter().filter(|&&d| d < floor) {
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    (
        range.0.max(SHIFT_MARGIN - dmin),
        range.1.min(floor - dmax - SHIFT_MARGIN),
    )
}

/// Random dihedral element, speckle removal and addition, and a depth shift
/// drawn from the configured range (narrowed to what keeps the patch in range),
/// followed by re-tightening.
pub fn random_augment<R: Rng + ?Sized>(patch: &Patch, cfg: &AugmentConfig, rng: &mut R) -> Result<Patch> {
    cfg.validate()?;
    for _ in 0..MAX_ATTEMPTS {
        let element = if cfg.dihedral_enabled { rng.random_range(0..8u8) } else { 0 };
        let mut m = dihedral(&patch.map, element)?;
        if cfg.dropout_rate > 0.0 {
            m = speckle(&m, SpeckleMode::Remove, cfg.dropout_rate, rng)?;
            if m.is_all_floor() {
                continue;
            }
        }
        if cfg.addition_rate > 0.0 {
            m = speckle(&m, SpeckleMode::Add, cfg.addition_rate, rng)?;
        }
        let (lo, hi) = feasible_shift(&m, cfg.depth_shift_range);
        let dz = if lo < hi {
            rng.random_range(lo..hi)
        } else if lo == hi {
            lo
        } else {
            0.0
        };
        if dz != 0.0 {
            m = depth_shift(&m, dz)?;
        }
        let (m, _) = m.tighten()?;
        return Ok(Patch {
            map: m,
            ..patch.clone()
        });
    }
    Err(Error::EmptyPatch)
}
