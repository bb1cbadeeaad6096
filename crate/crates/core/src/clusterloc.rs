//! Clustering baseline: threshold the depth map, sample foreground pixels,
//! group them by complete linkage and keep sufficiently large clusters.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, DEFAULT_FLOOR_DEPTH};
use crate::detection::{Detection, DetectionSource};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Pixels closer than this depth (meters) are foreground.
    pub depth_threshold: f64,
    pub n_samples: usize,
    /// Dendrogram cut height in meters.
    pub cutoff: f64,
    pub min_cluster_size: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self::for_floor(DEFAULT_FLOOR_DEPTH as f64)
    }
}

impl ClusterConfig {
    /// Defaults with the foreground threshold 0.3 m above `floor`.
    pub fn for_floor(floor: f64) -> Self {
        Self {
            depth_threshold: floor - 0.3,
            n_samples: 400,
            cutoff: 0.45,
            min_cluster_size: 5,
            seed: 0,
        }
    }

    pub fn validate(&self, floor_depth: f64) -> Result<()> {
        if !(self.depth_threshold > 0.0 && self.depth_threshold < floor_depth) {
            return Err(invalid(format!(
                "depth threshold {} outside (0, {floor_depth})",
                self.depth_threshold
            )));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(invalid("cutoff must be positive"));
        }
        if self.min_cluster_size == 0 {
            return Err(invalid("min_cluster_size must be at least 1"));
        }
        Ok(())
    }
}

/// `true` where the depth is below the configured threshold.
pub fn foreground_mask(map: &DepthMap, cfg: &ClusterConfig) -> Vec<bool> {
    map.depths().iter().map(|&d| (d as f64) < cfg.depth_threshold).collect()
}

/// Draws `min(n_samples, foreground)` distinct foreground pixels uniformly
/// and returns their centres in meters.
pub fn sample_points<R: Rng + ?Sized>(mask: &[bool], map: &DepthMap, n_samples: usize, rng: &mut R) -> Vec<(f64, f64)> {
    let fg: Vec<usize> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    let k = n_samples.min(fg.len());
    let pitch = map.pixel_pitch() as f64;
    let w = map.width();
    let mut picks: Vec<usize> = index::sample(rng, fg.len(), k).into_vec();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|i| {
            let p = fg[i];
            (((p % w) as f64 + 0.5) * pitch, ((p / w) as f64 + 0.5) * pitch)
        })
        .collect()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Agglomerative clustering under complete linkage, stopped before the first
/// merge whose linkage distance exceeds `cutoff`.
///
/// Each cluster is identified by its smallest point index; equal-distance
/// merges go to the lexicographically smallest pair of identifiers. Clusters
/// are returned sorted by identifier with ascending members.
pub fn complete_linkage(points: &[(f64, f64)], cutoff: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dist(points[i], points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut active: Vec<usize> = (0..n).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let v = d[i * n + j];
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let Some((v, i, j)) = best else { break };
        if v > cutoff {
            break;
        }
        let mut moved = members[j].take().unwrap();
        let target = members[i].as_mut().unwrap();
        target.append(&mut moved);
        target.sort_unstable();
        for &k in &active {
            if k != i && k != j {
                let m = d[k * n + i].max(d[k * n + j]);
                d[k * n + i] = m;
                d[i * n + k] = m;
            }
        }
        active.retain(|&k| k != j);
    }
    members.into_iter().flatten().collect()
}

/// Full baseline pipeline on one depth map. Detections carry confidence 1.
pub fn localize(map: &DepthMap, cfg: &ClusterConfig) -> Result<Vec<Detection>> {
    cfg.validate(map.floor_depth() as f64)?;
    let mask = foreground_mask(map, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = sample_points(&mask, map, cfg.n_samples, &mut rng);
    let pitch = map.pixel_pitch() as f64;
    let dets = complete_linkage(&points, cfg.cutoff)
        .into_iter()
        .filter(|c| c.len() >= cfg.min_cluster_size)
        .map(|c| {
            let n = c.len() as f64;
            let (mut sx, mut sy) = (0.0, 0.0);
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for &i in &c {
                let (x, y) = points[i];
                sx += x;
                sy += y;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
            // sample points are pixel centres; the box spans whole pixels
            Detection {
                cx: sx / n,
                cy: sy / n,
                w: x1 - x0 + pitch,
                h: y1 - y0 + pitch,
                confidence: 1.0,
                source: DetectionSource::Cluster,
            }
        })
        .collect();
    Ok(dets)
}
