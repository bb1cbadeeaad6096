//! Per-cell evaluation of localizer output against synthetic ground truth.
//!
//! A cell counts as predicted occupied when a detection above the threshold
//! has its centroid inside it. Frames are bucketed by their true pedestrian
//! count; precision and recall are averaged per frame within a bucket and
//! IoU is averaged over true-positive cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::Detection;
use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::synth::GroundTruthGrid;

/// Axis-aligned box given by centre and size in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxM {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxM {
    pub fn of(d: &Detection) -> Self {
        Self {
            cx: d.cx,
            cy: d.cy,
            w: d.w,
            h: d.h,
        }
    }

    fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub fn iou(a: &BoxM, b: &BoxM) -> Result<f64> {
    for bx in [a, b] {
        if !(bx.w > 0.0 && bx.h > 0.0) {
            return Err(invalid(format!("box {bx:?} has no area")));
        }
    }
    let ix = ((a.cx + a.w / 2.0).min(b.cx + b.w / 2.0) - (a.cx - a.w / 2.0).max(b.cx - b.w / 2.0)).max(0.0);
    let iy = ((a.cy + a.h / 2.0).min(b.cy + b.h / 2.0) - (a.cy - a.h / 2.0).max(b.cy - b.h / 2.0)).max(0.0);
    let inter = ix * iy;
    Ok(inter / (a.area() + b.area() - inter))
}

/// Box of an occupied truth cell, centred on the annotated centroid.
pub fn truth_box(truth: &GroundTruthGrid, cell: usize) -> BoxM {
    let g = &truth.grid;
    let c = truth.cells[cell];
    let (px, py) = c.centre_px(g, cell);
    let (pw, ph) = g.pitch();
    BoxM {
        cx: px * pw,
        cy: py * ph,
        w: c.w as f64 * g.extent_x,
        h: c.h as f64 * g.extent_y,
    }
}

/// Predicted occupancy: the representative detection of each cell, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    pub grid: GridSpec,
    pub cells: Vec<Option<Detection>>,
}

impl CellGrid {
    pub fn occupancy(&self) -> Vec<bool> {
        self.cells.iter().map(Option::is_some).collect()
    }
}

/// Assigns each detection above `threshold` to the cell holding its centroid;
/// the most confident detection represents a cell.
pub fn detections_to_grid(dets: &[Detection], grid: &GridSpec, threshold: f64) -> Result<CellGrid> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    grid.validate()?;
    let mut cells: Vec<Option<Detection>> = vec![None; grid.cell_count()];
    for d in dets {
        let cell = grid
            .cell_of_m(d.cx, d.cy)
            .ok_or_else(|| invalid(format!("detection centroid ({}, {}) outside the scene", d.cx, d.cy)))?;
        if d.confidence <= threshold {
            continue;
        }
        let slot = &mut cells[cell];
        if slot.is_none_or(|cur| d.confidence > cur.confidence) {
            *slot = Some(*d);
        }
    }
    Ok(CellGrid { grid: *grid, cells })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

fn check_grid(pred: &GridSpec, truth: &GroundTruthGrid) -> Result<()> {
    if pred.s != truth.grid.s || truth.cells.len() != pred.cell_count() {
        return Err(Error::ShapeMismatch(format!(
            "predicted grid {} vs truth grid {}",
            pred.s, truth.grid.s
        )));
    }
    Ok(())
}

pub fn confusion(pred: &CellGrid, truth: &GroundTruthGrid) -> Result<ConfusionCounts> {
    check_grid(&pred.grid, truth)?;
    let mut c = ConfusionCounts::default();
    for (p, t) in pred.occupancy().into_iter().zip(truth.occupancy()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `tp / (tp + fp)`, undefined without positive predictions.
pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tp + c.fp;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// `tp / (tp + fn)`, undefined without positive truth.
pub fn recall(c: &ConfusionCounts) -> Option<f64> {
    let d = c.tp + c.fn_;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// Per-frame outcome before aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub pedestrians: usize,
    pub counts: ConfusionCounts,
    /// `(cell, iou)` for every true-positive cell.
    pub tp_ious: Vec<(usize, f64)>,
}

pub fn evaluate_frame(dets: &[Detection], truth: &GroundTruthGrid, grid: &GridSpec, threshold: f64) -> Result<FrameResult> {
    check_grid(grid, truth)?;
    let pred = detections_to_grid(dets, grid, threshold)?;
    let counts = confusion(&pred, truth)?;
    let occ = truth.occupancy();
    let mut tp_ious = Vec::new();
    for (cell, d) in pred.cells.iter().enumerate() {
        if let (Some(d), true) = (d, occ[cell]) {
            tp_ious.push((cell, iou(&BoxM::of(d), &truth_box(truth, cell))?));
        }
    }
    Ok(FrameResult {
        pedestrians: truth.occupied_count(),
        counts,
        tp_ious,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    /// True pedestrian count of the frames in this bucket; `None` for the overall row.
    pub pedestrians: Option<usize>,
    pub n_frames: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_iou: Option<f64>,
    pub counts: ConfusionCounts,
    pub tp_cells: usize,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn aggregate(pedestrians: Option<usize>, frames: &[&FrameResult]) -> BucketStats {
    let mut counts = ConfusionCounts::default();
    for f in frames {
        counts += f.counts;
    }
    BucketStats {
        pedestrians,
        n_frames: frames.len(),
        precision: mean(frames.iter().filter_map(|f| precision(&f.counts))),
        recall: mean(frames.iter().filter_map(|f| recall(&f.counts))),
        mean_iou: mean(frames.iter().flat_map(|f| f.tp_ious.iter().map(|&(_, v)| v))),
        counts,
        tp_cells: frames.iter().map(|f| f.tp_ious.len()).sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    /// Buckets in increasing pedestrian count; only counts that occur are listed.
    pub buckets: Vec<BucketStats>,
    pub overall: BucketStats,
}

impl EvalReport {
    pub fn bucket(&self, pedestrians: usize) -> Option<&BucketStats> {
        self.buckets.iter().find(|b| b.pedestrians == Some(pedestrians))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `bucket,n_frames,precision,recall,mean_iou`; undefined values are empty.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("bucket,n_frames,precision,recall,mean_iou\n");
        for b in self.buckets.iter().chain(std::iter::once(&self.overall)) {
            let name = b.pedestrians.map_or_else(|| "all".to_string(), |n| n.to_string());
            let _ = writeln!(out, "{},{},{},{},{}", name, b.n_frames, f(b.precision), f(b.recall), f(b.mean_iou));
        }
        out
    }
}

/// Builds a report from already evaluated frames.
pub fn report(results: &[FrameResult], threshold: f64) -> EvalReport {
    let mut by_count: BTreeMap<usize, Vec<&FrameResult>> = BTreeMap::new();
    for r in results {
        by_count.entry(r.pedestrians).or_default().push(r);
    }
    let buckets = by_count.iter().map(|(&k, v)| aggregate(Some(k), v)).collect();
    let all: Vec<&FrameResult> = results.iter().collect();
    EvalReport {
        threshold,
        buckets,
        overall: aggregate(None, &all),
    }
}

/// Evaluates `(detections, truth)` pairs on `grid`.
pub fn evaluate(frames: &[(Vec<Detection>, GroundTruthGrid)], grid: &GridSpec, threshold: f64) -> Result<EvalReport> {
    if frames.is_empty() {
        return Err(invalid("no frames to evaluate"));
    }
    let results = frames
        .par_iter()
        .map(|(d, t)| evaluate_frame(d, t, grid, threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(report(&results, threshold))
}

/// Mean IoU of two methods restricted to cells that are true positives for both.
/// Returns `(mean_a, mean_b, shared_cells)`.
pub fn shared_tp_iou(a: &[FrameResult], b: &[FrameResult]) -> Result<(Option<f64>, Option<f64>, usize)> {
    if a.len() != b.len() {
        return Err(invalid("method results cover different frame sets"));
    }
    let (mut sa, mut sb, mut n) = (0.0, 0.0, 0usize);
    for (fa, fb) in a.iter().zip(b) {
        for &(cell, va) in &fa.tp_ious {
            if let Some(&(_, vb)) = fb.tp_ious.iter().find(|&&(c, _)| c == cell) {
                sa += va;
                sb += vb;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Ok((None, None, 0));
    }
    Ok((Some(sa / n as f64), Some(sb / n as f64), n))
}

/// Detections that reproduce the truth exactly: one box per occupied cell.
pub fn truth_detections(truth: &GroundTruthGrid) -> Vec<Detection> {
    truth
        .occupancy()
        .iter()
        .enumerate()
        .filter(|(_, &o)| o)
        .map(|(cell, _)| {
            let b = truth_box(truth, cell);
            Detection {
                cx: b.cx,
                cy: b.cy,
                w: b.w,
                h: b.h,
                confidence: 1.0,
                source: crate::detection::DetectionSource::Cluster,
            }
        })
        .collect()
}
