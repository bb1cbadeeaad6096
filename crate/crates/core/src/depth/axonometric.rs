//! Perspective to top-down orthographic re-projection.
//!
//! The optical axis is assumed vertical, so the depth along the axis is the
//! height below the sensor plane and only the lateral coordinates need to be
//! back-projected.

use serde::{Deserialize, Serialize};

use super::DepthMap;
use crate::error::{invalid, Result};

/// Pinhole intrinsics in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(invalid(format!("focal lengths must be positive: {self:?}")));
        }
        if !(self.cx >= 0.0 && self.cx < width as f64 && self.cy >= 0.0 && self.cy < height as f64) {
            return Err(invalid(format!(
                "principal point ({}, {}) outside {width}x{height}",
                self.cx, self.cy
            )));
        }
        Ok(())
    }
}

/// Output raster layout of an axonometric conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxonometricGrid {
    pub width: usize,
    pub height: usize,
    /// Cell holding the world origin (the back-projected principal point).
    pub origin: (i64, i64),
    pub pitch: f64,
}

impl AxonometricGrid {
    /// Sized to cover the floor-plane footprint of the sensor.
    pub fn for_sensor(map: &DepthMap, k: &Intrinsics, out_pitch: f64) -> Self {
        let floor = map.floor_depth() as f64;
        let sx = floor / (k.fx * out_pitch);
        let sy = floor / (k.fy * out_pitch);
        Self {
            width: ((map.width() as f64 * sx).ceil() as usize).max(1),
            height: ((map.height() as f64 * sy).ceil() as usize).max(1),
            origin: ((k.cx * sx).round() as i64, (k.cy * sy).round() as i64),
            pitch: out_pitch,
        }
    }

    /// Nearest output cell for world coordinates in meters.
    #[inline]
    pub fn cell(&self, wx: f64, wy: f64) -> Option<(usize, usize)> {
        let col = self.origin.0 + (wx / self.pitch).round() as i64;
        let row = self.origin.1 + (wy / self.pitch).round() as i64;
        (col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height)
            .then_some((col as usize, row as usize))
    }
}

impl DepthMap {
    /// Back-projects every foreground pixel and splats it onto a metric grid of
    /// pitch `out_pitch`, keeping the closest depth per cell.
    pub fn to_axonometric(&self, k: &Intrinsics, out_pitch: f64) -> Result<DepthMap> {
        if !(out_pitch > 0.0 && out_pitch.is_finite()) {
            return Err(invalid(format!("output pitch must be positive, got {out_pitch}")));
        }
        k.validate(self.width(), self.height())?;
        let grid = AxonometricGrid::for_sensor(self, k, out_pitch);
        let floor = self.floor_depth();
        let mut out = vec![floor; grid.width * grid.height];
        for v in 0..self.height() {
            for u in 0..self.width() {
                let d = self.get(u, v);
                if d >= floor {
                    continue;
                }
                let wx = (u as f64 - k.cx) * d as f64 / k.fx;
                let wy = (v as f64 - k.cy) * d as f64 / k.fy;
                if let Some((c, r)) = grid.cell(wx, wy) {
                    let slot = &mut out[r * grid.width + c];
                    if d < *slot {
                        *slot = d;
                    }
                }
            }
        }
        Ok(DepthMap::from_parts_unchecked(
            grid.width,
            grid.height,
            out_pitch as f32,
            floor,
            out,
        ))
    }
}
