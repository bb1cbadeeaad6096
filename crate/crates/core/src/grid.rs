//! The `S x S` detection grid shared by the generator, the network and the evaluator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Nominal long side of the synthetic scene (meters).
pub const SCENE_LONG_SIDE_M: f64 = 2.9;
/// Nominal short side of the synthetic scene (meters).
pub const SCENE_SHORT_SIDE_M: f64 = 2.2;
/// Network input width after 4x downsampling of a 640x480 frame.
pub const INPUT_WIDTH: usize = 160;
pub const INPUT_HEIGHT: usize = 120;

/// Nominal scene footprint in square meters.
pub fn nominal_scene_area() -> f64 {
    SCENE_LONG_SIDE_M * SCENE_SHORT_SIDE_M
}

/// Geometry of the grid laid over a scene image.
///
/// Cells are `width / s` by `height / s` pixels in continuous coordinates;
/// fractional sizes are allowed. Cell membership uses half-open intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s: usize,
    pub width: usize,
    pub height: usize,
    pub extent_x: f64,
    pub extent_y: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::with_cells(5)
    }
}

impl GridSpec {
    /// Default scene geometry with `s` cells per side: 160x120 pixels with
    /// square pixels spanning 2.9 m horizontally.
    pub fn with_cells(s: usize) -> Self {
        let pitch = SCENE_LONG_SIDE_M / INPUT_WIDTH as f64;
        Self {
            s,
            width: INPUT_WIDTH,
            height: INPUT_HEIGHT,
            extent_x: SCENE_LONG_SIDE_M,
            extent_y: pitch * INPUT_HEIGHT as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(invalid("grid needs at least one cell per side"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("grid image dimensions must be positive"));
        }
        if !(self.extent_x > 0.0 && self.extent_y > 0.0) {
            return Err(invalid("grid metric extent must be positive"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.s * self.s
    }

    /// Cell size in pixels `(w, h)`.
    pub fn cell_px(&self) -> (f64, f64) {
        (self.width as f64 / self.s as f64, self.height as f64 / self.s as f64)
    }

    /// Meters per pixel along each axis.
    pub fn pitch(&self) -> (f64, f64) {
        (self.extent_x / self.width as f64, self.extent_y / self.height as f64)
    }

    /// Row-major cell index holding pixel coordinate `(px, py)`.
    pub fn cell_of_px(&self, px: f64, py: f64) -> Option<usize> {
        if !(px >= 0.0 && py >= 0.0 && px < self.width as f64 && py < self.height as f64) {
            return None;
        }
        let (cw, ch) = self.cell_px();
        let col = ((px / cw) as usize).min(self.s - 1);
        let row = ((py / ch) as usize).min(self.s - 1);
        Some(row * self.s + col)
    }

    /// Cell holding the metric point `(x, y)`.
    pub fn cell_of_m(&self, x: f64, y: f64) -> Option<usize> {
        let (px, py) = self.pitch();
        self.cell_of_px(x / px, y / py)
    }

    /// `(col, row)` of a cell index.
    pub fn cell_pos(&self, cell: usize) -> (usize, usize) {
        (cell % self.s, cell / self.s)
    }

    /// Worst-case spacing between centroids of neighbouring occupied cells:
    /// the long scene side divided by `s`.
    pub fn min_center_distance(&self) -> f64 {
        self.extent_x.max(self.extent_y) / self.s as f64
    }
}

/// Worst-case neighbour spacing, see [`GridSpec::min_center_distance`].
pub fn min_center_distance(grid: &GridSpec) -> f64 {
    grid.min_center_distance()
}

/// Per-cell vector `(x, y, w, h, n, p)`.
///
/// `x, y` locate the box centre relative to the cell (`[0, 1)` inside it),
/// `w, h` are the box size relative to the full image, `p` is the object
/// probability and `n = 1 - p`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellVector {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
    pub n: f32,
    pub p: f32,
}

impl CellVector {
    /// Placeholder for an empty cell.
    pub const EMPTY: CellVector = CellVector {
        x: 0.0,
        y: 0.0,
        w: 0.0,
        h: 0.0,
        n: 1.0,
        p: 0.0,
    };

    pub fn occupied(x: f32, y: f32, w: f32, h: f32) -> Self {
        Self { x, y, w, h, n: 0.0, p: 1.0 }
    }

    pub fn spatial(&self) -> [f32; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Box centre in image pixels for cell `cell` of `grid`.
    pub fn centre_px(&self, grid: &GridSpec, cell: usize) -> (f64, f64) {
        let (col, row) = grid.cell_pos(cell);
        let (cw, ch) = grid.cell_px();
        ((col as f64 + self.x as f64) * cw, (row as f64 + self.y as f64) * ch)
    }

    /// Box size in image pixels.
    pub fn size_px(&self, grid: &GridSpec) -> (f64, f64) {
        (self.w as f64 * grid.width as f64, self.h as f64 * grid.height as f64)
    }
}
