//! Depth rasters and the min-composition algebra used to build scenes.
//!
//! A [`DepthMap`] stores distances from the sensor plane in meters. The floor
//! depth is both the background value and the identity of [`DepthMap::compose_min`]:
//! every pixel satisfies `0 < d <= floor_depth`, so taking the pointwise minimum
//! with an all-floor map changes nothing. Translations clip content that leaves
//! the frame and fill uncovered pixels with the floor.

mod axonometric;
mod io;

use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use axonometric::{AxonometricGrid, Intrinsics};
pub use io::{DFM_HEADER_LEN, DFM_MAGIC};

/// Sensor mounting height above the floor used for synthetic scenes.
pub const DEFAULT_FLOOR_DEPTH: f32 = 4.0;

/// Integer pixel offset applied to a depth map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Translation {
    pub dx: i64,
    pub dy: i64,
}

impl Translation {
    pub const fn new(dx: i64, dy: i64) -> Self {
        Self { dx, dy }
    }
}

impl Add for Translation {
    type Output = Translation;

    fn add(self, rhs: Translation) -> Translation {
        Translation::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

/// Axis-aligned pixel rectangle, `x..x+w` by `y..y+h`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }
}

/// Dense row-major raster of depths in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    pixel_pitch: f32,
    floor_depth: f32,
    depths: Vec<f32>,
}

fn check_geometry(width: usize, height: usize, pixel_pitch: f32, floor_depth: f32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("dimensions must be positive, got {width}x{height}")));
    }
    if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
        return Err(invalid(format!("pixel pitch must be positive, got {pixel_pitch}")));
    }
    if !(floor_depth > 0.0 && floor_depth.is_finite()) {
        return Err(invalid(format!("floor depth must be positive, got {floor_depth}")));
    }
    Ok(())
}

impl DepthMap {
    /// An empty scene: every pixel at the floor.
    pub fn new_background(
        width: usize,
        height: usize,
        pixel_pitch: f32,
        floor_depth: f32,
    ) -> Result<Self> {
        check_geometry(width, height, pixel_pitch, floor_depth)?;
        Ok(Self {
            width,
            height,
            pixel_pitch,
            floor_depth,
            depths: vec![floor_depth; width * height],
        })
    }

    /// Wraps a raster, validating the range invariant on every pixel.
    pub fn from_depths(
        width: usize,
        height: usize,
        pixel_pitch: f32,
        floor_depth: f32,
        depths: Vec<f32>,
    ) -> Result<Self> {
        check_geometry(width, height, pixel_pitch, floor_depth)?;
        if depths.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} depths for a {width}x{height} raster",
                depths.len()
            )));
        }
        if let Some(i) = depths.iter().position(|&d| !(d > 0.0 && d <= floor_depth)) {
            return Err(Error::DepthOutOfRange {
                x: i % width,
                y: i / width,
                value: depths[i],
                floor: floor_depth,
            });
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
            floor_depth,
            depths,
        })
    }

    /// Builds a map by evaluating `f(x, y)` per pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        pixel_pitch: f32,
        floor_depth: f32,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut depths = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                depths.push(f(x, y));
            }
        }
        Self::from_depths(width, height, pixel_pitch, floor_depth, depths)
    }

    /// Same geometry, new pixels. Callers guarantee the range invariant.
    pub(crate) fn with_depths_unchecked(&self, depths: Vec<f32>) -> Self {
        debug_assert_eq!(depths.len(), self.depths.len());
        debug_assert!(depths.iter().all(|&d| d > 0.0 && d <= self.floor_depth));
        Self {
            depths,
            ..self.geometry_clone()
        }
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        pixel_pitch: f32,
        floor_depth: f32,
        depths: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(depths.len(), width * height);
        Self {
            width,
            height,
            pixel_pitch,
            floor_depth,
            depths,
        }
    }

    fn geometry_clone(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixel_pitch: self.pixel_pitch,
            floor_depth: self.floor_depth,
            depths: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch(&self) -> f32 {
        self.pixel_pitch
    }

    pub fn floor_depth(&self) -> f32 {
        self.floor_depth
    }

    pub fn depths(&self) -> &[f32] {
        &self.depths
    }

    pub fn into_depths(self) -> Vec<f32> {
        self.depths
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.depths[y * self.width + x]
    }

    #[inline]
    pub fn is_floor_value(&self, d: f32) -> bool {
        d >= self.floor_depth
    }

    /// Number of pixels closer than the floor.
    pub fn foreground_count(&self) -> usize {
        self.depths.iter().filter(|&&d| d < self.floor_depth).count()
    }

    pub fn is_all_floor(&self) -> bool {
        self.depths.iter().all(|&d| d >= self.floor_depth)
    }

    /// Metric extent `(width, height)` in meters.
    pub fn extent_m(&self) -> (f64, f64) {
        (
            self.width as f64 * self.pixel_pitch as f64,
            self.height as f64 * self.pixel_pitch as f64,
        )
    }

    fn same_frame(&self, other: &DepthMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.pixel_pitch != other.pixel_pitch || self.floor_depth != other.floor_depth {
            return Err(Error::ShapeMismatch(format!(
                "pitch/floor {}/{} vs {}/{}",
                self.pixel_pitch, self.floor_depth, other.pixel_pitch, other.floor_depth
            )));
        }
        Ok(())
    }

    /// Rigid shift: output `(x, y)` reads input `(x - dx, y - dy)`, floor when
    /// the source is out of frame.
    pub fn translate(&self, t: Translation) -> DepthMap {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = vec![self.floor_depth; self.depths.len()];
        // Only the overlapping band is copied, one row slice at a time.
        let x_lo = t.dx.clamp(0, w);
        let x_hi = (w + t.dx).clamp(0, w);
        if x_lo < x_hi {
            for y in 0..h {
                let sy = y - t.dy;
                if sy < 0 || sy >= h {
                    continue;
                }
                let dst = (y * w) as usize;
                let src = (sy * w) as usize;
                let (a, b) = (x_lo as usize, x_hi as usize);
                let sa = (x_lo - t.dx) as usize;
                out[dst + a..dst + b].copy_from_slice(&self.depths[src + sa..src + sa + (b - a)]);
            }
        }
        self.with_depths_unchecked(out)
    }

    /// Pointwise minimum of two registered maps.
    pub fn compose_min(&self, other: &DepthMap) -> Result<DepthMap> {
        self.same_frame(other)?;
        let depths = self
            .depths
            .iter()
            .zip(&other.depths)
            .map(|(&a, &b)| a.min(b))
            .collect();
        Ok(self.with_depths_unchecked(depths))
    }

    /// Places `patch` on an all-floor copy of this frame so that patch pixel
    /// `(pw / 2, ph / 2)` lands on `centroid`.
    pub fn embed(&self, patch: &DepthMap, centroid: (usize, usize)) -> Result<DepthMap> {
        let bg = DepthMap::new_background(self.width, self.height, self.pixel_pitch, self.floor_depth)?;
        Ok(bg.paste_patch(patch, centroid)?.0)
    }

    /// Min-composites `patch` so its raster center lands on `centroid`, returning
    /// the new map and the in-frame footprint of the patch raster.
    pub fn paste_patch(
        &self,
        patch: &DepthMap,
        centroid: (usize, usize),
    ) -> Result<(DepthMap, PixelRect)> {
        let mut out = self.clone();
        let rect = out.paste_in_place(patch, centroid)?;
        Ok((out, rect))
    }

    /// In-place variant of [`paste_patch`](Self::paste_patch) for builders that own the canvas.
    pub(crate) fn paste_in_place(
        &mut self,
        patch: &DepthMap,
        centroid: (usize, usize),
    ) -> Result<PixelRect> {
        if patch.pixel_pitch != self.pixel_pitch || patch.floor_depth != self.floor_depth {
            return Err(Error::ShapeMismatch(format!(
                "patch pitch/floor {}/{} vs canvas {}/{}",
                patch.pixel_pitch, patch.floor_depth, self.pixel_pitch, self.floor_depth
            )));
        }
        let (cx, cy) = centroid;
        if cx >= self.width || cy >= self.height {
            return Err(invalid(format!(
                "centroid ({cx}, {cy}) outside {}x{} canvas",
                self.width, self.height
            )));
        }
        let left = cx as i64 - (patch.width / 2) as i64;
        let top = cy as i64 - (patch.height / 2) as i64;
        let x0 = left.max(0);
        let y0 = top.max(0);
        let x1 = (left + patch.width as i64).min(self.width as i64);
        let y1 = (top + patch.height as i64).min(self.height as i64);
        for y in y0..y1 {
            let py = (y - top) as usize;
            let row = &patch.depths[py * patch.width..(py + 1) * patch.width];
            let dst = &mut self.depths[y as usize * self.width..(y as usize + 1) * self.width];
            for x in x0..x1 {
                let d = row[(x - left) as usize];
                let slot = &mut dst[x as usize];
                if d < *slot {
                    *slot = d;
                }
            }
        }
        Ok(PixelRect::new(
            x0 as usize,
            y0 as usize,
            (x1 - x0).max(0) as usize,
            (y1 - y0).max(0) as usize,
        ))
    }

    /// Min-pooling by an integer factor; the pitch grows by the same factor.
    pub fn downsample(&self, factor: usize) -> Result<DepthMap> {
        if factor == 0 {
            return Err(invalid("downsample factor must be positive"));
        }
        if self.width % factor != 0 || self.height % factor != 0 {
            return Err(invalid(format!(
                "factor {factor} does not divide {}x{}",
                self.width, self.height
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (ow, oh) = (self.width / factor, self.height / factor);
        let mut out = vec![self.floor_depth; ow * oh];
        for y in 0..self.height {
            let orow = &mut out[(y / factor) * ow..(y / factor + 1) * ow];
            let row = &self.depths[y * self.width..(y + 1) * self.width];
            for (x, &d) in row.iter().enumerate() {
                let slot = &mut orow[x / factor];
                if d < *slot {
                    *slot = d;
                }
            }
        }
        Ok(DepthMap::from_parts_unchecked(
            ow,
            oh,
            self.pixel_pitch * factor as f32,
            self.floor_depth,
            out,
        ))
    }

    /// Copies out a sub-rectangle, which must lie inside the frame.
    pub fn crop(&self, rect: PixelRect) -> Result<DepthMap> {
        if rect.is_empty() || rect.x + rect.w > self.width || rect.y + rect.h > self.height {
            return Err(invalid(format!(
                "crop {rect:?} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut depths = Vec::with_capacity(rect.w * rect.h);
        for y in rect.y..rect.y + rect.h {
            depths.extend_from_slice(&self.depths[y * self.width + rect.x..y * self.width + rect.x + rect.w]);
        }
        Ok(DepthMap::from_parts_unchecked(
            rect.w,
            rect.h,
            self.pixel_pitch,
            self.floor_depth,
            depths,
        ))
    }

    /// Bounding rectangle of the non-floor pixels, `None` for an all-floor map.
    pub fn foreground_bounds(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) < self.floor_depth {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| PixelRect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Trims all-floor border rows and columns.
    pub fn tighten(&self) -> Result<(DepthMap, PixelRect)> {
        let rect = self.foreground_bounds().ok_or(Error::EmptyPatch)?;
        Ok((self.crop(rect)?, rect))
    }

    /// True when every border row and column holds a non-floor pixel.
    pub fn is_tight(&self) -> bool {
        let fg = |x: usize, y: usize| self.get(x, y) < self.floor_depth;
        let (w, h) = (self.width, self.height);
        (0..w).any(|x| fg(x, 0))
            && (0..w).any(|x| fg(x, h - 1))
            && (0..h).any(|y| fg(0, y))
            && (0..h).any(|y| fg(w - 1, y))
    }
}
