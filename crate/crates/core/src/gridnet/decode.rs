use super::model::GridPrediction;
use crate::detection::{Detection, DetectionSource};
use crate::error::{invalid, Result};
use crate::grid::GridSpec;

/// Offsets are pulled this far inside the cell so that the decoded centroid
/// maps back to the cell it came from.
const EDGE_MARGIN: f64 = 1e-4;

/// One detection per cell whose `p` exceeds `threshold`, in cell order.
///
/// The centroid is the cell origin plus the cell-relative offset; box sizes
/// are image-relative and kept at least one pixel wide.
pub fn decode(pred: &GridPrediction, grid: &GridSpec, threshold: f64) -> Result<Vec<Detection>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid(format!("threshold {threshold} outside (0, 1)")));
    }
    grid.validate()?;
    if pred.s != grid.s || pred.cells.len() != grid.cell_count() {
        return Err(invalid(format!("prediction grid {} vs grid spec {}", pred.s, grid.s)));
    }
    let (cw, ch) = grid.cell_px();
    let (px, py) = grid.pitch();
    let mut out = Vec::new();
    for (i, c) in pred.cells.iter().enumerate() {
        if (c.p as f64) <= threshold {
            continue;
        }
        let (col, row) = grid.cell_pos(i);
        let ox = (c.x as f64).clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN);
        let oy = (c.y as f64).clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN);
        let cx = (col as f64 + ox) * cw * px;
        let cy = (row as f64 + oy) * ch * py;
        let w = (c.w as f64 * grid.extent_x).max(px);
        let h = (c.h as f64 * grid.extent_y).max(py);
        out.push(Detection {
            cx,
            cy,
            w,
            h,
            confidence: c.p as f64,
            source: DetectionSource::Cnn,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellVector;

    fn pred_with(cell: usize, p: f32) -> GridPrediction {
        let mut cells = vec![CellVector::EMPTY; 25];
        cells[cell] = CellVector {
            x: 0.5,
            y: 0.5,
            w: 0.1,
            h: 0.2,
            n: 1.0 - p,
            p,
        };
        GridPrediction { s: 5, cells }
    }

    #[test]
    fn centroid_denormalisation() {
        let grid = GridSpec::with_cells(5);
        // column 2, row 3
        let dets = decode(&pred_with(3 * 5 + 2, 0.9), &grid, 0.5).unwrap();
        assert_eq!(dets.len(), 1);
        let (px, py) = grid.pitch();
        assert!((dets[0].cx / px - 80.0).abs() < 1e-9);
        assert!((dets[0].cy / py - 84.0).abs() < 1e-9);
        assert!((dets[0].w - 0.29).abs() < 1e-6);
        assert_eq!(dets[0].confidence, 0.9f32 as f64);
    }

    #[test]
    fn empty_and_thresholds() {
        let grid = GridSpec::with_cells(5);
        let none = GridPrediction {
            s: 5,
            cells: vec![CellVector::EMPTY; 25],
        };
        assert!(decode(&none, &grid, 0.5).unwrap().is_empty());
        let p = pred_with(7, 0.55);
        assert_eq!(decode(&p, &grid, 0.4).unwrap().len(), 1);
        assert!(decode(&p, &grid, 0.6).unwrap().is_empty());
        assert!(decode(&p, &grid, 1.0).is_err());
        assert!(decode(&p, &GridSpec::with_cells(4), 0.5).is_err());
    }
}
