//! Brush edits on axial mask slices.
//!
//! A stroke paints every pixel whose centre lies within `brush_radius_px`
//! of its polyline. Pixel `(row, col)` has its centre at `y = row, x = col`.

use abdkit::seg::{BinaryMask, MaskStack, Tissue};
use abdkit::volume::Dims;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub label: u8,
    pub brush_radius_px: f64,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditBatch {
    pub base_version: u64,
    pub slice_index: usize,
    pub strokes: Vec<Stroke>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl EditBatch {
    /// Every problem with the batch against a stack of `dims`, or nothing.
    pub fn validate(&self, dims: Dims) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.slice_index >= dims.depth {
            errs.push(FieldError::new(
                "slice_index",
                format!("{} is outside 0..{}", self.slice_index, dims.depth),
            ));
        }
        if self.strokes.is_empty() {
            errs.push(FieldError::new("strokes", "at least one stroke is required"));
        }
        let (max_x, max_y) = (dims.cols as f64 - 1.0, dims.rows as f64 - 1.0);
        for (i, s) in self.strokes.iter().enumerate() {
            let at = |f: &str| format!("strokes[{i}].{f}");
            if Tissue::from_u8(s.label).is_none() {
                errs.push(FieldError::new(at("label"), format!("{} is not one of 0, 1, 2, 3", s.label)));
            }
            if !(s.brush_radius_px.is_finite() && s.brush_radius_px >= 0.0) {
                errs.push(FieldError::new(at("brush_radius_px"), "must be a finite value >= 0"));
            }
            if s.points.is_empty() {
                errs.push(FieldError::new(at("points"), "a stroke needs at least one point"));
            }
            for (j, p) in s.points.iter().enumerate() {
                let ok = p.x.is_finite() && p.y.is_finite() && (0.0..=max_x).contains(&p.x) && (0.0..=max_y).contains(&p.y);
                if !ok {
                    errs.push(FieldError::new(
                        format!("strokes[{i}].points[{j}]"),
                        format!("({}, {}) is outside the {}x{} slice", p.x, p.y, dims.cols, dims.rows),
                    ));
                }
            }
        }
        errs
    }
}

fn dist2_to_segment(px: f64, py: f64, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.x) * dx + (py - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    (px - cx).powi(2) + (py - cy).powi(2)
}

/// Pixels covered by `stroke` on a `rows x cols` slice.
pub fn rasterize(stroke: &Stroke, rows: usize, cols: usize) -> BinaryMask {
    let mut out = BinaryMask::new(rows, cols);
    let r = stroke.brush_radius_px;
    let r2 = r * r;
    let segs: Vec<(Point, Point)> = match stroke.points.len() {
        0 => return out,
        1 => vec![(stroke.points[0], stroke.points[0])],
        _ => stroke.points.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    for (a, b) in segs {
        let lo = |u: f64, v: f64| (u.min(v) - r).floor().max(0.0) as usize;
        let hi = |u: f64, v: f64, n: usize| ((u.max(v) + r).ceil().max(0.0) as usize).min(n - 1);
        for row in lo(a.y, b.y)..=hi(a.y, b.y, rows) {
            for col in lo(a.x, b.x)..=hi(a.x, b.x, cols) {
                if dist2_to_segment(col as f64, row as f64, a, b) <= r2 {
                    out.set(row, col, true);
                }
            }
        }
    }
    out
}

/// Paints the strokes of `batch` in order onto its slice; later strokes
/// overwrite earlier ones. Returns the number of pixels whose label changed.
/// Nothing is modified when the batch is invalid.
pub fn apply_batch(masks: &mut MaskStack, batch: &EditBatch) -> Result<usize, Vec<FieldError>> {
    let errs = batch.validate(masks.dims());
    if !errs.is_empty() {
        return Err(errs);
    }
    let mut slice = masks.slice(batch.slice_index).expect("validated index");
    let before = slice.clone();
    for s in &batch.strokes {
        let t = Tissue::from_u8(s.label).expect("validated label");
        slice.paint(&rasterize(s, slice.rows(), slice.cols()), t);
    }
    let changed = before.labels().iter().zip(slice.labels()).filter(|(a, b)| a != b).count();
    masks.set_slice(batch.slice_index, &slice).expect("same dims");
    Ok(changed)
}
