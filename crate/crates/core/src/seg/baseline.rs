use serde::{Deserialize, Serialize};

use super::mask::{BinaryMask, LabelMask, MaskStack, Tissue};
use super::morphology::{
    close, disk_offsets, fill_holes, flood_from_border, label_components, largest_component,
    remove_small_components, Connectivity,
};
use crate::error::{Error, Result};
use crate::volume::{extract_plane, IntensityDomain, Plane, ViewSlice2D, Volume};

/// Closed HU interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuRange {
    pub lo: f64,
    pub hi: f64,
}

impl HuRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        HuRange { lo, hi }
    }

    #[inline]
    pub fn contains(&self, hu: f64) -> bool {
        hu >= self.lo && hu <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegParams {
    pub fat_range: HuRange,
    pub muscle_range: HuRange,
    pub body_threshold: f64,
    pub closing_radius_mm: f64,
    pub min_component_mm2: f64,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            fat_range: HuRange::new(-190.0, -30.0),
            muscle_range: HuRange::new(-29.0, 150.0),
            body_threshold: -500.0,
            closing_radius_mm: 5.0,
            min_component_mm2: 10.0,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("fat_range", self.fat_range), ("muscle_range", self.muscle_range)] {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(Error::Validation(format!("{name} [{}, {}] is not an interval", r.lo, r.hi)));
            }
        }
        let (f, m) = (self.fat_range, self.muscle_range);
        if f.lo <= m.hi && m.lo <= f.hi {
            return Err(Error::Validation(format!(
                "fat_range [{}, {}] overlaps muscle_range [{}, {}]",
                f.lo, f.hi, m.lo, m.hi
            )));
        }
        if !(self.closing_radius_mm.is_finite() && self.closing_radius_mm > 0.0) {
            return Err(Error::Validation(format!(
                "closing_radius_mm must be positive, got {}",
                self.closing_radius_mm
            )));
        }
        if !(self.min_component_mm2.is_finite() && self.min_component_mm2 >= 0.0) {
            return Err(Error::Validation("min_component_mm2 must be >= 0".into()));
        }
        if !self.body_threshold.is_finite() {
            return Err(Error::Validation("body_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyMask {
    pub mask: BinaryMask,
    /// Set when nothing in the slice exceeds the body threshold.
    pub empty: bool,
}

/// Thresholded body silhouette: largest 8-connected component, holes filled.
pub fn body_mask(slice: &ViewSlice2D, params: &SegParams) -> BodyMask {
    let above = BinaryMask {
        rows: slice.rows,
        cols: slice.cols,
        data: slice.pixels.iter().map(|&v| v > params.body_threshold).collect(),
    };
    if above.is_empty() {
        return BodyMask {
            mask: above,
            empty: true,
        };
    }
    BodyMask {
        mask: fill_holes(&largest_component(&above, Connectivity::Eight)),
        empty: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSegmentation {
    pub mask: LabelMask,
    pub warning: Option<String>,
}

fn min_pixels(params: &SegParams, spacing: (f64, f64)) -> usize {
    (params.min_component_mm2 / (spacing.0 * spacing.1)).ceil() as usize
}

/// Labels one raw HU slice as muscle / SFA / VFA / background.
///
/// Muscle is restricted to the abdominal wall: muscle-range components that
/// touch the region reachable from the image border without crossing
/// muscle-range pixels. Enclosed muscle-range tissue (organs, bowel) is left
/// as background. The wall is closed with a disk of `closing_radius_mm`; fat
/// reachable from the border around that envelope is SFA, the rest VFA.
pub fn segment_slice(slice: &ViewSlice2D, params: &SegParams) -> Result<SliceSegmentation> {
    params.validate()?;
    let (rows, cols) = (slice.rows, slice.cols);
    let body = body_mask(slice, params);
    let mut out = LabelMask::background(rows, cols);
    if body.empty {
        return Ok(SliceSegmentation {
            mask: out,
            warning: Some("no pixel above body threshold".into()),
        });
    }
    let in_body = |pred: &dyn Fn(f64) -> bool| BinaryMask {
        rows,
        cols,
        data: slice
            .pixels
            .iter()
            .zip(&body.mask.data)
            .map(|(&v, &b)| b && pred(v))
            .collect(),
    };
    let min_px = min_pixels(params, slice.in_plane_spacing);
    let muscle_range = remove_small_components(
        &in_body(&|v| params.muscle_range.contains(v)),
        min_px,
        Connectivity::Eight,
    );
    let fat = in_body(&|v| params.fat_range.contains(v));

    let not_muscle = BinaryMask {
        rows,
        cols,
        data: muscle_range.data.iter().map(|&b| !b).collect(),
    };
    let outside = flood_from_border(&not_muscle);
    let (ids, sizes) = label_components(&muscle_range, Connectivity::Eight);
    let mut touches = vec![false; sizes.len()];
    for r in 0..rows {
        for c in 0..cols {
            let id = ids[r * cols + c];
            if id == 0 || touches[id as usize - 1] {
                continue;
            }
            let near = [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                nr < 0
                    || nc < 0
                    || nr as usize >= rows
                    || nc as usize >= cols
                    || outside.get(nr as usize, nc as usize)
            });
            if near {
                touches[id as usize - 1] = true;
            }
        }
    }
    let wall = BinaryMask {
        rows,
        cols,
        data: ids.iter().map(|&i| i != 0 && touches[i as usize - 1]).collect(),
    };

    let (sy, sx) = slice.in_plane_spacing;
    let envelope = close(&wall, &disk_offsets(params.closing_radius_mm, sy, sx));
    let open = BinaryMask {
        rows,
        cols,
        data: envelope.data.iter().map(|&b| !b).collect(),
    };
    let reach = flood_from_border(&open);
    let sfa = remove_small_components(&fat.and(&reach), min_px, Connectivity::Eight);
    let vfa = remove_small_components(&fat.and_not(&reach), min_px, Connectivity::Eight);

    out.paint(&wall, Tissue::Muscle);
    out.paint(&sfa, Tissue::Sfa);
    out.paint(&vfa, Tissue::Vfa);
    let warning = wall.is_empty().then(|| "no abdominal wall found".to_string());
    Ok(SliceSegmentation { mask: out, warning })
}

/// Segments axial slices `start..=end` of a raw HU volume.
pub fn segment_range(v: &Volume, start: usize, end: usize, params: &SegParams) -> Result<Vec<LabelMask>> {
    if v.domain() != IntensityDomain::RawHu {
        return Err(Error::Validation("segmentation needs a raw HU volume".into()));
    }
    if start > end || end >= v.dims().depth {
        return Err(Error::Range(format!(
            "slice range {start}..={end} invalid for {} slices",
            v.dims().depth
        )));
    }
    (start..=end)
        .map(|k| Ok(segment_slice(&extract_plane(v, Plane::Axial, k)?, params)?.mask))
        .collect()
}

/// Full-volume label stack: slices `start..=end` segmented, background elsewhere.
pub fn segment_volume(v: &Volume, start: usize, end: usize, params: &SegParams) -> Result<MaskStack> {
    let masks = segment_range(v, start, end, params)?;
    let mut stack = MaskStack::background(v.dims());
    for (k, m) in masks.iter().enumerate() {
        stack.set_slice(start + k, m)?;
    }
    Ok(stack)
}
