use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seg::{BinaryMask, LabelMask, Tissue};

fn same_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::Shape(format!(
            "mask dims {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// (|a|, |b|, |a ∩ b|)
fn counts(a: &BinaryMask, b: &BinaryMask) -> (usize, usize, usize) {
    let mut out = (0, 0, 0);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        out.0 += x as usize;
        out.1 += y as usize;
        out.2 += (x && y) as usize;
    }
    out
}

fn dice_from(na: usize, nb: usize, inter: usize) -> f64 {
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

fn iou_from(na: usize, nb: usize, inter: usize) -> f64 {
    let union = na + nb - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Dice coefficient; two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_dims(a, b)?;
    let (na, nb, i) = counts(a, b);
    Ok(dice_from(na, nb, i))
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_dims(a, b)?;
    let (na, nb, i) = counts(a, b);
    Ok(iou_from(na, nb, i))
}

/// Mask pixels with at least one 4-neighbour outside the mask. Pixels on
/// the image edge count as boundary.
pub fn boundary(m: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(m.rows, m.cols, |r, c| {
        m.get(r, c)
            && (r == 0
                || c == 0
                || r + 1 == m.rows
                || c + 1 == m.cols
                || !m.get(r - 1, c)
                || !m.get(r + 1, c)
                || !m.get(r, c - 1)
                || !m.get(r, c + 1))
    })
}

/// Lower envelope of parabolas: `out[q] = min_p (s (q - p))^2 + f[p]`.
fn edt_1d(f: &[f64], s: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let n = f.len();
    let key = |p: usize| f[p] + (p as f64 * s).powi(2);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let Some(&top) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let x = (key(q) - key(top)) / (2.0 * s * s * (q - top) as f64);
            if x <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(x);
                break;
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = (q as f64 - v[k] as f64) * s;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance in mm from every pixel to the nearest set
/// pixel of `feature`; infinite when `feature` is empty.
pub fn squared_distance_map(feature: &BinaryMask, sy: f64, sx: f64) -> Vec<f64> {
    let (rows, cols) = (feature.rows, feature.cols);
    let mut g = vec![0.0; rows * cols];
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut col = vec![0.0; rows];
    let mut colo = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = if feature.get(r, c) { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col, sy, &mut colo, &mut v, &mut z);
        for r in 0..rows {
            g[r * cols + c] = colo[r];
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &g[r * cols..(r + 1) * cols];
        edt_1d(row, sx, &mut out[r * cols..(r + 1) * cols], &mut v, &mut z);
    }
    out
}

/// Distances from each boundary pixel of `a` to the boundary of `b`.
pub fn directed_boundary_distances(a: &BinaryMask, b: &BinaryMask, spacing: (f64, f64)) -> Vec<f64> {
    let ba = boundary(a);
    let dt = squared_distance_map(&boundary(b), spacing.0, spacing.1);
    ba.data
        .iter()
        .zip(&dt)
        .filter(|(&on, _)| on)
        .map(|(_, &d2)| d2.sqrt())
        .collect()
}

/// `ceil(0.95 n)`-th smallest value.
pub fn nearest_rank_95(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = (0.95 * values.len() as f64).ceil() as usize;
    Some(values[rank.max(1) - 1])
}

/// Symmetric 95th-percentile Hausdorff distance between mask boundaries,
/// in mm. `spacing` is (row, column) spacing.
pub fn hd95(a: &BinaryMask, b: &BinaryMask, spacing: (f64, f64)) -> Result<f64> {
    same_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric("hd95 of an empty mask".into()));
    }
    let mut ab = directed_boundary_distances(a, b, spacing);
    let mut ba = directed_boundary_distances(b, a, spacing);
    Ok(nearest_rank_95(&mut ab).unwrap().max(nearest_rank_95(&mut ba).unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub dsc: f64,
    pub iou: f64,
    /// Absent when either mask is empty everywhere it was evaluated.
    pub hd95_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub muscle: ClassScores,
    pub sfa: ClassScores,
    pub vfa: ClassScores,
    pub macro_dsc: f64,
    pub macro_iou: f64,
    pub macro_hd95_mm: Option<f64>,
}

impl SegScores {
    fn from_classes(c: [ClassScores; 3]) -> Self {
        let hd: Vec<f64> = c.iter().filter_map(|s| s.hd95_mm).collect();
        SegScores {
            muscle: c[0],
            sfa: c[1],
            vfa: c[2],
            macro_dsc: c.iter().map(|s| s.dsc).sum::<f64>() / 3.0,
            macro_iou: c.iter().map(|s| s.iou).sum::<f64>() / 3.0,
            macro_hd95_mm: (!hd.is_empty()).then(|| hd.iter().sum::<f64>() / hd.len() as f64),
        }
    }

    pub fn class(&self, t: Tissue) -> Option<&ClassScores> {
        match t {
            Tissue::Muscle => Some(&self.muscle),
            Tissue::Sfa => Some(&self.sfa),
            Tissue::Vfa => Some(&self.vfa),
            Tissue::Background => None,
        }
    }
}

/// Scores over a stack of slices, both averaged per slice and pooled over
/// all pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegEvaluation {
    pub slices: usize,
    pub per_slice_mean: SegScores,
    pub pooled: SegScores,
}

pub fn evaluate_segmentation(
    pred: &[LabelMask],
    gt: &[LabelMask],
    spacing: (f64, f64),
) -> Result<SegEvaluation> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "need equal nonzero slice counts, got {} predicted and {} reference",
            pred.len(),
            gt.len()
        )));
    }
    let mut mean = [ClassScores { dsc: 0.0, iou: 0.0, hd95_mm: None }; 3];
    let mut pooled = mean;
    for (k, t) in Tissue::CLASSES.into_iter().enumerate() {
        let (mut sum_d, mut sum_i) = (0.0, 0.0);
        let (mut hd_sum, mut hd_n) = (0.0, 0usize);
        let (mut na, mut nb, mut ni) = (0, 0, 0);
        let mut dists = Vec::new();
        for (p, g) in pred.iter().zip(gt) {
            let (a, b) = (p.binary(t), g.binary(t));
            same_dims(&a, &b)?;
            let (ca, cb, ci) = counts(&a, &b);
            sum_d += dice_from(ca, cb, ci);
            sum_i += iou_from(ca, cb, ci);
            na += ca;
            nb += cb;
            ni += ci;
            if ca > 0 && cb > 0 {
                let mut ab = directed_boundary_distances(&a, &b, spacing);
                let mut ba = directed_boundary_distances(&b, &a, spacing);
                hd_sum += nearest_rank_95(&mut ab).unwrap().max(nearest_rank_95(&mut ba).unwrap());
                hd_n += 1;
                dists.push((ab, ba));
            }
        }
        let n = pred.len() as f64;
        mean[k] = ClassScores {
            dsc: sum_d / n,
            iou: sum_i / n,
            hd95_mm: (hd_n > 0).then(|| hd_sum / hd_n as f64),
        };
        let hd_pooled = if dists.is_empty() {
            None
        } else {
            let mut ab: Vec<f64> = dists.iter().flat_map(|d| d.0.iter().copied()).collect();
            let mut ba: Vec<f64> = dists.iter().flat_map(|d| d.1.iter().copied()).collect();
            Some(nearest_rank_95(&mut ab).unwrap().max(nearest_rank_95(&mut ba).unwrap()))
        };
        pooled[k] = ClassScores {
            dsc: dice_from(na, nb, ni),
            iou: iou_from(na, nb, ni),
            hd95_mm: hd_pooled,
        };
    }
    Ok(SegEvaluation {
        slices: pred.len(),
        per_slice_mean: SegScores::from_classes(mean),
        pooled: SegScores::from_classes(pooled),
    })
}
