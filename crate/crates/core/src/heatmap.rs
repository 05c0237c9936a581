//! Slice-position heatmaps: encoding start/end indices as probability
//! vectors over the slice axis, decoding predictions back to indices, and
//! the physical endpoint error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and last abdominal slice on some grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocLabel {
    pub start: usize,
    pub end: usize,
}

impl LocLabel {
    pub fn new(start: usize, end: usize, depth: usize) -> Result<Self> {
        if start > end || end >= depth {
            return Err(Error::Range(format!(
                "label {start}..={end} invalid for {depth} slices"
            )));
        }
        Ok(LocLabel { start, end })
    }
}

/// A probability vector over slice indices.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapTarget {
    probs: Vec<f64>,
    sigma: Option<f64>,
}

impl HeatmapTarget {
    /// Wraps a predicted distribution, checking it sums to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("empty heatmap".into()));
        }
        crate::tensor::check_distribution(&probs, "heatmap")?;
        Ok(HeatmapTarget { probs, sigma: None })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }
}

fn check_center(center: usize, len: usize) -> Result<()> {
    if center >= len {
        return Err(Error::Range(format!(
            "heatmap center {center} outside 0..{len}"
        )));
    }
    Ok(())
}

/// Half-width of the Gaussian support, in units of sigma.
pub const GAUSSIAN_SUPPORT_SIGMAS: f64 = 4.0;

/// Gaussian bump at `center`, zero beyond `4 sigma`, renormalized over the
/// `len` available slots.
pub fn encode_gaussian(center: usize, len: usize, sigma: f64) -> Result<HeatmapTarget> {
    check_center(center, len)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Validation(format!("sigma must be positive, got {sigma}")));
    }
    let c = center as f64;
    let mut probs: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - c;
            if d.abs() > GAUSSIAN_SUPPORT_SIGMAS * sigma {
                0.0
            } else {
                (-d * d / (2.0 * sigma * sigma)).exp()
            }
        })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(HeatmapTarget {
        probs,
        sigma: Some(sigma),
    })
}

/// Indicator vector at `center` (the "0-1" target).
pub fn encode_onehot(center: usize, len: usize) -> Result<HeatmapTarget> {
    check_center(center, len)?;
    let mut probs = vec![0.0; len];
    probs[center] = 1.0;
    Ok(HeatmapTarget { probs, sigma: None })
}

/// Training target family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetKind {
    Gaussian { sigma: f64 },
    OneHot,
}

impl TargetKind {
    pub fn encode(&self, center: usize, len: usize) -> Result<HeatmapTarget> {
        match *self {
            TargetKind::Gaussian { sigma } => encode_gaussian(center, len, sigma),
            TargetKind::OneHot => encode_onehot(center, len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Most probable index; ties go to the lowest index.
    #[default]
    Argmax,
    /// Mean index under the distribution.
    Expectation,
}

/// Lowest index attaining the maximum probability.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn decode(h: &HeatmapTarget, mode: DecodeMode) -> f64 {
    decode_probs(&h.probs, mode)
}

pub fn decode_probs(probs: &[f64], mode: DecodeMode) -> f64 {
    match mode {
        DecodeMode::Argmax => argmax(probs) as f64,
        DecodeMode::Expectation => probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum(),
    }
}

/// Endpoint error in mm between a prediction on the resampled grid and the
/// ground truth on the original grid: `|pred * s_res - gt * s_ori|`.
pub fn l1_error_mm(pred: f64, gt: f64, s_res: f64, s_ori: f64) -> f64 {
    (pred * s_res - gt * s_ori).abs()
}

/// Nearest original-grid index for a resampled-grid index.
pub fn to_original_index(pred: f64, s_res: f64, s_ori: f64) -> usize {
    (pred * s_res / s_ori).round().max(0.0) as usize
}

/// Nearest resampled-grid index for an original-grid index.
pub fn to_resampled_index(orig: usize, s_ori: f64, s_res: f64) -> usize {
    (orig as f64 * s_ori / s_res).round().max(0.0) as usize
}
