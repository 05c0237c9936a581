//! Synthetic abdomens with exact ground truth.
//!
//! Each axial slice is a set of concentric ellipses centred in the grid:
//!
//! ```text
//!   air | SFA ring (fat) | muscle ring | visceral fat layer | core (soft tissue + fat blobs)
//! ```
//!
//! Slices outside the abdomen range taper: radii drop and keep shrinking
//! with distance, and the SFA ring is absent. Masks are computed from the
//! same pixel-centre tests as the intensities and never see the noise.

mod corpus;

pub use corpus::{
    corpus_specs, generate_corpus, read_manifest, CaseFamily, CorpusJitter, Manifest,
    ManifestCase, MANIFEST_VERSION,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::LocLabel;
use crate::seg::{LabelMask, MaskStack, Tissue};
use crate::volume::{Dims, Spacing, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuValues {
    pub air: f64,
    pub fat: f64,
    pub muscle: f64,
    pub visceral: f64,
}

impl Default for HuValues {
    fn default() -> Self {
        HuValues {
            air: -1000.0,
            fat: -100.0,
            muscle: 50.0,
            visceral: 30.0,
        }
    }
}

/// How slices outside the abdomen differ from those inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Taper {
    /// Radii scale by `step` at the boundary, then shrink by `per_mm` for
    /// every mm further away, never below `min_scale`. No SFA ring.
    Shrink { step: f64, per_mm: f64, min_scale: f64 },
    /// Same layers everywhere; the two in-plane radii are swapped outside
    /// the range. Ring areas are unchanged, so per-slice intensity
    /// statistics carry (almost) no information about the boundary.
    SwapAxes,
}

impl Default for Taper {
    fn default() -> Self {
        Taper::Shrink {
            step: 0.8,
            per_mm: 0.002,
            min_scale: 0.5,
        }
    }
}

/// A circular fat blob in the visceral core, in mm from the slice centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub y_mm: f64,
    pub x_mm: f64,
    pub radius_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    pub abdomen_start: usize,
    pub abdomen_end: usize,
    /// Outer body semi-axes (row direction, column direction) in mm inside
    /// the abdomen range.
    pub body_radii_mm: (f64, f64),
    pub taper: Taper,
    pub sfa_thickness_mm: f64,
    pub muscle_thickness_mm: f64,
    pub visceral_fat_thickness_mm: f64,
    pub blob_count: usize,
    pub blob_radius_mm: f64,
    pub hu: HuValues,
    pub noise_sigma_hu: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: Dims::new(64, 96, 96),
            spacing: Spacing {
                sz: 5.0,
                sy: 4.0,
                sx: 4.0,
            },
            abdomen_start: 20,
            abdomen_end: 43,
            body_radii_mm: (130.0, 165.0),
            taper: Taper::default(),
            sfa_thickness_mm: 20.0,
            muscle_thickness_mm: 14.0,
            visceral_fat_thickness_mm: 10.0,
            blob_count: 4,
            blob_radius_mm: 12.0,
            hu: HuValues::default(),
            noise_sigma_hu: 0.0,
            seed: 0,
        }
    }
}

/// Layer geometry of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceGeometry {
    /// Outer body semi-axes (ry, rx) in mm.
    pub body: (f64, f64),
    pub sfa: f64,
    pub muscle: f64,
    pub visceral_fat: f64,
}

impl SliceGeometry {
    /// Semi-axes after peeling `depth_mm` off the outer ellipse.
    pub fn inset(&self, depth_mm: f64) -> (f64, f64) {
        (self.body.0 - depth_mm, self.body.1 - depth_mm)
    }

    pub fn core(&self) -> (f64, f64) {
        self.inset(self.sfa + self.muscle + self.visceral_fat)
    }
}

#[inline]
pub fn in_ellipse(y: f64, x: f64, r: (f64, f64)) -> bool {
    r.0 > 0.0 && r.1 > 0.0 && (y / r.0).powi(2) + (x / r.1).powi(2) <= 1.0
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.is_empty() {
            return Err(Error::Config(format!("empty phantom grid {:?}", d.as_array())));
        }
        self.spacing.validate()?;
        LocLabel::new(self.abdomen_start, self.abdomen_end, d.depth)
            .map_err(|e| Error::Config(e.to_string()))?;
        for (name, t) in [
            ("sfa_thickness_mm", self.sfa_thickness_mm),
            ("muscle_thickness_mm", self.muscle_thickness_mm),
            ("visceral_fat_thickness_mm", self.visceral_fat_thickness_mm),
        ] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {t}")));
            }
        }
        if !(self.noise_sigma_hu.is_finite() && self.noise_sigma_hu >= 0.0) {
            return Err(Error::Config("noise_sigma_hu must be >= 0".into()));
        }
        if self.blob_count > 0 && !(self.blob_radius_mm > 0.0) {
            return Err(Error::Config("blob_radius_mm must be positive".into()));
        }
        if let Taper::Shrink { step, per_mm, min_scale } = self.taper {
            if !(0.0 < min_scale && min_scale <= step && step <= 1.0 && per_mm >= 0.0) {
                return Err(Error::Config(format!(
                    "taper needs 0 < min_scale <= step <= 1 and per_mm >= 0, got {step}/{per_mm}/{min_scale}"
                )));
            }
        }
        let half_y = d.rows as f64 * self.spacing.sy / 2.0 - self.spacing.sy;
        let half_x = d.cols as f64 * self.spacing.sx / 2.0 - self.spacing.sx;
        let (ry, rx) = self.body_radii_mm;
        if ry > half_y || rx > half_x {
            return Err(Error::Config(format!(
                "body radii ({ry}, {rx}) mm overflow the {:.1} x {:.1} mm field of view",
                2.0 * half_y,
                2.0 * half_x
            )));
        }
        // The thinnest taper slice still needs a non-empty core.
        for k in [0, d.depth - 1, self.abdomen_start, self.abdomen_end] {
            let g = self.geometry(k);
            let c = g.core();
            if c.0.min(c.1) < 2.0 * self.spacing.sy.max(self.spacing.sx) {
                return Err(Error::Config(format!(
                    "layers ({} + {} + {} mm) leave no core inside radii {:?} at slice {k}",
                    g.sfa, g.muscle, g.visceral_fat, g.body
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> LocLabel {
        LocLabel {
            start: self.abdomen_start,
            end: self.abdomen_end,
        }
    }

    pub fn in_abdomen(&self, k: usize) -> bool {
        (self.abdomen_start..=self.abdomen_end).contains(&k)
    }

    pub fn geometry(&self, k: usize) -> SliceGeometry {
        let (ry, rx) = self.body_radii_mm;
        let inside = SliceGeometry {
            body: (ry, rx),
            sfa: self.sfa_thickness_mm,
            muscle: self.muscle_thickness_mm,
            visceral_fat: self.visceral_fat_thickness_mm,
        };
        if self.in_abdomen(k) {
            return inside;
        }
        match self.taper {
            Taper::SwapAxes => SliceGeometry {
                body: (rx, ry),
                ..inside
            },
            Taper::Shrink { step, per_mm, min_scale } => {
                let gap = if k < self.abdomen_start {
                    self.abdomen_start - k
                } else {
                    k - self.abdomen_end
                };
                let dist = (gap - 1) as f64 * self.spacing.sz;
                let scale = (step - per_mm * dist).max(min_scale);
                // the SFA ring is gone, so the outer radius is measured
                // from the muscle ring
                let inner = (ry - self.sfa_thickness_mm, rx - self.sfa_thickness_mm);
                SliceGeometry {
                    body: (inner.0 * scale, inner.1 * scale),
                    sfa: 0.0,
                    ..inside
                }
            }
        }
    }

    /// Physical position (y, x) of a pixel centre relative to the slice centre.
    pub fn pixel_mm(&self, r: usize, c: usize) -> (f64, f64) {
        (
            (r as f64 + 0.5 - self.dims.rows as f64 / 2.0) * self.spacing.sy,
            (c as f64 + 0.5 - self.dims.cols as f64 / 2.0) * self.spacing.sx,
        )
    }

    /// Blob positions, fixed per seed and shared by all slices. Blobs that
    /// do not fit inside a slice's core are omitted on that slice.
    pub fn blobs(&self) -> Vec<Blob> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xb10b);
        let core = self.geometry(self.abdomen_start).core();
        (0..self.blob_count)
            .map(|i| {
                let angle = std::f64::consts::TAU * (i as f64 + rng.random::<f64>() * 0.5)
                    / self.blob_count as f64;
                let frac = 0.2 + 0.3 * rng.random::<f64>();
                Blob {
                    y_mm: angle.sin() * frac * core.0,
                    x_mm: angle.cos() * frac * core.1,
                    radius_mm: self.blob_radius_mm,
                }
            })
            .collect()
    }

    /// Ground-truth class of a point on slice `k`.
    pub fn classify(&self, k: usize, y: f64, x: f64, blobs: &[Blob]) -> Tissue {
        let g = self.geometry(k);
        if !in_ellipse(y, x, g.body) {
            return Tissue::Background;
        }
        if !in_ellipse(y, x, g.inset(g.sfa)) {
            return Tissue::Sfa;
        }
        if !in_ellipse(y, x, g.inset(g.sfa + g.muscle)) {
            return Tissue::Muscle;
        }
        let core = g.core();
        if !in_ellipse(y, x, core) {
            return Tissue::Vfa;
        }
        for b in blobs {
            let fits = in_ellipse(b.y_mm, b.x_mm, (core.0 - b.radius_mm, core.1 - b.radius_mm));
            if fits && (y - b.y_mm).powi(2) + (x - b.x_mm).powi(2) <= b.radius_mm * b.radius_mm {
                return Tissue::Vfa;
            }
        }
        Tissue::Background
    }

    fn hu_of(&self, k: usize, y: f64, x: f64, blobs: &[Blob]) -> f64 {
        let g = self.geometry(k);
        if !in_ellipse(y, x, g.body) {
            return self.hu.air;
        }
        match self.classify(k, y, x, blobs) {
            Tissue::Muscle => self.hu.muscle,
            Tissue::Sfa | Tissue::Vfa => self.hu.fat,
            Tissue::Background => self.hu.visceral,
        }
    }
}

/// A generated case.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub volume: Volume,
    pub label: LocLabel,
    pub masks: Vec<LabelMask>,
}

impl Phantom {
    pub fn mask_stack(&self) -> MaskStack {
        MaskStack::from_slices(&self.masks).expect("phantom masks share dims")
    }
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let d = spec.dims;
    let blobs = spec.blobs();
    let mut voxels = Vec::with_capacity(d.len());
    let mut masks = Vec::with_capacity(d.depth);
    for k in 0..d.depth {
        let mut labels = Vec::with_capacity(d.slice_len());
        for r in 0..d.rows {
            for c in 0..d.cols {
                let (y, x) = spec.pixel_mm(r, c);
                labels.push(spec.classify(k, y, x, &blobs) as u8);
                voxels.push(spec.hu_of(k, y, x, &blobs));
            }
        }
        masks.push(LabelMask::new(d.rows, d.cols, labels)?);
    }
    if spec.noise_sigma_hu > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma_hu)
            .map_err(|e| Error::Config(format!("noise: {e}")))?;
        for v in &mut voxels {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(Phantom {
        volume: Volume::from_hu(d, spec.spacing, voxels)?,
        label: spec.label(),
        masks,
    })
}

/// Analytic area in mm² of the SFA ring on slice `k`.
pub fn analytic_sfa_area_mm2(spec: &PhantomSpec, k: usize) -> f64 {
    let g = spec.geometry(k);
    let inner = g.inset(g.sfa);
    std::f64::consts::PI * (g.body.0 * g.body.1 - inner.0 * inner.1)
}

/// Ramanujan's approximation to an ellipse perimeter.
pub fn ellipse_perimeter(a: f64, b: f64) -> f64 {
    let h = ((a - b) / (a + b)).powi(2);
    std::f64::consts::PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
}
