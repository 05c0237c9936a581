//! CT volume model: spacing-aware HU grids, windowing, and plane extraction.
//!
//! Voxels are stored slice-major (`d`, then row `h`, then column `w`), which
//! is also the on-disk order of both supported file formats.

mod io;
mod resample;

pub use io::{
    load_image, load_volume, save_nifti, save_rawv, save_volume, RawImage, VoxelData, VoxelType,
};
pub use resample::resample_trilinear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest HU value accepted on load (air, 12-bit CT).
pub const HU_MIN: f64 = -1024.0;
/// Highest HU value accepted on load.
pub const HU_MAX: f64 = 3071.0;

/// Millimetres per voxel step along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    /// Along the slice axis.
    pub sz: f64,
    /// Along image rows.
    pub sy: f64,
    /// Along image columns.
    pub sx: f64,
}

impl Spacing {
    pub fn new(sz: f64, sy: f64, sx: f64) -> Result<Self> {
        let s = Spacing { sz, sy, sx };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(mm: f64) -> Result<Self> {
        Self::new(mm, mm, mm)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sz", self.sz), ("sy", self.sy), ("sx", self.sx)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "spacing {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sz, self.sy, self.sx]
    }
}

/// Voxel counts: slices, rows, columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub depth: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dims {
    pub const fn new(depth: usize, rows: usize, cols: usize) -> Self {
        Dims { depth, rows, cols }
    }

    pub fn len(&self) -> usize {
        self.depth * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.depth, self.rows, self.cols]
    }

    #[inline]
    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        (d * self.rows + h) * self.cols + w
    }
}

impl From<[usize; 3]> for Dims {
    fn from(a: [usize; 3]) -> Self {
        Dims::new(a[0], a[1], a[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityDomain {
    RawHu,
    NormalizedUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: Spacing,
    voxels: Vec<f64>,
    domain: IntensityDomain,
}

impl Volume {
    /// Builds a raw-HU volume. Values outside the CT range are clamped;
    /// non-finite values are rejected.
    pub fn from_hu(dims: Dims, spacing: Spacing, mut voxels: Vec<f64>) -> Result<Self> {
        Self::check_layout(dims, spacing, &voxels)?;
        for v in voxels.iter_mut() {
            if !v.is_finite() {
                return Err(Error::Validation("non-finite voxel value".into()));
            }
            *v = v.clamp(HU_MIN, HU_MAX);
        }
        Ok(Volume {
            dims,
            spacing,
            voxels,
            domain: IntensityDomain::RawHu,
        })
    }

    /// Builds a volume of values already mapped to `[0, 1]`.
    pub fn from_normalized(dims: Dims, spacing: Spacing, voxels: Vec<f64>) -> Result<Self> {
        Self::check_layout(dims, spacing, &voxels)?;
        if let Some(v) = voxels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "normalized voxel {v} outside [0, 1]"
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            voxels,
            domain: IntensityDomain::NormalizedUnit,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, hu: f64) -> Result<Self> {
        Self::from_hu(dims, spacing, vec![hu; dims.len()])
    }

    fn check_layout(dims: Dims, spacing: Spacing, voxels: &[f64]) -> Result<()> {
        spacing.validate()?;
        if dims.is_empty() {
            return Err(Error::Validation(format!("empty volume dims {dims:?}")));
        }
        if voxels.len() != dims.len() {
            return Err(Error::Validation(format!(
                "voxel count {} does not match dims {:?} ({})",
                voxels.len(),
                dims,
                dims.len()
            )));
        }
        Ok(())
    }

    /// Internal constructor for operations that preserve the value range.
    pub(crate) fn with_domain(
        dims: Dims,
        spacing: Spacing,
        voxels: Vec<f64>,
        domain: IntensityDomain,
    ) -> Self {
        debug_assert_eq!(voxels.len(), dims.len());
        Volume {
            dims,
            spacing,
            voxels,
            domain,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    pub fn domain(&self) -> IntensityDomain {
        self.domain
    }

    pub fn get(&self, d: usize, h: usize, w: usize) -> f64 {
        self.voxels[self.dims.index(d, h, w)]
    }

    /// The `d`-th axial plane as a contiguous row-major slice.
    pub fn axial(&self, d: usize) -> &[f64] {
        let n = self.dims.slice_len();
        &self.voxels[d * n..(d + 1) * n]
    }

    /// Physical length along each axis in mm (`count * spacing`).
    pub fn extent_mm(&self) -> [f64; 3] {
        let d = self.dims;
        let s = self.spacing;
        [
            d.depth as f64 * s.sz,
            d.rows as f64 * s.sy,
            d.cols as f64 * s.sx,
        ]
    }
}

/// Display/normalization window in HU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub level: f64,
    pub width: f64,
}

impl WindowSpec {
    /// Soft-tissue window.
    pub const SOFT_TISSUE: WindowSpec = WindowSpec {
        level: 40.0,
        width: 400.0,
    };

    pub fn new(level: f64, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0 && level.is_finite()) {
            return Err(Error::Validation(format!(
                "window width must be positive, got level={level} width={width}"
            )));
        }
        Ok(WindowSpec { level, width })
    }

    #[inline]
    pub fn apply(&self, hu: f64) -> f64 {
        ((hu - (self.level - self.width / 2.0)) / self.width).clamp(0.0, 1.0)
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::SOFT_TISSUE
    }
}

/// Maps every voxel through the window into `[0, 1]`.
pub fn window_normalize(v: &Volume, w: WindowSpec) -> Result<Volume> {
    if v.domain != IntensityDomain::RawHu {
        return Err(Error::Contract(
            "window_normalize expects a raw HU volume".into(),
        ));
    }
    let voxels = v.voxels.iter().map(|&hu| w.apply(hu)).collect();
    Ok(Volume::with_domain(
        v.dims,
        v.spacing,
        voxels,
        IntensityDomain::NormalizedUnit,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Axial,
    Coronal,
    Sagittal,
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" | "transverse" => Ok(Plane::Axial),
            "coronal" => Ok(Plane::Coronal),
            "sagittal" => Ok(Plane::Sagittal),
            other => Err(Error::Validation(format!("unknown plane {other:?}"))),
        }
    }
}

/// A 2D cut through a volume.
///
/// Axial slices are `rows x cols` = `H x W`; coronal cuts are `D x W`;
/// sagittal cuts are `D x H`. The slice axis runs down the rows of the
/// coronal and sagittal cuts in the same direction as in the volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewSlice2D {
    pub plane: Plane,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    /// (row spacing, column spacing) in mm.
    pub in_plane_spacing: (f64, f64),
}

impl ViewSlice2D {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }
}

/// Number of planes available along the axis normal to `plane`.
pub fn plane_count(dims: Dims, plane: Plane) -> usize {
    match plane {
        Plane::Axial => dims.depth,
        Plane::Coronal => dims.rows,
        Plane::Sagittal => dims.cols,
    }
}

/// Extracts the plane at `index` along the axis normal to `plane`.
pub fn extract_plane(v: &Volume, plane: Plane, index: usize) -> Result<ViewSlice2D> {
    let dims = v.dims;
    let count = plane_count(dims, plane);
    if index >= count {
        return Err(Error::Range(format!(
            "{plane:?} index {index} out of range 0..{count}"
        )));
    }
    let s = v.spacing;
    let slice = match plane {
        Plane::Axial => ViewSlice2D {
            plane,
            rows: dims.rows,
            cols: dims.cols,
            pixels: v.axial(index).to_vec(),
            in_plane_spacing: (s.sy, s.sx),
        },
        Plane::Coronal => {
            let mut pixels = Vec::with_capacity(dims.depth * dims.cols);
            for d in 0..dims.depth {
                let start = dims.index(d, index, 0);
                pixels.extend_from_slice(&v.voxels[start..start + dims.cols]);
            }
            ViewSlice2D {
                plane,
                rows: dims.depth,
                cols: dims.cols,
                pixels,
                in_plane_spacing: (s.sz, s.sx),
            }
        }
        Plane::Sagittal => {
            let mut pixels = Vec::with_capacity(dims.depth * dims.rows);
            for d in 0..dims.depth {
                for h in 0..dims.rows {
                    pixels.push(v.get(d, h, index));
                }
            }
            ViewSlice2D {
                plane,
                rows: dims.depth,
                cols: dims.rows,
                pixels,
                in_plane_spacing: (s.sz, s.sy),
            }
        }
    };
    Ok(slice)
}

/// The coronal plane through row `H/2` and the sagittal plane through
/// column `W/2`.
pub fn extract_center_views(v: &Volume) -> Result<(ViewSlice2D, ViewSlice2D)> {
    if v.domain != IntensityDomain::NormalizedUnit {
        return Err(Error::Contract(
            "center views are taken from a normalized volume".into(),
        ));
    }
    let dims = v.dims;
    let coronal = extract_plane(v, Plane::Coronal, dims.rows / 2)?;
    let sagittal = extract_plane(v, Plane::Sagittal, dims.cols / 2)?;
    Ok((coronal, sagittal))
}

/// Axial slices `start..=end`, in order.
pub fn extract_axial_range(v: &Volume, start: usize, end: usize) -> Result<Vec<ViewSlice2D>> {
    if start > end || end >= v.dims.depth {
        return Err(Error::Range(format!(
            "axial range {start}..={end} invalid for {} slices",
            v.dims.depth
        )));
    }
    (start..=end)
        .map(|k| extract_plane(v, Plane::Axial, k))
        .collect()
}
