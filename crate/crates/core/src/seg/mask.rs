use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{self, Dims, RawImage, Spacing, VoxelData};

/// Tissue label values as stored in mask files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Tissue {
    Background = 0,
    Muscle = 1,
    Sfa = 2,
    Vfa = 3,
}

impl Tissue {
    /// The three foreground classes, in label order.
    pub const CLASSES: [Tissue; 3] = [Tissue::Muscle, Tissue::Sfa, Tissue::Vfa];

    pub fn from_u8(v: u8) -> Option<Tissue> {
        match v {
            0 => Some(Tissue::Background),
            1 => Some(Tissue::Muscle),
            2 => Some(Tissue::Sfa),
            3 => Some(Tissue::Vfa),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::Background => "background",
            Tissue::Muscle => "muscle",
            Tissue::Sfa => "sfa",
            Tissue::Vfa => "vfa",
        }
    }
}

fn check_labels(labels: &[u8]) -> Result<()> {
    let bad: BTreeSet<u8> = labels.iter().copied().filter(|&v| v > 3).collect();
    if !bad.is_empty() {
        return Err(Error::Validation(format!(
            "unknown label values {bad:?} (allowed: 0=background, 1=muscle, 2=SFA, 3=VFA)"
        )));
    }
    Ok(())
}

/// Row-major boolean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        BinaryMask {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        BinaryMask { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        self.zip(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> BinaryMask {
        self.zip(other, |a, b| a && !b)
    }

    fn zip(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        BinaryMask {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Per-pixel tissue labels for one axial slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    rows: usize,
    cols: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(rows: usize, cols: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Validation(format!(
                "mask has {} labels for {rows}x{cols}",
                labels.len()
            )));
        }
        check_labels(&labels)?;
        Ok(LabelMask { rows, cols, labels })
    }

    pub fn background(rows: usize, cols: usize) -> Self {
        LabelMask {
            rows,
            cols,
            labels: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, r: usize, c: usize) -> Tissue {
        Tissue::from_u8(self.labels[r * self.cols + c]).expect("validated label")
    }

    pub fn set(&mut self, r: usize, c: usize, t: Tissue) {
        self.labels[r * self.cols + c] = t as u8;
    }

    pub fn count(&self, t: Tissue) -> usize {
        self.labels.iter().filter(|&&v| v == t as u8).count()
    }

    pub fn binary(&self, t: Tissue) -> BinaryMask {
        BinaryMask {
            rows: self.rows,
            cols: self.cols,
            data: self.labels.iter().map(|&v| v == t as u8).collect(),
        }
    }

    /// Writes `t` wherever `m` is set.
    pub fn paint(&mut self, m: &BinaryMask, t: Tissue) {
        for (l, &b) in self.labels.iter_mut().zip(&m.data) {
            if b {
                *l = t as u8;
            }
        }
    }
}

/// Label volume aligned with a CT volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskStack {
    dims: Dims,
    labels: Vec<u8>,
}

impl MaskStack {
    pub fn background(dims: Dims) -> Self {
        MaskStack {
            dims,
            labels: vec![0; dims.len()],
        }
    }

    pub fn new(dims: Dims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::Validation(format!(
                "mask stack has {} labels for dims {dims:?}",
                labels.len()
            )));
        }
        check_labels(&labels)?;
        Ok(MaskStack { dims, labels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn slice(&self, k: usize) -> Result<LabelMask> {
        if k >= self.dims.depth {
            return Err(Error::Range(format!(
                "mask slice {k} outside 0..{}",
                self.dims.depth
            )));
        }
        let n = self.dims.slice_len();
        Ok(LabelMask {
            rows: self.dims.rows,
            cols: self.dims.cols,
            labels: self.labels[k * n..(k + 1) * n].to_vec(),
        })
    }

    pub fn slices(&self, start: usize, end: usize) -> Result<Vec<LabelMask>> {
        (start..=end).map(|k| self.slice(k)).collect()
    }

    pub fn set_slice(&mut self, k: usize, m: &LabelMask) -> Result<()> {
        if k >= self.dims.depth || m.dims() != (self.dims.rows, self.dims.cols) {
            return Err(Error::Validation(format!(
                "cannot place {:?} mask at slice {k} of {:?}",
                m.dims(),
                self.dims
            )));
        }
        let n = self.dims.slice_len();
        self.labels[k * n..(k + 1) * n].copy_from_slice(&m.labels);
        Ok(())
    }

    /// Label image of the cut through `plane` at `index`, in the same layout
    /// as [`volume::extract_plane`].
    pub fn plane(&self, plane: volume::Plane, index: usize) -> Result<(usize, usize, Vec<u8>)> {
        let d = self.dims;
        let count = volume::plane_count(d, plane);
        if index >= count {
            return Err(Error::Range(format!(
                "{plane:?} index {index} out of range 0..{count}"
            )));
        }
        Ok(match plane {
            volume::Plane::Axial => {
                let n = d.slice_len();
                (d.rows, d.cols, self.labels[index * n..(index + 1) * n].to_vec())
            }
            volume::Plane::Coronal => {
                let mut out = Vec::with_capacity(d.depth * d.cols);
                for z in 0..d.depth {
                    let s = d.index(z, index, 0);
                    out.extend_from_slice(&self.labels[s..s + d.cols]);
                }
                (d.depth, d.cols, out)
            }
            volume::Plane::Sagittal => {
                let mut out = Vec::with_capacity(d.depth * d.rows);
                for z in 0..d.depth {
                    for h in 0..d.rows {
                        out.push(self.labels[d.index(z, h, index)]);
                    }
                }
                (d.depth, d.rows, out)
            }
        })
    }

    pub fn from_slices(masks: &[LabelMask]) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::Validation("no masks".into()))?;
        let dims = Dims::new(masks.len(), first.rows, first.cols);
        let mut stack = MaskStack::background(dims);
        for (k, m) in masks.iter().enumerate() {
            stack.set_slice(k, m)?;
        }
        Ok(stack)
    }

    /// Writes a uint8 RAWV file, or NIfTI-1 when the extension is `.nii`.
    pub fn save(&self, path: impl AsRef<Path>, spacing: Spacing) -> Result<()> {
        let path = path.as_ref();
        let img = RawImage {
            dims: self.dims,
            spacing,
            data: VoxelData::Uint8(self.labels.clone()),
        };
        if path.extension().is_some_and(|e| e == "nii") {
            volume::save_nifti(path, &img)
        } else {
            volume::save_rawv(path, &img)
        }
    }

    /// Reads a uint8 label file and checks its dims and label alphabet.
    pub fn load(path: impl AsRef<Path>, expected: Option<Dims>) -> Result<Self> {
        let img = volume::load_image(path)?;
        let VoxelData::Uint8(labels) = img.data else {
            return Err(Error::Validation(format!(
                "mask files must be uint8, got {:?}",
                img.data.voxel_type()
            )));
        };
        if let Some(exp) = expected {
            if exp != img.dims {
                return Err(Error::Validation(format!(
                    "mask dims {:?} do not match expected {:?}",
                    img.dims.as_array(),
                    exp.as_array()
                )));
            }
        }
        MaskStack::new(img.dims, labels)
    }
}

/// Reads a single-slice label file produced by an external segmenter.
pub fn ingest_mask(path: impl AsRef<Path>, expected: (usize, usize)) -> Result<LabelMask> {
    let stack = MaskStack::load(path, None)?;
    let d = stack.dims();
    if d.depth != 1 || (d.rows, d.cols) != expected {
        return Err(Error::Validation(format!(
            "mask dims {}x{}x{} do not match expected 1x{}x{}",
            d.depth, d.rows, d.cols, expected.0, expected.1
        )));
    }
    stack.slice(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, dims: Dims, labels: Vec<u8>) -> std::path::PathBuf {
        let p = dir.join(name);
        volume::save_rawv(
            &p,
            &RawImage {
                dims,
                spacing: Spacing::isotropic(1.0).unwrap(),
                data: VoxelData::Uint8(labels),
            },
        )
        .unwrap();
        p
    }

    #[test]
    fn ingest_accepts_valid_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "ok.rawv", Dims::new(1, 2, 2), vec![0, 1, 2, 3]);
        let m = ingest_mask(&p, (2, 2)).unwrap();
        assert_eq!(m.get(1, 1), Tissue::Vfa);
    }

    #[test]
    fn ingest_names_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.rawv", Dims::new(1, 2, 2), vec![0, 7, 2, 3]);
        let err = ingest_mask(&p, (2, 2)).unwrap_err().to_string();
        assert!(err.contains('7'), "{err}");
    }

    #[test]
    fn ingest_checks_dims() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "big.rawv", Dims::new(1, 512, 512), vec![0; 512 * 512]);
        assert!(matches!(ingest_mask(&p, (256, 256)), Err(Error::Validation(_))));
    }

    #[test]
    fn ingest_rejects_non_uint8() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i16.rawv");
        volume::save_rawv(
            &p,
            &RawImage {
                dims: Dims::new(1, 1, 2),
                spacing: Spacing::isotropic(1.0).unwrap(),
                data: VoxelData::Int16(vec![0, 1]),
            },
        )
        .unwrap();
        assert!(ingest_mask(&p, (1, 2)).is_err());
    }

    #[test]
    fn stack_nifti_round_trip_and_planes() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(3, 2, 4);
        let labels: Vec<u8> = (0..dims.len()).map(|i| (i % 4) as u8).collect();
        let s = MaskStack::new(dims, labels).unwrap();
        let p = dir.path().join("m.nii");
        s.save(&p, Spacing::new(2.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(MaskStack::load(&p, Some(dims)).unwrap(), s);
        assert!(MaskStack::load(&p, Some(Dims::new(3, 4, 2))).is_err());

        let (r, c, cor) = s.plane(volume::Plane::Coronal, 1).unwrap();
        assert_eq!((r, c), (3, 4));
        assert_eq!(cor[4 + 2], s.labels()[dims.index(1, 1, 2)]);
        let (r, c, sag) = s.plane(volume::Plane::Sagittal, 3).unwrap();
        assert_eq!((r, c), (3, 2));
        assert_eq!(sag[2 * 2 + 1], s.labels()[dims.index(2, 1, 3)]);
        assert!(s.plane(volume::Plane::Axial, 3).is_err());
    }
}
