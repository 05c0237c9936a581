//! Volume file formats.
//!
//! RAWV layout:
//!
//! ```text
//! 0..8     magic  b"RAWV\0\0\0\x01"
//! 8..12    header length N, u32 little-endian
//! 12..12+N UTF-8 JSON {"dims":[D,H,W],"spacing":[sz,sy,sx],"dtype":"int16"}
//! ...      voxel payload, little-endian, slice-major
//! ```
//!
//! NIfTI-1 support covers uncompressed single-file little-endian images with
//! uint8, int16 or float32 voxels. Axes are taken as stored: dim1 = columns,
//! dim2 = rows, dim3 = slices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dims, Spacing, Volume};
use crate::error::{Error, Result};

const RAWV_MAGIC: &[u8; 8] = b"RAWV\0\0\0\x01";
const NIFTI_HEADER_LEN: usize = 348;
const NIFTI_VOX_OFFSET: usize = 352;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelType {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl VoxelType {
    fn size(self) -> usize {
        match self {
            VoxelType::Uint8 => 1,
            VoxelType::Int16 => 2,
            VoxelType::Float32 => 4,
            VoxelType::Float64 => 8,
        }
    }

    fn nifti_code(self) -> Option<i16> {
        match self {
            VoxelType::Uint8 => Some(2),
            VoxelType::Int16 => Some(4),
            VoxelType::Float32 => Some(16),
            VoxelType::Float64 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    Uint8(Vec<u8>),
    Int16(Vec<i16>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
}

impl VoxelData {
    pub fn voxel_type(&self) -> VoxelType {
        match self {
            VoxelData::Uint8(_) => VoxelType::Uint8,
            VoxelData::Int16(_) => VoxelType::Int16,
            VoxelData::Float32(_) => VoxelType::Float32,
            VoxelData::Float64(_) => VoxelType::Float64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::Uint8(v) => v.len(),
            VoxelData::Int16(v) => v.len(),
            VoxelData::Float32(v) => v.len(),
            VoxelData::Float64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            VoxelData::Uint8(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Int16(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Float32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::Float64(v) => v.clone(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            VoxelData::Uint8(v) => out.extend_from_slice(v),
            VoxelData::Int16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            VoxelData::Float32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            VoxelData::Float64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(ty: VoxelType, bytes: &[u8]) -> VoxelData {
        match ty {
            VoxelType::Uint8 => VoxelData::Uint8(bytes.to_vec()),
            VoxelType::Int16 => VoxelData::Int16(
                bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            VoxelType::Float32 => VoxelData::Float32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            VoxelType::Float64 => VoxelData::Float64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        }
    }
}

/// A decoded image file before any intensity interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub dims: Dims,
    pub spacing: Spacing,
    pub data: VoxelData,
}

#[derive(Serialize, Deserialize)]
struct RawvHeader {
    dims: [usize; 3],
    spacing: [f64; 3],
    dtype: VoxelType,
}

/// Reads a RAWV or NIfTI-1 file, detected by content.
pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"RAWV") {
        decode_rawv(&bytes)
    } else {
        decode_nifti(&bytes)
    }
}

/// Reads a CT volume in raw HU.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let img = load_image(path)?;
    Volume::from_hu(img.dims, img.spacing, img.data.to_f64())
}

/// Writes a volume as RAWV with float64 voxels, so it reads back bit-exactly.
pub fn save_volume(path: impl AsRef<Path>, v: &Volume) -> Result<()> {
    save_rawv(
        path,
        &RawImage {
            dims: v.dims(),
            spacing: v.spacing(),
            data: VoxelData::Float64(v.voxels().to_vec()),
        },
    )
}

pub fn save_rawv(path: impl AsRef<Path>, img: &RawImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_rawv(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn check_payload_len(img: &RawImage) -> Result<()> {
    if img.data.len() != img.dims.len() {
        return Err(Error::Validation(format!(
            "payload has {} voxels, dims {:?} need {}",
            img.data.len(),
            img.dims,
            img.dims.len()
        )));
    }
    Ok(())
}

fn encode_rawv(img: &RawImage) -> Result<Vec<u8>> {
    check_payload_len(img)?;
    let header = serde_json::to_vec(&RawvHeader {
        dims: img.dims.as_array(),
        spacing: img.spacing.as_array(),
        dtype: img.data.voxel_type(),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + img.dims.len() * 8);
    out.extend_from_slice(RAWV_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    img.data.write_le(&mut out);
    Ok(out)
}

fn decode_rawv(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < 12 || &bytes[..8] != RAWV_MAGIC {
        return Err(Error::Format("bad RAWV magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::Format("RAWV header truncated".into()))?;
    let header: RawvHeader = serde_json::from_slice(body)
        .map_err(|e| Error::Format(format!("RAWV header: {e}")))?;
    let dims = Dims::from(header.dims);
    let spacing = Spacing::new(header.spacing[0], header.spacing[1], header.spacing[2])?;
    let payload = &bytes[12 + hlen..];
    let expected = dims
        .len()
        .checked_mul(header.dtype.size())
        .ok_or_else(|| Error::Format("RAWV dims overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "RAWV payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    Ok(RawImage {
        dims,
        spacing,
        data: VoxelData::read_le(header.dtype, payload),
    })
}

fn le_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn le_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn decode_nifti(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < NIFTI_HEADER_LEN {
        return Err(Error::Format("file too short for a NIfTI-1 header".into()));
    }
    let sizeof_hdr = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if sizeof_hdr != NIFTI_HEADER_LEN as i32 {
        if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == NIFTI_HEADER_LEN as i32 {
            return Err(Error::Unsupported("big-endian NIfTI".into()));
        }
        return Err(Error::Format(format!(
            "unrecognized file (sizeof_hdr = {sizeof_hdr})"
        )));
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::Format(
            "NIfTI magic is not \"n+1\" (only single-file .nii is supported)".into(),
        ));
    }
    let ndim = le_i16(bytes, 40);
    if !(3..=7).contains(&ndim) {
        return Err(Error::Unsupported(format!("NIfTI with {ndim} dimensions")));
    }
    let dim = |i: usize| le_i16(bytes, 40 + 2 * i);
    for i in 4..=ndim as usize {
        if dim(i) > 1 {
            return Err(Error::Unsupported(format!(
                "NIfTI dimension {i} has extent {}",
                dim(i)
            )));
        }
    }
    let (nx, ny, nz) = (dim(1), dim(2), dim(3));
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(Error::Format(format!("NIfTI dims {nx}x{ny}x{nz}")));
    }
    let dims = Dims::new(nz as usize, ny as usize, nx as usize);
    let ty = match le_i16(bytes, 70) {
        2 => VoxelType::Uint8,
        4 => VoxelType::Int16,
        16 => VoxelType::Float32,
        other => return Err(Error::Unsupported(format!("NIfTI datatype {other}"))),
    };
    let pix = |i: usize| le_f32(bytes, 76 + 4 * i) as f64;
    let spacing = Spacing::new(pix(3), pix(2), pix(1))?;
    let vox_offset = le_f32(bytes, 108);
    if !(vox_offset.is_finite() && vox_offset >= NIFTI_HEADER_LEN as f32) {
        return Err(Error::Format(format!("NIfTI vox_offset {vox_offset}")));
    }
    let start = vox_offset as usize;
    let len = dims.len() * ty.size();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| Error::Format("NIfTI voxel payload truncated".into()))?;
    let mut data = VoxelData::read_le(ty, payload);

    let slope = le_f32(bytes, 112);
    let inter = le_f32(bytes, 116);
    if slope != 0.0 && slope.is_finite() && (slope != 1.0 || inter != 0.0) {
        let scaled = data
            .to_f64()
            .into_iter()
            .map(|v| v * slope as f64 + inter as f64)
            .collect();
        data = VoxelData::Float64(scaled);
    }
    Ok(RawImage {
        dims,
        spacing,
        data,
    })
}

/// Writes an uncompressed single-file NIfTI-1 image.
pub fn save_nifti(path: impl AsRef<Path>, img: &RawImage) -> Result<()> {
    let path = path.as_ref();
    check_payload_len(img)?;
    let code = img.data.voxel_type().nifti_code().ok_or_else(|| {
        Error::Unsupported("float64 voxels cannot be written as NIfTI here".into())
    })?;
    for (axis, n) in img.dims.as_array().into_iter().enumerate() {
        if n > i16::MAX as usize {
            return Err(Error::Unsupported(format!(
                "axis {axis} extent {n} exceeds NIfTI-1 limits"
            )));
        }
    }
    let mut h = vec![0u8; NIFTI_VOX_OFFSET];
    h[0..4].copy_from_slice(&(NIFTI_HEADER_LEN as i32).to_le_bytes());
    let dims = [
        3i16,
        img.dims.cols as i16,
        img.dims.rows as i16,
        img.dims.depth as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        h[40 + 2 * i..42 + 2 * i].copy_from_slice(&d.to_le_bytes());
    }
    h[70..72].copy_from_slice(&code.to_le_bytes());
    let bitpix = (img.data.voxel_type().size() * 8) as i16;
    h[72..74].copy_from_slice(&bitpix.to_le_bytes());
    let s = img.spacing;
    let pixdim = [1.0f32, s.sx as f32, s.sy as f32, s.sz as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        h[76 + 4 * i..80 + 4 * i].copy_from_slice(&p.to_le_bytes());
    }
    h[108..112].copy_from_slice(&(NIFTI_VOX_OFFSET as f32).to_le_bytes());
    // xyzt_units: mm
    h[123] = 2;
    h[344..348].copy_from_slice(b"n+1\0");
    img.data.write_le(&mut h);
    std::fs::write(path, h).map_err(|e| Error::io(path, e))
}
