use super::{Dims, Spacing, Volume};
use crate::error::{Error, Result};

/// Lower neighbour, upper neighbour and blend weight for each output sample
/// along one axis. Output cell `i` samples input coordinate
/// `(i + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let max = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Trilinear resampling onto a `target` grid covering the same physical
/// extent. Output spacing per axis is `spacing * in_count / out_count`.
pub fn resample_trilinear(v: &Volume, target: Dims) -> Result<Volume> {
    if target.depth == 0 || target.rows == 0 || target.cols == 0 {
        return Err(Error::Validation(format!(
            "resample target {target:?} must be at least 1 on every axis"
        )));
    }
    let src = v.dims();
    let sp = v.spacing();
    let spacing = Spacing::new(
        sp.sz * src.depth as f64 / target.depth as f64,
        sp.sy * src.rows as f64 / target.rows as f64,
        sp.sx * src.cols as f64 / target.cols as f64,
    )?;
    if src == target {
        return Ok(Volume::with_domain(
            target,
            spacing,
            v.voxels().to_vec(),
            v.domain(),
        ));
    }

    let tz = axis_taps(src.depth, target.depth);
    let ty = axis_taps(src.rows, target.rows);
    let tx = axis_taps(src.cols, target.cols);
    let data = v.voxels();

    // Interpolate along x, then y, then z, reusing the intermediate planes.
    let mut along_x = vec![0.0; src.depth * src.rows * target.cols];
    for zr in 0..src.depth * src.rows {
        let row = &data[zr * src.cols..(zr + 1) * src.cols];
        let out = &mut along_x[zr * target.cols..(zr + 1) * target.cols];
        for (o, &(lo, hi, f)) in out.iter_mut().zip(&tx) {
            *o = row[lo] * (1.0 - f) + row[hi] * f;
        }
    }
    let mut along_y = vec![0.0; src.depth * target.rows * target.cols];
    for z in 0..src.depth {
        for (r, &(lo, hi, f)) in ty.iter().enumerate() {
            let a = (z * src.rows + lo) * target.cols;
            let b = (z * src.rows + hi) * target.cols;
            let o = (z * target.rows + r) * target.cols;
            for c in 0..target.cols {
                along_y[o + c] = along_x[a + c] * (1.0 - f) + along_x[b + c] * f;
            }
        }
    }
    let plane = target.rows * target.cols;
    let mut out = vec![0.0; target.len()];
    for (z, &(lo, hi, f)) in tz.iter().enumerate() {
        let a = &along_y[lo * plane..(lo + 1) * plane];
        let b = &along_y[hi * plane..(hi + 1) * plane];
        for ((o, &p), &q) in out[z * plane..(z + 1) * plane].iter_mut().zip(a).zip(b) {
            *o = p * (1.0 - f) + q * f;
        }
    }
    Ok(Volume::with_domain(target, spacing, out, v.domain()))
}
