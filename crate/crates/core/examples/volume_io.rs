//! Write a synthetic CT volume as RAWV and NIfTI, read it back, resample it
//! onto a network grid and look at the three planes through its centre.
//!
//! ```text
//! cargo run -p abdkit --example volume_io
//! ```

use abdkit::volume::{
    extract_center_views, extract_plane, load_image, load_volume, resample_trilinear, save_nifti, save_volume,
    window_normalize, Dims, Plane, RawImage, Spacing, VoxelData, Volume, WindowSpec,
};

fn main() -> abdkit::Result<()> {
    let dims = Dims::new(40, 64, 64);
    let spacing = Spacing::new(5.0, 0.8, 0.8)?;
    // a ramp along z: -200 HU at the top, +190 at the bottom
    let voxels: Vec<f64> = (0..dims.len()).map(|i| -200.0 + 10.0 * (i / dims.slice_len()) as f64).collect();
    let v = Volume::from_hu(dims, spacing, voxels)?;

    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let rawv = dir.join("ramp.rawv");
    save_volume(&rawv, &v)?;
    let back = load_volume(&rawv)?;
    println!("rawv round trip exact: {}", back == v);

    // NIfTI with int16 storage
    let nii = dir.join("ramp.nii");
    let ints = v.voxels().iter().map(|&x| x as i16).collect();
    save_nifti(&nii, &RawImage { dims, spacing, data: VoxelData::Int16(ints) })?;
    let img = load_image(&nii)?;
    println!("nifti: dims {:?} spacing {:?}", img.dims.as_array(), img.spacing.as_array());

    let target = Dims::new(128, 32, 32);
    let r = resample_trilinear(&v, target)?;
    println!(
        "resampled {:?} -> {:?}; extent {:?} mm -> {:?} mm",
        dims.as_array(),
        target.as_array(),
        v.extent_mm(),
        r.extent_mm()
    );
    println!("first/last slice HU after resampling: {:.1} / {:.1}", r.get(0, 0, 0), r.get(127, 0, 0));

    let w = window_normalize(&r, WindowSpec::default())?;
    println!("windowed range: [{:.3}, {:.3}]", w.voxels()[0], w.voxels()[w.voxels().len() - 1]);

    let (cor, sag) = extract_center_views(&w)?;
    let ax = extract_plane(&w, Plane::Axial, 64)?;
    println!("coronal {}x{}, sagittal {}x{}, axial {}x{}", cor.rows, cor.cols, sag.rows, sag.cols, ax.rows, ax.cols);
    Ok(())
}

