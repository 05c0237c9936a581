//! PNG encodings of CT planes and label planes.

use abdkit::seg::MaskStack;
use abdkit::volume::{extract_plane, Plane, Volume, WindowSpec};

/// RGB per label: background black, muscle red, SFA yellow, VFA blue.
pub const PALETTE: [[u8; 3]; 4] = [[0, 0, 0], [255, 0, 0], [255, 255, 0], [0, 0, 255]];

fn encode(width: usize, height: usize, data: &[u8], indexed: bool) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_depth(png::BitDepth::Eight);
        if indexed {
            enc.set_color(png::ColorType::Indexed);
            enc.set_palette(PALETTE.concat());
            // background fully transparent for overlays
            enc.set_trns(vec![0u8, 255, 255, 255]);
        } else {
            enc.set_color(png::ColorType::Grayscale);
        }
        let mut w = enc.write_header().expect("in-memory png header");
        w.write_image_data(data).expect("in-memory png data");
    }
    out
}

/// 8-bit grayscale of one plane after windowing.
pub fn slice_png(v: &Volume, plane: Plane, index: usize, window: WindowSpec) -> abdkit::Result<Vec<u8>> {
    let s = extract_plane(v, plane, index)?;
    let px: Vec<u8> = s.pixels.iter().map(|&hu| (window.apply(hu) * 255.0).round() as u8).collect();
    Ok(encode(s.cols, s.rows, &px, false))
}

/// Label plane as `(rows, cols, labels)`; see [`MaskStack::plane`].
pub fn mask_raw(m: &MaskStack, plane: Plane, index: usize) -> abdkit::Result<(usize, usize, Vec<u8>)> {
    m.plane(plane, index)
}

/// Palette-indexed PNG whose pixel values are the labels themselves.
pub fn mask_png(m: &MaskStack, plane: Plane, index: usize) -> abdkit::Result<Vec<u8>> {
    let (rows, cols, labels) = m.plane(plane, index)?;
    Ok(encode(cols, rows, &labels, true))
}
