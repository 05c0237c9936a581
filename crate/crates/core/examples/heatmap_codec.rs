//! Encode slice indices as 1D heatmaps, decode them again and convert a
//! prediction on the heatmap grid to an error in millimetres.
//!
//! ```text
//! cargo run -p abdkit --example heatmap_codec
//! ```

use abdkit::heatmap::{
    decode, encode_gaussian, encode_onehot, l1_error_mm, to_original_index, to_resampled_index, DecodeMode,
};
use abdkit::locnet::heatmap_spacing;

fn sparkline(p: &[f64]) -> String {
    let max = p.iter().copied().fold(0.0, f64::max);
    p.iter()
        .map(|&x| [' ', '.', ':', '-', '=', '+', '*', '#'][((x / max) * 7.0).round() as usize])
        .collect()
}

fn main() -> abdkit::Result<()> {
    let h = encode_gaussian(20, 48, 2.0)?;
    println!("gaussian  |{}|", sparkline(h.probs()));
    println!("one-hot   |{}|", sparkline(encode_onehot(20, 48)?.probs()));
    println!(
        "decoded: argmax {}  expectation {:.6}",
        decode(&h, DecodeMode::Argmax),
        decode(&h, DecodeMode::Expectation)
    );
    // near the edge the truncated Gaussian is renormalized, so the mean shifts
    let edge = encode_gaussian(1, 48, 2.0)?;
    println!(
        "at the edge: argmax {}  expectation {:.3}",
        decode(&edge, DecodeMode::Argmax),
        decode(&edge, DecodeMode::Expectation)
    );

    // a 57-slice scan at 5 mm mapped onto a 128-bin heatmap
    let (depth, s_ori, len) = (57, 5.0, 128);
    let s_heat = heatmap_spacing(s_ori, depth, len);
    let gt = 30;
    let bin = to_resampled_index(gt, s_ori, s_heat);
    println!("slice {gt} -> bin {bin} (bin width {s_heat:.4} mm) -> slice {}", to_original_index(bin as f64, s_heat, s_ori));
    for pred in [bin as f64, bin as f64 + 2.0, bin as f64 - 5.0] {
        println!("prediction at bin {pred:5.1}: error {:.2} mm", l1_error_mm(pred, gt as f64, s_heat, s_ori));
    }
    Ok(())
}
