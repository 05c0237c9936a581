//! Segment a phantom with the HU-threshold baseline and score it against
//! the generator's ground truth, clean and with 20 HU of noise.
//!
//! ```text
//! cargo run -p abdkit --release --example segment_phantom
//! ```

use abdkit::metrics::evaluate_segmentation;
use abdkit::phantom::{generate, PhantomSpec};
use abdkit::seg::{segment_slice, segment_range, SegParams, Tissue};
use abdkit::volume::{extract_plane, Dims, Plane, Spacing, Volume};

fn main() -> abdkit::Result<()> {
    let params = SegParams::default();
    for noise in [0.0, 20.0] {
        let spec = PhantomSpec {
            dims: Dims::new(16, 128, 128),
            spacing: Spacing::new(5.0, 2.5, 2.5)?,
            abdomen_start: 4,
            abdomen_end: 11,
            body_radii_mm: (120.0, 145.0),
            noise_sigma_hu: noise,
            seed: 3,
            ..PhantomSpec::default()
        };
        let p = generate(&spec)?;
        let (s, e) = (p.label.start, p.label.end);
        let pred = segment_range(&p.volume, s, e, &params)?;
        let ev = evaluate_segmentation(&pred, &p.masks[s..=e], (spec.spacing.sy, spec.spacing.sx))?;
        println!("noise {noise:>4} HU, slices {s}..={e}");
        for t in Tissue::CLASSES {
            let c = ev.pooled.class(t).unwrap();
            println!(
                "  {:<7} dsc {:.4}  iou {:.4}  hd95 {}",
                t.name(),
                c.dsc,
                c.iou,
                c.hd95_mm.map_or("-".into(), |h| format!("{h:.2} mm"))
            );
        }
    }

    // an all-air slice has nothing to segment and says so
    let air = Volume::filled(Dims::new(1, 64, 64), Spacing::isotropic(2.0)?, -1000.0)?;
    let seg = segment_slice(&extract_plane(&air, Plane::Axial, 0)?, &params)?;
    println!("air slice: {:?}", seg.warning);
    Ok(())
}
