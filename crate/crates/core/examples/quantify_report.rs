//! Tissue areas, volumes and mean HU over a localized range, exported as CSV
//! and JSON, with the SFA area checked against the phantom's analytic ring.
//!
//! ```text
//! cargo run -p abdkit --release --example quantify_report
//! ```

use abdkit::metrics::{export_report, load_report_json, quantify, report_csv, ReportFormat};
use abdkit::phantom::{analytic_sfa_area_mm2, generate, PhantomSpec};
use abdkit::seg::{segment_range, SegParams};
use abdkit::volume::{Dims, Spacing};

fn main() -> abdkit::Result<()> {
    let spec = PhantomSpec {
        dims: Dims::new(12, 160, 160),
        spacing: Spacing::new(5.0, 2.0, 2.0)?,
        abdomen_start: 3,
        abdomen_end: 8,
        body_radii_mm: (120.0, 145.0),
        ..PhantomSpec::default()
    };
    let p = generate(&spec)?;
    let (s, e) = (p.label.start, p.label.end);
    let masks = segment_range(&p.volume, s, e, &SegParams::default())?;
    let report = quantify(&masks, &p.volume, s)?;

    print!("{}", report_csv(&report)?);
    let v = report.volume_cm3;
    println!("volume cm3: muscle {:.2}  sfa {:.2}  vfa {:.2}", v.muscle, v.sfa, v.vfa);

    let k = report.slices[0].slice_index;
    let analytic = analytic_sfa_area_mm2(&spec, k) / 100.0;
    println!(
        "slice {k}: sfa {:.3} cm2 measured, {analytic:.3} cm2 analytic",
        report.slices[0].area_cm2.sfa
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("report.json");
    export_report(&report, ReportFormat::Json, &path)?;
    println!("json round trip exact: {}", load_report_json(&path)? == report);
    Ok(())
}
