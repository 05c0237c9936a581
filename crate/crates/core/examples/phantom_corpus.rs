//! Generate a small phantom corpus with a manifest and print a coronal
//! silhouette of one standard and one view-dependent case.
//!
//! ```text
//! cargo run -p abdkit --example phantom_corpus [out_dir]
//! ```

use abdkit::phantom::{generate_corpus, read_manifest, CaseFamily, CorpusJitter, PhantomSpec};
use abdkit::volume::{extract_center_views, load_volume, window_normalize, ViewSlice2D, WindowSpec};

fn main() -> abdkit::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let keep = std::env::args().nth(1);
    let out = keep.clone().map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());

    let jitter = CorpusJitter { view_dependent_every: 2, ..CorpusJitter::default() };
    generate_corpus(4, &PhantomSpec::default(), &jitter, 11, &out)?;
    let manifest = read_manifest(out.join("manifest.json"))?;
    for case in &manifest.cases {
        println!(
            "{}  {:?}  abdomen {}..={}  radii ({:.0}, {:.0}) mm",
            case.id, case.family, case.label.start, case.label.end, case.spec.body_radii_mm.0, case.spec.body_radii_mm.1
        );
    }

    for family in [CaseFamily::Standard, CaseFamily::ViewDependent] {
        let case = manifest.cases.iter().find(|c| c.family == family).unwrap();
        let (vol_path, _) = manifest.resolve(&out, case);
        let v = load_volume(vol_path)?;
        let (cor, sag) = extract_center_views(&window_normalize(&v, WindowSpec::default())?)?;
        println!("\n{} ({family:?}): coronal | sagittal, '#' is body", case.id);
        for r in (0..cor.rows).step_by(2) {
            let row = |s: &ViewSlice2D| -> String {
                (0..s.cols).step_by(3).map(|c| if s.get(r, c) > 0.0 { '#' } else { ' ' }).collect()
            };
            let mark = if (r..r + 2).contains(&case.label.start) || (r..r + 2).contains(&case.label.end) { "<" } else { "" };
            println!("{r:3} {} | {} {mark}", row(&cor), row(&sag));
        }
    }
    match keep {
        Some(d) => println!("\ncorpus written to {d}"),
        None => println!("\npass a directory to keep the corpus"),
    }
    Ok(())
}
