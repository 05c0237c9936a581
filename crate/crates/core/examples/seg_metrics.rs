//! Overlap and boundary metrics on hand-built masks, and the localization
//! error table.
//!
//! ```text
//! cargo run -p abdkit --example seg_metrics
//! ```

use abdkit::metrics::{dice, hd95, iou, loc_eval_table, LocEvalInput};
use abdkit::seg::BinaryMask;

fn square(n: usize, r0: usize, c0: usize, side: usize) -> BinaryMask {
    BinaryMask::from_fn(n, n, |r, c| (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c))
}

fn main() -> abdkit::Result<()> {
    let a = square(32, 8, 8, 12);
    for shift in [0, 1, 3, 6] {
        let b = square(32, 8, 8 + shift, 12);
        println!(
            "shift {shift}px: dsc {:.4}  iou {:.4}  hd95 {:.2} mm",
            dice(&a, &b)?,
            iou(&a, &b)?,
            hd95(&a, &b, (0.8, 0.8))?
        );
    }

    // one stray pixel far from a large square barely moves hd95
    let big = square(64, 10, 10, 40);
    let mut stray = big.clone();
    stray.set(60, 60, true);
    println!("stray pixel: dsc {:.4}  hd95 {:.2} mm", dice(&big, &stray)?, hd95(&big, &stray, (1.0, 1.0))?);

    // localization: predictions on a 2.5 mm heatmap grid, truth on a 5 mm grid
    let cases: Vec<LocEvalInput> = [(40.0, 96.0, 20, 48), (42.0, 95.0, 20, 48), (30.0, 100.0, 16, 49)]
        .into_iter()
        .map(|(ps, pe, gs, ge)| LocEvalInput {
            pred_start: ps,
            pred_end: pe,
            gt_start: gs as f64,
            gt_end: ge as f64,
            s_res: 2.5,
            s_ori: 5.0,
        })
        .collect();
    let t = loc_eval_table(&cases)?;
    println!("{:<6} {:>7} {:>7} {:>7} {:>7}", "", "avg_mm", "max_mm", "<=5mm", "<=10mm");
    for (name, r) in [("start", t.start), ("end", t.end)] {
        println!("{name:<6} {:7.2} {:7.2} {:6.1}% {:6.1}%", r.avg_mm, r.max_mm, r.pct_le_5mm, r.pct_le_10mm);
    }
    Ok(())
}
