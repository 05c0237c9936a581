//! Train the slice-range localizer on eight phantoms, save and reload the
//! checkpoint, then localize the training cases and two unseen ones.
//!
//! ```text
//! cargo run -p abdkit --release --example locnet_train [iterations]
//! ```
//! 300 iterations take about two minutes on one core.

use std::time::Instant;

use abdkit::heatmap::LocLabel;
use abdkit::locnet::{predict, train_with, Checkpoint, LocNet, LocNetConfig, TrainConfig, TrainSample};
use abdkit::phantom::{corpus_specs, generate, CorpusJitter, PhantomSpec};
use abdkit::volume::Volume;

fn cases(n: usize, seed: u64) -> abdkit::Result<Vec<(Volume, LocLabel)>> {
    corpus_specs(n, &PhantomSpec::default(), &CorpusJitter::default(), seed)?
        .into_iter()
        .map(|(_, spec)| generate(&spec).map(|p| (p.volume, p.label)))
        .collect()
}

fn main() -> abdkit::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let config = LocNetConfig::default();
    let train_set = cases(8, 0)?;
    let held_out = cases(2, 99)?;
    let samples = train_set
        .iter()
        .map(|(v, l)| TrainSample::from_volume(v, *l, &config))
        .collect::<abdkit::Result<Vec<_>>>()?;

    let model = LocNet::build(config)?;
    println!("{} parameters, {iterations} iterations", model.param_count());
    let cfg = TrainConfig { iterations, ..TrainConfig::default() };
    let t0 = Instant::now();
    let ckpt = train_with(model, &samples, &cfg, |i, loss| {
        if i % 25 == 0 || i + 1 == iterations {
            println!("  iter {i:4}  loss {loss:.5}  {:5.1} s", t0.elapsed().as_secs_f64());
        }
    })?;

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("locnet.ckpt");
    ckpt.save(&path)?;
    let model = Checkpoint::load(&path)?.model;

    for (name, set) in [("train", &train_set), ("held out", &held_out)] {
        println!("{name}:");
        for (v, gt) in set.iter() {
            let p = predict(&model, v)?;
            println!(
                "  truth {:2}..={:2}  predicted {:2}..={:2}  error {} / {} slices",
                gt.start,
                gt.end,
                p.start,
                p.end,
                p.start.abs_diff(gt.start),
                p.end.abs_diff(gt.end)
            );
        }
    }
    Ok(())
}
