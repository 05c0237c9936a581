//! Multi-view fusion against a volume-only backbone on phantoms whose
//! abdomen boundary shows only in the coronal/sagittal silhouette. Both
//! variants get the same seed, data and budget; lower final loss wins.
//!
//! ```text
//! cargo run -p abdkit --release --example view_ablation [seed_pairs]
//! ```

use abdkit::locnet::{train, LocNet, LocNetConfig, TrainConfig, TrainSample, ViewMode};
use abdkit::phantom::{corpus_specs, generate, CorpusJitter, PhantomSpec};
use abdkit::volume::Dims;

fn reduced(seed: u64, view_mode: ViewMode) -> LocNetConfig {
    LocNetConfig {
        input_dims: Dims::new(64, 16, 16),
        channels_3d: vec![4, 8, 16],
        stride_plan: vec![[2, 2, 2], [2, 2, 2], [2, 1, 1], [2, 2, 2]],
        blocks_per_stage: 1,
        view_channels: [4, 8, 16, 16],
        d_k: 16,
        heatmap_len: 64,
        view_mode,
        seed,
        ..LocNetConfig::default()
    }
}

fn main() -> abdkit::Result<()> {
    let pairs: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let jitter = CorpusJitter { view_dependent_every: 1, ..CorpusJitter::default() };
    let cfg = TrainConfig { iterations: 100, ..TrainConfig::default() };
    let mut wins = 0;
    for seed in 0..pairs {
        let phantoms = corpus_specs(16, &PhantomSpec::default(), &jitter, seed)?
            .into_iter()
            .map(|(_, spec)| generate(&spec))
            .collect::<abdkit::Result<Vec<_>>>()?;
        let mut loss = [0.0; 2];
        for (i, mode) in [ViewMode::MultiView, ViewMode::VolumeOnly].into_iter().enumerate() {
            let config = reduced(seed, mode);
            let data = phantoms
                .iter()
                .map(|p| TrainSample::from_volume(&p.volume, p.label, &config))
                .collect::<abdkit::Result<Vec<_>>>()?;
            let ckpt = train(LocNet::build(config)?, &data, &cfg)?;
            loss[i] = ckpt.meta.expect("trained").final_loss;
        }
        let win = loss[0] < loss[1];
        wins += win as usize;
        println!("seed {seed}: multi-view {:.4}  volume-only {:.4}  {}", loss[0], loss[1], if win { "multi" } else { "volume" });
    }
    println!("multi-view lower in {wins}/{pairs}");
    Ok(())
}
