//! One PASS/FAIL line per acceptance criterion, checked at its stated
//! tolerance. Runs as a plain binary (`harness = false`) so the lines always
//! reach stdout; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use abdkit::heatmap::{decode, encode_gaussian, l1_error_mm, DecodeMode, LocLabel, TargetKind};
use abdkit::locnet::{
    batch_loss, fuse_multiview, predict, train, LocInputs, LocNet, LocNetConfig, TrainConfig, TrainSample, ViewMode,
};
use abdkit::metrics::{
    dice, evaluate_segmentation, export_report, format_sig, hd95, iou, load_report_json, quantify, report_csv, ReportFormat,
};
use abdkit::phantom::{analytic_sfa_area_mm2, corpus_specs, ellipse_perimeter, generate, CorpusJitter, PhantomSpec};
use abdkit::seg::{morphology, segment_range, BinaryMask, SegParams, Tissue};
use abdkit::tensor::{finite_diff_check, relative_error, Tape, Tensor, Var};
use abdkit::volume::{resample_trilinear, Dims, Spacing, Volume};
use abdkit_server::api::router;
use abdkit_server::edit::{EditBatch, Point, Stroke};
use abdkit_server::store::{Localization, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: abdkit::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Away from zero, so relu kinks stay outside `x +- h`.
fn nudged(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

// ---------------------------------------------------------------- gradients

type OpFn = fn(&mut Tape, &[Var]) -> abdkit::Result<Var>;

fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> abdkit::Result<Var> {
    if tape.shape(y).is_empty() {
        return Ok(y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let w = tape.constant(random_tensor(&mut rng, tape.shape(y)));
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

/// Worst error over every operand of `f`, the others held constant.
fn op_error(seed: u64, inputs: &[Tensor], f: OpFn) -> abdkit::Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..inputs.len() {
        let err = finite_diff_check(
            |t, x| {
                let vars: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, v)| if j == i { x } else { t.constant(v.clone()) })
                    .collect();
                let y = f(t, &vars)?;
                weighted_sum(t, y, seed)
            },
            &inputs[i],
            1e-4,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, bool, OpFn)> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], false, |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![3, 4], vec![3, 4]], false, |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![3, 4], vec![3, 4]], false, |t, v| t.mul(v[0], v[1])),
        ("scale", vec![vec![3, 4]], false, |t, v| t.scale(v[0], -1.7)),
        ("relu", vec![vec![4, 5]], true, |t, v| t.relu(v[0])),
        ("matmul", vec![vec![3, 4], vec![4, 2]], false, |t, v| t.matmul(v[0], v[1])),
        ("transpose", vec![vec![3, 4]], false, |t, v| t.transpose(v[0])),
        ("linear", vec![vec![3, 4], vec![4, 2], vec![2]], false, |t, v| t.linear(v[0], v[1], v[2])),
        ("add_row_bias", vec![vec![3, 4], vec![4]], false, |t, v| t.add_row_bias(v[0], v[1])),
        ("add_channel_bias", vec![vec![2, 3, 4, 2], vec![3]], false, |t, v| t.add_channel_bias(v[0], v[1])),
        ("softmax axis 0", vec![vec![2, 3, 4]], false, |t, v| t.softmax(v[0], 0)),
        ("softmax axis 1", vec![vec![2, 3, 4]], false, |t, v| t.softmax(v[0], 1)),
        ("softmax axis 2", vec![vec![2, 3, 4]], false, |t, v| t.softmax(v[0], 2)),
        ("reshape", vec![vec![3, 4]], false, |t, v| t.reshape(v[0], &[2, 6])),
        ("sum", vec![vec![3, 4]], false, |t, v| t.sum(v[0])),
        ("mean", vec![vec![3, 4]], false, |t, v| t.mean(v[0])),
        ("token_pool", vec![vec![1, 3, 4, 2, 2]], false, |t, v| t.token_pool(v[0])),
        ("conv2d", vec![vec![1, 2, 5, 6], vec![3, 2, 3, 3]], false, |t, v| {
            t.conv2d(v[0], v[1], [2, 1], [1, 1])
        }),
        ("conv3d", vec![vec![1, 2, 4, 5, 5], vec![2, 2, 3, 3, 3]], false, |t, v| {
            t.conv3d(v[0], v[1], [2, 2, 1], [1, 1, 1])
        }),
        ("attention", vec![vec![3, 4], vec![5, 4], vec![5, 2]], false, |t, v| {
            Ok(t.scaled_dot_attention(v[0], v[1], v[2])?.output)
        }),
        ("attention weights", vec![vec![3, 4], vec![5, 4], vec![5, 2]], false, |t, v| {
            Ok(t.scaled_dot_attention(v[0], v[1], v[2])?.weights)
        }),
        ("kl_div", vec![vec![2, 6]], false, |t, v| {
            let target = Tensor::from_fn(&[2, 6], |i| [0.05, 0.1, 0.2, 0.3, 0.25, 0.1][i % 6]);
            let p = t.softmax(v[0], 1)?;
            t.kl_div(&target, p)
        }),
    ]
}

fn random_inputs(cfg: &LocNetConfig, rng: &mut ChaCha8Rng) -> LocInputs {
    let [d, h, w] = cfg.input_dims.as_array();
    let mut unit = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random::<f64>());
    LocInputs {
        vol: unit(&[1, 1, d, h, w]),
        cor: unit(&[1, 1, d, w]),
        sag: unit(&[1, 1, d, h]),
    }
}

fn model_error(seed: u64) -> abdkit::Result<f64> {
    let cfg = LocNetConfig { seed, ..LocNetConfig::tiny() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = LocNet::build(cfg.clone())?;
    // zero biases can sit exactly on a relu kink
    let names = net.names().to_vec();
    for (n, p) in names.iter().zip(net.params_mut()) {
        if n.ends_with(".b") {
            p.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
    }
    let data: Vec<TrainSample> = (0..2)
        .map(|_| {
            let start = rng.random_range(0..8);
            let end = rng.random_range(start..16);
            TrainSample { inputs: random_inputs(&cfg, &mut rng), label: LocLabel { start, end } }
        })
        .collect();
    let target = TargetKind::Gaussian { sigma: 2.0 };
    let h = 1e-5;
    let (_, grads) = batch_loss(&net, &data, target)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for p in 0..grads.len() {
        for i in 0..grads[p].numel() {
            let orig = probe.params()[p].data()[i];
            probe.params_mut()[p].data_mut()[i] = orig + h;
            let up = batch_loss(&probe, &data, target)?.0;
            probe.params_mut()[p].data_mut()[i] = orig - h;
            let down = batch_loss(&probe, &data, target)?.0;
            probe.params_mut()[p].data_mut()[i] = orig;
            worst = worst.max(relative_error(grads[p].data()[i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

fn gradients() -> Check {
    let t0 = Instant::now();
    let mut op_worst: f64 = 0.0;
    let cases = op_cases();
    for (name, shapes, kinked, f) in &cases {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = shapes
                .iter()
                .map(|s| if *kinked { nudged(&mut rng, s) } else { random_tensor(&mut rng, s) })
                .collect();
            let e = ok(op_error(seed, &inputs, *f))?;
            ensure(e < 1e-4, || format!("{name} seed {seed}: {e:.2e} >= 1e-4"))?;
            op_worst = op_worst.max(e);
        }
    }
    let mut model_worst: f64 = 0.0;
    for seed in 0..20u64 {
        let e = ok(model_error(seed))?;
        ensure(e < 1e-3, || format!("full model seed {seed}: {e:.2e} >= 1e-3"))?;
        model_worst = model_worst.max(e);
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s (limit 120 s)"))?;
    Ok(format!(
        "{} ops x 20 seeds worst {op_worst:.1e} (< 1e-4); full model x 20 seeds worst {model_worst:.1e} (< 1e-3); {secs:.1} s",
        cases.len()
    ))
}

// ------------------------------------------------------------------ fusion

fn attn_oracle(q: &Tensor, k: &Tensor, v: &Tensor) -> Vec<f64> {
    let (nq, d, nk, c) = (q.shape()[0], q.shape()[1], k.shape()[0], v.shape()[1]);
    let mut out = vec![0.0; nq * c];
    for i in 0..nq {
        let s: Vec<f64> = (0..nk)
            .map(|j| (0..d).map(|e| q.data()[i * d + e] * k.data()[j * d + e]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = ex.iter().sum();
        for j in 0..nk {
            for e in 0..c {
                out[i * c + e] += ex[j] / z * v.data()[j * c + e];
            }
        }
    }
    out
}

fn fusion() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, c) = (rng.random_range(2..6), rng.random_range(2..8));
        let [vol, cor, sag] = [(); 3].map(|_| random_tensor(&mut rng, &[t, c]));
        let got = ok(fuse_multiview(&vol, &cor, &sag))?;
        let (a, b) = (attn_oracle(&cor, &vol, &vol), attn_oracle(&sag, &vol, &vol));
        for i in 0..t * c {
            worst = worst.max((got.data()[i] - (a[i] + b[i] + vol.data()[i])).abs());
        }
    }
    ensure(worst < 1e-9, || format!("oracle deviation {worst:.2e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let zero = Tensor::zeros(&[4, 6]);
    let z = ok(fuse_multiview(&zero, &random_tensor(&mut rng, &[4, 6]), &random_tensor(&mut rng, &[4, 6])))?;
    ensure(z.data().iter().all(|&x| x == 0.0), || "zero values did not give zero output".into())?;
    let one = random_tensor(&mut rng, &[1, 7]);
    let s = ok(fuse_multiview(&one, &random_tensor(&mut rng, &[1, 7]), &random_tensor(&mut rng, &[1, 7])))?;
    ensure(s.data().iter().zip(one.data()).all(|(g, v)| *g == 3.0 * v), || "single token is not 3 f_vol".into())?;
    Ok(format!("20 seeds max deviation {worst:.1e} (< 1e-9); zero-value and single-token cases exact"))
}

// ----------------------------------------------------------------- heatmap

fn heatmap() -> Check {
    let sigma = 2.0;
    for len in [32, 128, 512] {
        for c in 0..len {
            let h = ok(encode_gaussian(c, len, sigma))?;
            let d = decode(&h, DecodeMode::Argmax);
            ensure(d == c as f64, || format!("L={len} c={c} decoded {d}"))?;
        }
    }
    let mut worst: f64 = 0.0;
    let len = 128;
    let reach = (4.0 * sigma) as usize + 1;
    for c in reach..len - reach - 1 {
        let a = ok(encode_gaussian(c, len, sigma))?;
        let b = ok(encode_gaussian(c + 1, len, sigma))?;
        for i in 0..len - 1 {
            worst = worst.max((b.probs()[i + 1] - a.probs()[i]).abs());
        }
    }
    ensure(worst < 1e-9, || format!("translation deviation {worst:.2e}"))?;
    let f0 = l1_error_mm(60.0, 40.0, 2.0, 3.0);
    let f10 = l1_error_mm(100.0, 70.0, 1.5, 2.0);
    ensure(f0 == 0.0 && f10 == 10.0, || format!("fixtures gave {f0} and {f10}"))?;
    Ok(format!("round trip exact at L=32/128/512; translation {worst:.1e} (< 1e-9); l1 fixtures 0 mm and 10 mm exact"))
}

// --------------------------------------------------------------- training

fn phantoms(n: usize, jitter: &CorpusJitter, seed: u64) -> abdkit::Result<Vec<abdkit::phantom::Phantom>> {
    corpus_specs(n, &PhantomSpec::default(), jitter, seed)?
        .into_iter()
        .map(|(_, s)| generate(&s))
        .collect()
}

fn toy_training() -> Check {
    let t0 = Instant::now();
    let config = LocNetConfig::default();
    let cases = ok(phantoms(8, &CorpusJitter::default(), 0))?;
    let data = ok(cases
        .iter()
        .map(|p| TrainSample::from_volume(&p.volume, p.label, &config))
        .collect::<abdkit::Result<Vec<_>>>())?;
    let cfg = TrainConfig { iterations: 300, ..TrainConfig::default() };
    let model = ok(train(ok(LocNet::build(config))?, &data, &cfg))?.model;
    let (mut es, mut ee) = (0.0, 0.0);
    for p in &cases {
        let pred = ok(predict(&model, &p.volume))?;
        es += pred.start.abs_diff(p.label.start) as f64;
        ee += pred.end.abs_diff(p.label.end) as f64;
    }
    let n = cases.len() as f64;
    let (es, ee) = (es / n, ee / n);
    let secs = t0.elapsed().as_secs_f64();
    ensure(es <= 2.0 && ee <= 2.0, || format!("mean error start {es:.2} end {ee:.2} slices"))?;
    ensure(secs < 600.0, || format!("took {secs:.0} s (limit 600 s)"))?;
    Ok(format!(
        "8 phantoms, 128x32x32, 300 iterations, lr 1e-3: mean error start {es:.2} end {ee:.2} slices (<= 2); {secs:.0} s"
    ))
}

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

fn ablation() -> Check {
    let jitter = CorpusJitter { view_dependent_every: 1, ..CorpusJitter::default() };
    let cfg = TrainConfig { iterations: 100, ..TrainConfig::default() };
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let cases = ok(phantoms(16, &jitter, seed))?;
        let mut loss = [0.0; 2];
        for (i, mode) in [ViewMode::MultiView, ViewMode::VolumeOnly].into_iter().enumerate() {
            let config = reduced(seed, mode);
            let data = ok(cases
                .iter()
                .map(|p| TrainSample::from_volume(&p.volume, p.label, &config))
                .collect::<abdkit::Result<Vec<_>>>())?;
            let ckpt = ok(train(ok(LocNet::build(config))?, &data, &cfg))?;
            loss[i] = ckpt.meta.map_or(f64::NAN, |m| m.final_loss);
        }
        wins += (loss[0] < loss[1]) as usize;
        pairs.push(format!("{:.3}/{:.3}", loss[0], loss[1]));
    }
    let detail = format!("multi-view lower in {wins}/5 seed pairs (multi/volume: {})", pairs.join(" "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(format!("{detail}; 16 view-dependent cases, 100 iterations, 64x16x16"))
}

// ----------------------------------------------------------------- metrics

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> BinaryMask {
    let p = rng.random_range(0.05..0.6);
    let mut m = BinaryMask::from_fn(n, n, |_, _| false);
    for r in 0..n {
        for c in 0..n {
            m.set(r, c, rng.random::<f64>() < p);
        }
    }
    if m.is_empty() {
        m.set(rng.random_range(0..n), rng.random_range(0..n), true);
    }
    m
}

fn pixels(m: &BinaryMask, edge_only: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in 0..m.rows {
        for c in 0..m.cols {
            if !m.get(r, c) {
                continue;
            }
            let inside = |y: isize, x: isize| {
                y >= 0 && x >= 0 && y < m.rows as isize && x < m.cols as isize && m.get(y as usize, x as usize)
            };
            let (y, x) = (r as isize, c as isize);
            let edge = !(inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1));
            if edge || !edge_only {
                out.push((r, c));
            }
        }
    }
    out
}

fn brute_hd95(a: &BinaryMask, b: &BinaryMask, sy: f64, sx: f64) -> f64 {
    let (ea, eb) = (pixels(a, true), pixels(b, true));
    let directed = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        let mut d: Vec<f64> = from
            .iter()
            .map(|&(r, c)| {
                to.iter()
                    .map(|&(r2, c2)| ((r as f64 - r2 as f64) * sy).hypot((c as f64 - c2 as f64) * sx))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        d.sort_by(f64::total_cmp);
        d[(0.95 * d.len() as f64).ceil() as usize - 1]
    };
    directed(&ea, &eb).max(directed(&eb, &ea))
}

fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_id): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (a, b) = (random_mask(&mut rng, 32), random_mask(&mut rng, 32));
        let (sy, sx) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
        let (na, nb) = (pixels(&a, false).len() as f64, pixels(&b, false).len() as f64);
        let ni = pixels(&a.and(&b), false).len() as f64;
        let (d, i, h) = (ok(dice(&a, &b))?, ok(iou(&a, &b))?, ok(hd95(&a, &b, (sy, sx)))?);
        worst = worst
            .max((d - 2.0 * ni / (na + nb)).abs())
            .max((i - ni / (na + nb - ni)).abs())
            .max((h - brute_hd95(&a, &b, sy, sx)).abs());
        worst_id = worst_id.max((d - 2.0 * i / (1.0 + i)).abs());
    }
    ensure(worst < 1e-9, || format!("brute-force deviation {worst:.2e}"))?;
    ensure(worst_id < 1e-12, || format!("dsc/iou identity deviation {worst_id:.2e}"))?;
    let mut p = BinaryMask::from_fn(8, 8, |_, _| false);
    let mut q = p.clone();
    p.set(0, 0, true);
    q.set(3, 4, true);
    let h = ok(hd95(&p, &q, (1.0, 1.0)))?;
    ensure(h == 5.0, || format!("single-pixel fixture gave {h}"))?;
    Ok(format!(
        "100 random 32x32 pairs max deviation {worst:.1e} (< 1e-9); identity {worst_id:.1e} (< 1e-12); single-pixel hd95 = 5.0 mm"
    ))
}

// ------------------------------------------------------------ segmentation

fn seg_spec(noise: f64, seed: u64) -> PhantomSpec {
    PhantomSpec {
        dims: Dims::new(12, 128, 128),
        spacing: Spacing { sz: 5.0, sy: 2.5, sx: 2.5 },
        abdomen_start: 3,
        abdomen_end: 8,
        body_radii_mm: (120.0, 145.0),
        noise_sigma_hu: noise,
        seed,
        ..PhantomSpec::default()
    }
}

fn segmentation() -> Check {
    let mut notes = Vec::new();
    for (noise, seed, floor) in [(0.0, 0, 0.95), (20.0, 7, 0.90)] {
        let s = seg_spec(noise, seed);
        let p = ok(generate(&s))?;
        let pred = ok(segment_range(&p.volume, 0, s.dims.depth - 1, &SegParams::default()))?;
        let ev = ok(evaluate_segmentation(&pred, &p.masks, (s.spacing.sy, s.spacing.sx)))?;
        let worst = Tissue::CLASSES
            .iter()
            .map(|&t| ev.pooled.class(t).map_or(0.0, |c| c.dsc))
            .fold(f64::INFINITY, f64::min);
        ensure(worst >= floor, || format!("noise {noise}: min class DSC {worst:.4} < {floor}"))?;
        for (k, m) in pred.iter().enumerate() {
            let muscle = m.binary(Tissue::Muscle);
            let passable = BinaryMask::from_fn(muscle.rows, muscle.cols, |r, c| !muscle.get(r, c));
            let reach = morphology::flood_from_border(&passable);
            ensure(m.binary(Tissue::Sfa).and_not(&reach).is_empty(), || format!("noise {noise} slice {k}: SFA cut off"))?;
            ensure(m.binary(Tissue::Vfa).and(&reach).is_empty(), || format!("noise {noise} slice {k}: VFA reachable"))?;
        }
        notes.push(format!("sigma {noise}: min DSC {worst:.4} (>= {floor})"));
    }
    Ok(format!("{}; SFA/VFA separation on all 24 slices", notes.join(", ")))
}

// ------------------------------------------------------------ quantification

fn quantification() -> Check {
    let s = PhantomSpec {
        dims: Dims::new(12, 160, 160),
        spacing: Spacing { sz: 5.0, sy: 2.0, sx: 2.0 },
        ..seg_spec(0.0, 0)
    };
    let p = ok(generate(&s))?;
    let (a, b) = (s.abdomen_start, s.abdomen_end);
    let seg = ok(segment_range(&p.volume, a, b, &SegParams::default()))?;
    let diag = s.spacing.sy.hypot(s.spacing.sx);
    let mut worst_frac: f64 = 0.0;
    for (masks, name) in [(&p.masks[a..=b], "truth"), (&seg[..], "segmented")] {
        let r = ok(quantify(masks, &p.volume, a))?;
        for q in &r.slices {
            let g = s.geometry(q.slice_index);
            let inner = g.inset(g.sfa);
            let band = (ellipse_perimeter(g.body.0, g.body.1) + ellipse_perimeter(inner.0, inner.1)) * diag;
            let err = (q.area_cm2.sfa * 100.0 - analytic_sfa_area_mm2(&s, q.slice_index)).abs();
            ensure(err <= band, || format!("{name} slice {}: off by {err:.1} mm2, band {band:.1}", q.slice_index))?;
            worst_frac = worst_frac.max(err / band);
        }
    }

    let full = ok(quantify(&seg, &p.volume, a))?;
    let mid = (b - a) / 2;
    let lo = ok(quantify(&seg[..=mid], &p.volume, a))?;
    let hi = ok(quantify(&seg[mid + 1..], &p.volume, a + mid + 1))?;
    let joined: Vec<_> = lo.slices.iter().chain(&hi.slices).cloned().collect();
    ensure(joined == full.slices, || "split slice records differ from the full range".into())?;
    ensure(lo.slice_count + hi.slice_count == full.slice_count, || "slice counts do not add".into())?;
    for t in Tissue::CLASSES {
        let (sum, whole) = (lo.volume_cm3.get(t) + hi.volume_cm3.get(t), full.volume_cm3.get(t));
        ensure((sum - whole).abs() <= 1e-12 * whole.abs().max(1.0), || format!("{t:?} volume {sum} vs {whole}"))?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let json = dir.path().join("r.json");
    ok(export_report(&full, ReportFormat::Json, &json))?;
    ensure(ok(load_report_json(&json))? == full, || "JSON round trip changed the report".into())?;
    let csv_path = dir.path().join("r.csv");
    ok(export_report(&full, ReportFormat::Csv, &csv_path))?;
    let text = std::fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    ensure(text == ok(report_csv(&full))?, || "CSV export differs from report_csv".into())?;
    // CSV carries 6 significant digits: parsing and re-formatting must
    // reproduce the text, and every value must round to what was written
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let mut rows = 0;
    for (row, q) in rd.records().zip(&full.slices) {
        let row = row.map_err(|e| e.to_string())?;
        ensure(row[0] == q.slice_index.to_string(), || format!("CSV slice index {}", &row[0]))?;
        let want = [q.area_cm2, q.mean_hu].map(|c| [c.muscle, c.sfa, c.vfa]).concat();
        for (i, w) in want.iter().enumerate() {
            let cell = &row[i + 1];
            let v: f64 = cell.parse().map_err(|_| format!("CSV cell '{cell}'"))?;
            ensure(format_sig(v, 6) == cell, || format!("'{cell}' does not re-format to itself"))?;
            ensure((v - w).abs() <= 5e-6 * w.abs(), || format!("CSV {cell} vs {w}"))?;
        }
        rows += 1;
    }
    ensure(rows == full.slices.len(), || format!("CSV has {rows} rows"))?;
    Ok(format!(
        "SFA ring area error at most {:.2}% of the boundary band; split ranges add up; JSON round trip exact, CSV exact at 6 significant digits",
        worst_frac * 100.0
    ))
}

// -------------------------------------------------------------- resampling

fn resampling() -> Check {
    let v = ok(Volume::filled(Dims::new(100, 4, 4), Spacing { sz: 3.0, sy: 0.7, sx: 0.9 }, 0.0))?;
    let r = ok(resample_trilinear(&v, Dims::new(512, 6, 3)))?;
    let ext_err = v
        .extent_mm()
        .iter()
        .zip(r.extent_mm())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(ext_err < 1e-9, || format!("extent changed by {ext_err:.2e} mm"))?;
    ensure((r.spacing().sz - 100.0 * 3.0 / 512.0).abs() < 1e-12, || format!("sz {}", r.spacing().sz))?;

    let dims = Dims::new(10, 3, 3);
    let ramp = ok(Volume::from_hu(dims, Spacing { sz: 2.0, sy: 1.0, sx: 1.0 }, (0..dims.len()).map(|i| (i / 9) as f64).collect()))?;
    let up = ok(resample_trilinear(&ramp, Dims::new(20, 3, 3)))?;
    let mut ramp_err: f64 = 0.0;
    for i in 0..20 {
        let z = ((i as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 9.0);
        ramp_err = ramp_err.max((up.get(i, 1, 1) - z).abs());
    }
    ensure(ramp_err < 1e-6, || format!("ramp deviation {ramp_err:.2e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = Dims::new(7, 9, 11);
    let noise = ok(Volume::from_hu(d, Spacing { sz: 2.5, sy: 0.8, sx: 0.8 }, (0..d.len()).map(|_| rng.random_range(-1000.0..1000.0)).collect()))?;
    let same = ok(resample_trilinear(&noise, d))?;
    let id_err = noise.voxels().iter().zip(same.voxels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(id_err < 1e-6, || format!("identity deviation {id_err:.2e}"))?;
    Ok(format!("extent {ext_err:.1e} mm (< 1e-9); ramp {ramp_err:.1e} (< 1e-6); identity {id_err:.1e} (< 1e-6)"))
}

// ----------------------------------------------------------------- service

fn square(base: u64, slice: usize, label: u8, x0: usize, y0: usize, side: usize) -> EditBatch {
    EditBatch {
        base_version: base,
        slice_index: slice,
        strokes: (0..side)
            .map(|i| Stroke {
                label,
                brush_radius_px: 0.0,
                points: vec![Point { x: x0 as f64, y: (y0 + i) as f64 }, Point { x: (x0 + side - 1) as f64, y: (y0 + i) as f64 }],
            })
            .collect(),
    }
}

fn service() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Arc::new(Store::open(dir.path()).map_err(|e| e.to_string())?);
    let s = seg_spec(0.0, 0);
    let p = ok(generate(&s))?;
    let loc = Localization { start: s.abdomen_start, end: s.abdomen_end, method: "manual".into() };
    store.create("acc", p.volume, None, Some(loc)).map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let base = format!("http://{}/api/studies/acc", listener.local_addr().map_err(|e| e.to_string())?);
        let app = router(store.clone());
        let server = tokio::spawn(async move { axum::serve(listener, app).await });
        let http = reqwest::Client::builder().timeout(Duration::from_secs(60)).build().map_err(|e| e.to_string())?;
        let report = || async {
            let r = http.get(format!("{base}/report")).send().await.map_err(|e| e.to_string())?;
            r.json::<serde_json::Value>().await.map_err(|e| e.to_string())
        };

        // painted pixels in the air corner of slice 5, as muscle
        let before = report().await?;
        let post = |b: EditBatch| http.post(format!("{base}/edits")).json(&b).send();
        let r = post(square(0, 5, Tissue::Muscle as u8, 1, 2, 7)).await.map_err(|e| e.to_string())?;
        ensure(r.status() == 200, || format!("first edit returned {}", r.status()))?;
        let after = report().await?;
        let row = 5 - s.abdomen_start;
        let area = |r: &serde_json::Value| r["slices"][row]["area_cm2"]["muscle"].as_f64().unwrap_or(f64::NAN);
        let delta = area(&after) - area(&before);
        let want = 49.0 * s.spacing.sy * s.spacing.sx / 100.0;
        ensure(delta == want, || format!("area delta {delta} vs {want}"))?;

        let (a, b) = tokio::join!(post(square(1, 6, 2, 0, 0, 5)), post(square(1, 6, 3, 0, 0, 5)));
        let mut codes = [
            a.map_err(|e| e.to_string())?.status().as_u16(),
            b.map_err(|e| e.to_string())?.status().as_u16(),
        ];
        codes.sort();
        ensure(codes == [200, 409], || format!("concurrent statuses {codes:?}"))?;

        let r = http.post(format!("{base}/resegment")).send().await.map_err(|e| e.to_string())?;
        ensure(r.status() == 200, || format!("resegment returned {}", r.status()))?;
        post(square(3, 4, 3, 10, 10, 4)).await.map_err(|e| e.to_string())?;
        server.abort();
        Ok::<_, String>(())
    })?;
    let study = store.get("acc").map_err(|e| e.to_string())?;
    let snap = study.snapshot();
    let replayed = study.replay().map_err(|e| e.to_string())?;
    ensure(snap.meta.mask_version == 4, || format!("version {}", snap.meta.mask_version))?;
    ensure(replayed == *snap.masks, || "replay differs from current masks".into())?;
    let on_disk = abdkit::seg::MaskStack::load(dir.path().join("acc").join(abdkit_server::store::MASKS_FILE), None);
    ensure(ok(on_disk)? == *snap.masks, || "saved masks differ from memory".into())?;
    Ok("replay of 4 logged versions bit-exact; concurrent same-base edits 200 + 409; area delta 49 px x 0.0625 cm2 exact".into())
}

// -------------------------------------------------------------------- main

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient verification", gradients),
        ("multi-view fusion structure", fusion),
        ("heatmap codec", heatmap),
        ("toy training", toy_training),
        ("multi-view ablation direction", ablation),
        ("metric oracles", metric_oracles),
        ("rule-based segmentation", segmentation),
        ("quantification", quantification),
        ("resampling", resampling),
        ("service", service),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
