use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{LocNetConfig, ViewMode};
use crate::error::{Error, Result};
use crate::heatmap::HeatmapTarget;
use crate::tensor::{Tape, Tensor, Var};
use crate::volume::{
    extract_center_views, resample_trilinear, window_normalize, IntensityDomain, Spacing, Volume,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// Normal with std `gain * sqrt(2 / fan_in)`.
    He { fan_in: usize, gain: f64 },
    /// Normal with std `sqrt(1 / fan_in)`.
    FanIn(usize),
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

fn layout(c: &LocNetConfig) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push(ParamSpec { name, shape, init });
    let c0 = c.channels_3d[0];
    push("stem.w".into(), vec![c0, 1, 3, 3, 3], Init::He { fan_in: 27, gain: 1.0 });
    push("stem.b".into(), vec![c0], Init::Zero);
    let mut cin = c0;
    for (s, &co) in c.channels_3d.iter().enumerate() {
        for b in 0..c.blocks_per_stage {
            let stride = if b == 0 { c.stride_plan[s + 1] } else { [1, 1, 1] };
            let p = format!("s{s}.b{b}");
            push(format!("{p}.conv1.w"), vec![co, cin, 3, 3, 3], Init::He { fan_in: cin * 27, gain: 1.0 });
            push(format!("{p}.conv1.b"), vec![co], Init::Zero);
            // Residual branches start small so the stack stays well scaled
            // without normalization layers.
            push(format!("{p}.conv2.w"), vec![co, co, 3, 3, 3], Init::He { fan_in: co * 27, gain: 0.5 });
            push(format!("{p}.conv2.b"), vec![co], Init::Zero);
            if stride != [1, 1, 1] || cin != co {
                push(format!("{p}.proj.w"), vec![co, cin, 1, 1, 1], Init::FanIn(cin));
            }
            cin = co;
        }
    }
    let feat = c.feature_dim();
    if c.view_mode == ViewMode::MultiView {
        for view in ["cor", "sag"] {
            let mut vin = 1;
            for (i, &vo) in c.view_channels.iter().enumerate() {
                push(format!("{view}.l{i}.w"), vec![vo, vin, 3, 3], Init::He { fan_in: vin * 9, gain: 1.0 });
                push(format!("{view}.l{i}.b"), vec![vo], Init::Zero);
                vin = vo;
            }
        }
        if !c.raw_qkv {
            let cv = c.view_channels[3];
            for view in ["cor", "sag"] {
                push(format!("fuse.{view}.wq"), vec![cv, c.d_k], Init::FanIn(cv));
                push(format!("fuse.{view}.wk"), vec![feat, c.d_k], Init::FanIn(feat));
            }
        }
    }
    let flat = c.tokens() * feat;
    for head in ["start", "end"] {
        push(format!("head.{head}.w"), vec![flat, c.heatmap_len], Init::FanIn(flat));
        push(format!("head.{head}.b"), vec![c.heatmap_len], Init::Zero);
    }
    out
}

/// Network inputs derived from one volume.
#[derive(Debug, Clone, PartialEq)]
pub struct LocInputs {
    /// `[1, 1, D, H, W]`, windowed to `[0, 1]`.
    pub vol: Tensor,
    /// `[1, 1, D, W]`
    pub cor: Tensor,
    /// `[1, 1, D, H]`
    pub sag: Tensor,
}

impl LocInputs {
    /// Resamples a raw HU volume to the network grid, windows it and cuts
    /// the central coronal and sagittal planes. Also returns the resampled
    /// spacing.
    pub fn from_volume(v: &Volume, config: &LocNetConfig) -> Result<(Self, Spacing)> {
        if v.domain() != IntensityDomain::RawHu {
            return Err(Error::Validation("localization expects a raw HU volume".into()));
        }
        let resampled = if v.dims() == config.input_dims {
            v.clone()
        } else {
            resample_trilinear(v, config.input_dims)?
        };
        let norm = window_normalize(&resampled, config.window)?;
        let (cor, sag) = extract_center_views(&norm)?;
        let d = config.input_dims;
        Ok((
            LocInputs {
                vol: Tensor::from_vec(vec![1, 1, d.depth, d.rows, d.cols], norm.voxels().to_vec())?,
                cor: Tensor::from_vec(vec![1, 1, cor.rows, cor.cols], cor.pixels)?,
                sag: Tensor::from_vec(vec![1, 1, sag.rows, sag.cols], sag.pixels)?,
            },
            norm.spacing(),
        ))
    }

    fn check(&self, c: &LocNetConfig) -> Result<()> {
        let d = c.input_dims;
        let want = [
            (self.vol.shape(), vec![1, 1, d.depth, d.rows, d.cols], "volume"),
            (self.cor.shape(), vec![1, 1, d.depth, d.cols], "coronal"),
            (self.sag.shape(), vec![1, 1, d.depth, d.rows], "sagittal"),
        ];
        for (got, want, what) in want {
            if got != want.as_slice() {
                return Err(Error::Shape(format!("{what} input {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }
}

/// Learned query/key maps of one cross-attention module.
#[derive(Debug, Clone, Copy)]
pub struct QueryKey {
    pub wq: Var,
    pub wk: Var,
}

/// The three terms of the fused representation.
#[derive(Debug, Clone, Copy)]
pub struct Fusion {
    pub cor_term: Var,
    pub sag_term: Var,
    pub fused: Var,
}

/// `Attn(cor, vol, vol) + Attn(sag, vol, vol) + vol` on the tape, with
/// optional learned query/key maps. Values are always `f_vol` itself.
pub fn fuse_on_tape(
    tape: &mut Tape,
    f_vol: Var,
    f_cor: Var,
    f_sag: Var,
    proj: Option<(QueryKey, QueryKey)>,
) -> Result<Fusion> {
    let (sv, sc, ss) = (tape.shape(f_vol).to_vec(), tape.shape(f_cor).to_vec(), tape.shape(f_sag).to_vec());
    if sv.len() != 2 || sc.len() != 2 || ss.len() != 2 || sc[0] != sv[0] || ss[0] != sv[0] {
        return Err(Error::Shape(format!(
            "fusion tokens: vol {sv:?}, cor {sc:?}, sag {ss:?}"
        )));
    }
    let term = |tape: &mut Tape, q: Var, qk: Option<QueryKey>| -> Result<Var> {
        let (q, k) = match qk {
            Some(p) => (tape.matmul(q, p.wq)?, tape.matmul(f_vol, p.wk)?),
            None => (q, f_vol),
        };
        Ok(tape.scaled_dot_attention(q, k, f_vol)?.output)
    };
    let cor_term = term(tape, f_cor, proj.map(|p| p.0))?;
    let sag_term = term(tape, f_sag, proj.map(|p| p.1))?;
    let both = tape.add(cor_term, sag_term)?;
    let fused = tape.add(both, f_vol)?;
    Ok(Fusion {
        cor_term,
        sag_term,
        fused,
    })
}

/// Parameter-free fusion of token matrices `[T, C]`.
pub fn fuse_multiview(f_vol: &Tensor, f_cor: &Tensor, f_sag: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.constant(f_vol.clone());
    let c = tape.constant(f_cor.clone());
    let s = tape.constant(f_sag.clone());
    let f = fuse_on_tape(&mut tape, v, c, s, None)?;
    Ok(tape.value(f.fused).clone())
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct LocForward {
    /// `[1, L]` probabilities.
    pub start: Var,
    pub end: Var,
    /// `[D', C]` tokens.
    pub f_vol: Var,
    pub f_cor: Option<Var>,
    pub f_sag: Option<Var>,
    pub fused: Var,
}

/// Localization network parameters plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct LocNet {
    config: LocNetConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

struct Cursor<'a> {
    names: &'a [String],
    vars: &'a [Var],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, name: &str) -> Var {
        debug_assert_eq!(self.names[self.pos], name);
        self.pos += 1;
        self.vars[self.pos - 1]
    }

    fn take_if(&mut self, name: &str) -> Option<Var> {
        (self.names.get(self.pos).map(String::as_str) == Some(name)).then(|| self.take(name))
    }
}

impl LocNet {
    /// Fresh network with seeded random weights.
    pub fn build(config: LocNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let specs = layout(&config);
        let mut names = Vec::with_capacity(specs.len());
        let mut params = Vec::with_capacity(specs.len());
        for s in specs {
            let std = match s.init {
                Init::He { fan_in, gain } => gain * (2.0 / fan_in as f64).sqrt(),
                Init::FanIn(n) => (1.0 / n as f64).sqrt(),
                Init::Zero => 0.0,
            };
            let t = if std == 0.0 {
                Tensor::zeros(&s.shape)
            } else {
                let normal = Normal::new(0.0, std).expect("positive std");
                Tensor::from_fn(&s.shape, |_| normal.sample(&mut rng))
            };
            names.push(s.name);
            params.push(t);
        }
        Ok(LocNet { config, names, params })
    }

    /// Rebuilds a network from named tensors, checking every shape.
    pub fn from_params(config: LocNetConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let specs = layout(&config);
        if specs.len() != named.len() {
            return Err(Error::Shape(format!(
                "config needs {} tensors, got {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (s, (n, t)) in specs.iter().zip(named) {
            if s.name != n || s.shape != t.shape() {
                return Err(Error::Shape(format!(
                    "expected {} {:?}, got {n} {:?}",
                    s.name,
                    s.shape,
                    t.shape()
                )));
            }
            names.push(n);
            params.push(t);
        }
        Ok(LocNet { config, names, params })
    }

    pub fn config(&self) -> &LocNetConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn leaves(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone(), requires_grad)).collect()
    }

    /// Full forward pass on a tape, with parameters supplied as tape
    /// variables in [`LocNet::names`] order.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: &[Var], inputs: &LocInputs) -> Result<LocForward> {
        let c = &self.config;
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "forward got {} parameter vars, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        inputs.check(c)?;
        let mut p = Cursor {
            names: &self.names,
            vars: params,
            pos: 0,
        };

        let x = tape.constant(inputs.vol.clone());
        let w = p.take("stem.w");
        let b = p.take("stem.b");
        let y = tape.conv3d(x, w, c.stride_plan[0], [1, 1, 1])?;
        let y = tape.add_channel_bias(y, b)?;
        let mut h = tape.relu(y)?;
        for s in 0..c.stages() {
            for blk in 0..c.blocks_per_stage {
                let stride = if blk == 0 { c.stride_plan[s + 1] } else { [1, 1, 1] };
                let pre = format!("s{s}.b{blk}");
                let w1 = p.take(&format!("{pre}.conv1.w"));
                let b1 = p.take(&format!("{pre}.conv1.b"));
                let w2 = p.take(&format!("{pre}.conv2.w"));
                let b2 = p.take(&format!("{pre}.conv2.b"));
                let a = tape.conv3d(h, w1, stride, [1, 1, 1])?;
                let a = tape.add_channel_bias(a, b1)?;
                let a = tape.relu(a)?;
                let a = tape.conv3d(a, w2, [1, 1, 1], [1, 1, 1])?;
                let a = tape.add_channel_bias(a, b2)?;
                let skip = match p.take_if(&format!("{pre}.proj.w")) {
                    Some(wp) => tape.conv3d(h, wp, stride, [0, 0, 0])?,
                    None => h,
                };
                let sum = tape.add(a, skip)?;
                h = tape.relu(sum)?;
            }
        }
        let f_vol = tape.token_pool(h)?;

        let (fused, f_cor, f_sag) = match c.view_mode {
            ViewMode::VolumeOnly => (f_vol, None, None),
            ViewMode::MultiView => {
                let mut encode = |tape: &mut Tape, input: &Tensor, view: &str| -> Result<Var> {
                    let mut h = tape.constant(input.clone());
                    for i in 0..4 {
                        let w = p.take(&format!("{view}.l{i}.w"));
                        let b = p.take(&format!("{view}.l{i}.b"));
                        let y = tape.conv2d(h, w, [2, 2], [1, 1])?;
                        let y = tape.add_channel_bias(y, b)?;
                        h = tape.relu(y)?;
                    }
                    tape.token_pool(h)
                };
                let f_cor = encode(tape, &inputs.cor, "cor")?;
                let f_sag = encode(tape, &inputs.sag, "sag")?;
                let proj = if c.raw_qkv {
                    None
                } else {
                    let cq = QueryKey {
                        wq: p.take("fuse.cor.wq"),
                        wk: p.take("fuse.cor.wk"),
                    };
                    let sq = QueryKey {
                        wq: p.take("fuse.sag.wq"),
                        wk: p.take("fuse.sag.wk"),
                    };
                    Some((cq, sq))
                };
                let f = fuse_on_tape(tape, f_vol, f_cor, f_sag, proj)?;
                (f.fused, Some(f_cor), Some(f_sag))
            }
        };

        let flat = tape.reshape(fused, &[1, c.tokens() * c.feature_dim()])?;
        let mut head = |tape: &mut Tape, name: &str| -> Result<Var> {
            let w = p.take(&format!("head.{name}.w"));
            let b = p.take(&format!("head.{name}.b"));
            let logits = tape.linear(flat, w, b)?;
            tape.softmax(logits, 1)
        };
        let start = head(tape, "start")?;
        let end = head(tape, "end")?;
        debug_assert_eq!(p.pos, params.len());
        Ok(LocForward {
            start,
            end,
            f_vol,
            f_cor,
            f_sag,
            fused,
        })
    }

    /// Start and end heatmaps for one input.
    pub fn forward(&self, inputs: &LocInputs) -> Result<(HeatmapTarget, HeatmapTarget)> {
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, &vars, inputs)?;
        Ok((
            HeatmapTarget::from_probs(tape.value(out.start).data().to_vec())?,
            HeatmapTarget::from_probs(tape.value(out.end).data().to_vec())?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(c: &LocNetConfig, seed: u64) -> LocInputs {
        let d = c.input_dims;
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        LocInputs {
            vol: Tensor::from_fn(&[1, 1, d.depth, d.rows, d.cols], |_| next()),
            cor: Tensor::from_fn(&[1, 1, d.depth, d.cols], |_| next()),
            sag: Tensor::from_fn(&[1, 1, d.depth, d.rows], |_| next()),
        }
    }

    #[test]
    fn param_count_from_shapes() {
        let c = LocNetConfig::default();
        let net = LocNet::build(c.clone()).unwrap();
        // stem, four stages of two blocks, two view encoders, fusion maps, heads
        let stem = 8 * 27 + 8;
        let block = |ci: usize, co: usize, proj: bool| {
            co * ci * 27 + co + co * co * 27 + co + if proj { co * ci } else { 0 }
        };
        let stages = block(8, 8, true) + block(8, 8, false)
            + block(8, 16, true) + block(16, 16, false)
            + block(16, 32, true) + block(32, 32, false)
            + block(32, 64, true) + block(64, 64, false);
        let enc = (8 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (32 * 32 * 9 + 32);
        let fuse = 2 * (32 * 32 + 64 * 32);
        let heads = 2 * (8 * 64 * 128 + 128);
        assert_eq!(net.param_count(), stem + stages + 2 * enc + fuse + heads);

        let vo = LocNet::build(LocNetConfig { view_mode: ViewMode::VolumeOnly, ..c }).unwrap();
        assert_eq!(vo.param_count(), stem + stages + heads);
    }

    #[test]
    fn build_is_seeded() {
        let a = LocNet::build(LocNetConfig::tiny()).unwrap();
        let b = LocNet::build(LocNetConfig::tiny()).unwrap();
        assert_eq!(a, b);
        let c = LocNet::build(LocNetConfig { seed: 1, ..LocNetConfig::tiny() }).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn outputs_are_distributions_and_reproducible() {
        let net = LocNet::build(LocNetConfig::tiny()).unwrap();
        let x = inputs(net.config(), 5);
        let (s, e) = net.forward(&x).unwrap();
        assert_eq!(s.len(), 16);
        assert!((s.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((e.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let again = net.forward(&x).unwrap();
        assert_eq!(again.0.probs(), s.probs());
        assert_eq!(again.1.probs(), e.probs());
        assert_ne!(s.probs(), e.probs());
    }

    #[test]
    fn volume_only_ignores_views() {
        let net = LocNet::build(LocNetConfig {
            view_mode: ViewMode::VolumeOnly,
            ..LocNetConfig::tiny()
        })
        .unwrap();
        let a = inputs(net.config(), 1);
        let mut b = a.clone();
        b.cor.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        b.sag.data_mut()[0] += 0.5;
        assert_eq!(net.forward(&a).unwrap(), net.forward(&b).unwrap());

        // With a single token the attention is trivially 1 and the views
        // cannot matter, so use two tokens here.
        let two = LocNetConfig {
            input_dims: crate::volume::Dims::new(32, 8, 8),
            ..LocNetConfig::tiny()
        };
        let mv = LocNet::build(two.clone()).unwrap();
        let a = inputs(&two, 1);
        let mut b = a.clone();
        b.cor.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
        assert_ne!(mv.forward(&a).unwrap(), mv.forward(&b).unwrap());
    }

    #[test]
    fn wrong_input_shape() {
        let net = LocNet::build(LocNetConfig::tiny()).unwrap();
        let mut x = inputs(net.config(), 1);
        x.cor = Tensor::zeros(&[1, 1, 16, 9]);
        assert!(matches!(net.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn from_params_checks_shapes() {
        let net = LocNet::build(LocNetConfig::tiny()).unwrap();
        let named: Vec<(String, Tensor)> = net.names().iter().cloned().zip(net.params().iter().cloned()).collect();
        let back = LocNet::from_params(net.config().clone(), named.clone()).unwrap();
        assert_eq!(back, net);
        let mut bad = named;
        bad[0].1 = Tensor::zeros(&[1]);
        assert!(LocNet::from_params(net.config().clone(), bad).is_err());
    }

    #[test]
    fn pooled_tokens_ignore_in_plane_permutation() {
        use rand::seq::SliceRandom;
        let (ch, t, hw) = (3, 4, 6);
        let fmap = Tensor::from_fn(&[1, ch, t, 2, 3], |i| ((i * 7919) % 101) as f64 / 101.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut perm: Vec<usize> = (0..hw).collect();
        let mut shuffled = fmap.clone();
        for c in 0..ch {
            for z in 0..t {
                perm.shuffle(&mut rng);
                let base = (c * t + z) * hw;
                for (j, &src) in perm.iter().enumerate() {
                    shuffled.data_mut()[base + j] = fmap.data()[base + src];
                }
            }
        }
        let pool = |x: &Tensor| {
            let mut tape = Tape::new();
            let v = tape.constant(x.clone());
            let p = tape.token_pool(v).unwrap();
            tape.value(p).clone()
        };
        let (a, b) = (pool(&fmap), pool(&shuffled));
        assert_eq!(a.shape(), &[t, ch]);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
