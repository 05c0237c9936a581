use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::LocNetConfig;
use super::model::{LocInputs, LocNet};
use crate::error::{Error, Result};
use crate::heatmap::{decode_probs, to_original_index, to_resampled_index, LocLabel, TargetKind};
use crate::tensor::{read_blob, write_blob, Adam, AdamConfig, BlobEntry, Tape, Tensor};
use crate::volume::Volume;

/// Slice spacing of the heatmap grid: `L` positions spanning the original
/// `depth` slices of spacing `s_ori`.
pub fn heatmap_spacing(s_ori: f64, depth: usize, len: usize) -> f64 {
    s_ori * depth as f64 / len as f64
}

/// One training case: network inputs and the label on the heatmap grid.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub inputs: LocInputs,
    pub label: LocLabel,
}

impl TrainSample {
    /// Preprocesses `v` and maps its original-grid label onto the heatmap grid.
    pub fn from_volume(v: &Volume, label: LocLabel, config: &LocNetConfig) -> Result<Self> {
        let depth = v.dims().depth;
        LocLabel::new(label.start, label.end, depth)?;
        let (inputs, _) = LocInputs::from_volume(v, config)?;
        let s_ori = v.spacing().sz;
        let s_heat = heatmap_spacing(s_ori, depth, config.heatmap_len);
        let map = |i: usize| to_resampled_index(i, s_ori, s_heat).min(config.heatmap_len - 1);
        Ok(TrainSample {
            inputs,
            label: LocLabel {
                start: map(label.start),
                end: map(label.end),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub target: TargetKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 500,
            adam: AdamConfig::default(),
            target: TargetKind::Gaussian { sigma: 2.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub iterations: usize,
    pub samples: usize,
    pub target: TargetKind,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: LocNet,
    pub meta: Option<TrainMeta>,
}

const FORMAT_TAG: &str = "abdkit-locnet";

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "format": FORMAT_TAG,
            "config": self.model.config(),
            "train": self.meta,
        });
        let entries: Vec<BlobEntry> = self
            .model
            .names()
            .iter()
            .zip(self.model.params())
            .map(|(n, t)| BlobEntry {
                name: n.clone(),
                tensor: t.clone(),
            })
            .collect();
        write_blob(path, meta, &entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, entries) = read_blob(path)?;
        if meta.get("format").and_then(|f| f.as_str()) != Some(FORMAT_TAG) {
            return Err(Error::Format("not a localization checkpoint".into()));
        }
        let config: LocNetConfig = serde_json::from_value(meta["config"].clone())?;
        let train: Option<TrainMeta> = serde_json::from_value(meta["train"].clone())?;
        let model = LocNet::from_params(config, entries.into_iter().map(|e| (e.name, e.tensor)).collect())?;
        Ok(Checkpoint { model, meta: train })
    }
}

/// Mean over `data` of `KL(start) + KL(end)` and its parameter gradients.
pub fn batch_loss(model: &LocNet, data: &[TrainSample], target: TargetKind) -> Result<(f64, Vec<Tensor>)> {
    if data.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let len = model.config().heatmap_len;
    let mut tape = Tape::new();
    let vars = model.leaves(&mut tape, true);
    let mut total = None;
    for s in data {
        if s.label.end >= len || s.label.start > s.label.end {
            return Err(Error::Range(format!(
                "label {}..={} outside heatmap of length {len}",
                s.label.start, s.label.end
            )));
        }
        let out = model.forward_on_tape(&mut tape, &vars, &s.inputs)?;
        let ts = Tensor::from_vec(vec![1, len], target.encode(s.label.start, len)?.probs().to_vec())?;
        let te = Tensor::from_vec(vec![1, len], target.encode(s.label.end, len)?.probs().to_vec())?;
        let ks = tape.kl_div(&ts, out.start)?;
        let ke = tape.kl_div(&te, out.end)?;
        let pair = tape.add(ks, ke)?;
        total = Some(match total {
            None => pair,
            Some(t) => tape.add(t, pair)?,
        });
    }
    let loss = tape.scale(total.expect("nonempty"), 1.0 / data.len() as f64)?;
    let value = tape.value(loss).item()?;
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .zip(model.params())
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, grads))
}

/// Full-batch Adam on `data`. `on_iter` sees every (iteration, loss).
pub fn train_with(
    mut model: LocNet,
    data: &[TrainSample],
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(usize, f64),
) -> Result<Checkpoint> {
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let (loss, grads) = match batch_loss(&model, data, cfg.target) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) => return Err(Error::Training { iteration: it, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { iteration: it, loss });
        }
        history.push(loss);
        on_iter(it, loss);
        adam.step(model.params_mut(), &grads)?;
    }
    Ok(Checkpoint {
        meta: Some(TrainMeta {
            iterations: cfg.iterations,
            samples: data.len(),
            target: cfg.target,
            final_loss: history.last().copied().unwrap_or(f64::NAN),
            loss_history: history,
        }),
        model,
    })
}

pub fn train(model: LocNet, data: &[TrainSample], cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(model, data, cfg, |_, _| {})
}

/// Localized slice range on the original grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: usize,
    pub end: usize,
    /// Decoded heatmap positions before mapping to the original grid.
    pub start_heatmap: f64,
    pub end_heatmap: f64,
    /// Set when the decoded start lay after the decoded end and the two were
    /// swapped.
    pub swapped: bool,
}

impl Prediction {
    pub fn label(&self) -> LocLabel {
        LocLabel {
            start: self.start,
            end: self.end,
        }
    }
}

/// Runs the full preprocessing chain on a raw volume and localizes the
/// abdomen in its original slice indices.
pub fn predict(model: &LocNet, v: &Volume) -> Result<Prediction> {
    let c = model.config();
    let (inputs, _) = LocInputs::from_volume(v, c)?;
    let (hs, he) = model.forward(&inputs)?;
    let depth = v.dims().depth;
    let s_ori = v.spacing().sz;
    let s_heat = heatmap_spacing(s_ori, depth, c.heatmap_len);
    let ps = decode_probs(hs.probs(), c.decode);
    let pe = decode_probs(he.probs(), c.decode);
    let map = |p: f64| to_original_index(p, s_heat, s_ori).min(depth - 1);
    let (mut start, mut end) = (map(ps), map(pe));
    let swapped = start > end;
    if swapped {
        std::mem::swap(&mut start, &mut end);
    }
    Ok(Prediction {
        start,
        end,
        start_heatmap: ps,
        end_heatmap: pe,
        swapped,
    })
}
