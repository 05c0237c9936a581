use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate, PhantomSpec, Taper};
use crate::error::{Error, Result};
use crate::heatmap::LocLabel;
use crate::volume::save_volume;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseFamily {
    /// Tapered outside the abdomen.
    Standard,
    /// Radii swapped outside the abdomen; only the silhouette shape in the
    /// coronal/sagittal planes marks the boundary.
    ViewDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusJitter {
    /// Start and end move by up to this many slices either way.
    pub start_slices: usize,
    pub end_slices: usize,
    /// Each body semi-axis moves by up to this many mm.
    pub radius_mm: f64,
    /// Every k-th case (k = this value) is view-dependent; 0 disables them.
    pub view_dependent_every: usize,
}

impl Default for CorpusJitter {
    fn default() -> Self {
        CorpusJitter {
            start_slices: 6,
            end_slices: 6,
            radius_mm: 10.0,
            view_dependent_every: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub family: CaseFamily,
    /// Paths relative to the manifest's directory.
    pub volume: PathBuf,
    pub masks: PathBuf,
    pub label: LocLabel,
    pub spec: PhantomSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub cases: Vec<ManifestCase>,
}

impl Manifest {
    pub fn resolve(&self, root: &Path, case: &ManifestCase) -> (PathBuf, PathBuf) {
        (root.join(&case.volume), root.join(&case.masks))
    }
}

/// Offsets in `-j..=j`, one per case, drawn from `n` equal strata of that
/// range in shuffled order. Neighbouring strata are less than two slices
/// apart, so `n >= 8` cases with `j >= 4` always hit at least three values.
fn stratified(n: usize, j: usize, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let span = (2 * j + 1) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .into_iter()
        .map(|s| {
            let u: f64 = rng.random();
            let v = ((s as f64 + u) * span / n as f64).floor() as i64;
            v.min(2 * j as i64) - j as i64
        })
        .collect()
}

/// The per-case specs of a corpus without generating any voxels.
pub fn corpus_specs(
    n: usize,
    base: &PhantomSpec,
    jitter: &CorpusJitter,
    seed: u64,
) -> Result<Vec<(CaseFamily, PhantomSpec)>> {
    if n == 0 {
        return Err(Error::Validation("corpus needs at least one case".into()));
    }
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = stratified(n, jitter.start_slices, &mut rng);
    let ends = stratified(n, jitter.end_slices, &mut rng);
    let last = base.dims.depth as i64 - 1;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = (base.abdomen_start as i64 + starts[i]).clamp(0, last);
        let end = (base.abdomen_end as i64 + ends[i]).clamp(start, last);
        let mut jr = || (rng.random::<f64>() * 2.0 - 1.0) * jitter.radius_mm;
        let radii = (base.body_radii_mm.0 + jr(), base.body_radii_mm.1 + jr());
        let view_dep = jitter.view_dependent_every > 0 && i % jitter.view_dependent_every == jitter.view_dependent_every - 1;
        let spec = PhantomSpec {
            abdomen_start: start as usize,
            abdomen_end: end as usize,
            body_radii_mm: radii,
            taper: if view_dep { Taper::SwapAxes } else { base.taper },
            seed: rng.random(),
            ..base.clone()
        };
        spec.validate()?;
        let family = if view_dep {
            CaseFamily::ViewDependent
        } else {
            CaseFamily::Standard
        };
        out.push((family, spec));
    }
    Ok(out)
}

/// Writes `n` phantoms plus `manifest.json` into `out_dir`.
pub fn generate_corpus(
    n: usize,
    base: &PhantomSpec,
    jitter: &CorpusJitter,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut cases = Vec::with_capacity(n);
    for (i, (family, spec)) in corpus_specs(n, base, jitter, seed)?.into_iter().enumerate() {
        let id = format!("case_{i:03}");
        let p = generate(&spec)?;
        let volume = PathBuf::from(format!("{id}.rawv"));
        let masks = PathBuf::from(format!("{id}_masks.rawv"));
        save_volume(out_dir.join(&volume), &p.volume)?;
        p.mask_stack().save(out_dir.join(&masks), spec.spacing)?;
        cases.push(ManifestCase {
            id,
            family,
            volume,
            masks,
            label: p.label,
            spec,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        cases,
    };
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "manifest version {} (expected {MANIFEST_VERSION})",
            m.version
        )));
    }
    for c in &m.cases {
        LocLabel::new(c.label.start, c.label.end, c.spec.dims.depth)?;
    }
    Ok(m)
}
