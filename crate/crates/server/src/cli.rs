//! The `abdkit` command line.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 I/O failure.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use abdkit::heatmap::{LocLabel, TargetKind};
use abdkit::locnet::{
    heatmap_spacing, predict, train_with, Checkpoint, LocNet, LocNetConfig, Prediction, TrainConfig, TrainSample,
    ViewMode,
};
use abdkit::metrics::{
    evaluate_segmentation, loc_eval_table, report_csv, LocEvalInput, ReportFormat, SegEvaluation, SegScores,
};
use abdkit::phantom::{generate_corpus, read_manifest, CorpusJitter, PhantomSpec};
use abdkit::seg::{ingest_mask, segment_volume, MaskStack, SegParams, Tissue};
use abdkit::tensor::AdamConfig;
use abdkit::volume::{load_image, load_volume, Volume};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::store::{report_for, Localization, Store, StoreError};

pub const DATA_DIR_ENV: &str = "ABDKIT_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "abdkit", version, about = "Abdominal CT body composition: localize, segment, quantify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic phantoms.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Find the abdominal slice range of a volume with a trained checkpoint.
    Locate(LocateArgs),
    /// Label muscle / SFA / VFA with the baseline segmenter, or ingest
    /// externally produced masks.
    Segment(SegmentArgs),
    /// Score predictions against ground truth.
    #[command(subcommand)]
    Evaluate(EvaluateCmd),
    /// Per-slice areas, mean HU and volumes of each tissue.
    Quantify(QuantifyArgs),
    /// Train the localization network on a phantom manifest.
    TrainToy(TrainArgs),
    /// Start the HTTP service over a study directory.
    Serve(ServeArgs),
    /// Manage studies in the data directory.
    #[command(subcommand)]
    Study(StudyCmd),
}

#[derive(Debug, Subcommand)]
pub enum PhantomCmd {
    /// Write a corpus of phantoms plus manifest.json.
    Gen(PhantomGenArgs),
}

#[derive(Debug, Args)]
pub struct PhantomGenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Base phantom spec as JSON; fields left out keep their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Every k-th case is view-dependent; 0 disables the family.
    #[arg(long)]
    pub view_dependent_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LocateArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub volume: PathBuf,
    /// Output mask stack (.rawv or .nii).
    #[arg(long)]
    pub out: PathBuf,
    /// Ingest this mask file instead of running the segmenter.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// With --masks: the file is a single slice placed at this index.
    #[arg(long, requires = "masks")]
    pub slice: Option<usize>,
    #[command(flatten)]
    pub range: RangeArgs,
}

#[derive(Debug, Args, Clone)]
pub struct RangeArgs {
    #[arg(long, requires = "end")]
    pub start: Option<usize>,
    #[arg(long, requires = "start")]
    pub end: Option<usize>,
    /// Localize the range with this checkpoint instead of --start/--end.
    #[arg(long, conflicts_with_all = ["start", "end"])]
    pub ckpt: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCmd {
    /// Endpoint errors in mm of a checkpoint over a manifest.
    Loc(EvalLocArgs),
    /// DSC / IoU / HD95 of predicted against reference mask stacks.
    Seg(EvalSegArgs),
}

#[derive(Debug, Args)]
pub struct EvalLocArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    /// Mask file, or directory of mask files matched to --gt by name.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct QuantifyArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long, requires = "end")]
    pub start: Option<usize>,
    #[arg(long, requires = "start")]
    pub end: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Gaussian,
    Onehot,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Network config as JSON; fields left out keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value_t = TargetArg::Gaussian)]
    pub target: TargetArg,
    #[arg(long)]
    pub volume_only: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Study root; defaults to $ABDKIT_DATA_DIR, then ./abdkit-data.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug, Subcommand)]
pub enum StudyCmd {
    /// Create a study from a volume. Masks come from --masks or the baseline
    /// segmenter over the given or localized range.
    Import(ImportArgs),
    /// List studies.
    List {
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[command(flatten)]
    pub range: RangeArgs,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] abdkit::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Core(e) | CliError::Store(StoreError::Core(e)) if e.is_io() => 2,
            _ => 1,
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one parsed command, writing its primary output to `out`.
pub fn execute(cmd: Command, out: &mut dyn std::io::Write) -> CliResult {
    match cmd {
        Command::Phantom(PhantomCmd::Gen(a)) => phantom_gen(a, out),
        Command::Locate(a) => locate(a, out),
        Command::Segment(a) => segment(a, out),
        Command::Evaluate(EvaluateCmd::Loc(a)) => evaluate_loc(a, out),
        Command::Evaluate(EvaluateCmd::Seg(a)) => evaluate_seg(a, out),
        Command::Quantify(a) => quantify_cmd(a, out),
        Command::TrainToy(a) => train_toy(a, out),
        Command::Serve(a) => serve(a),
        Command::Study(StudyCmd::Import(a)) => study_import(a, out),
        Command::Study(StudyCmd::List { data_dir }) => {
            let store = Store::open(data_dir_or_default(data_dir))?;
            emit(out, &serde_json::to_string_pretty(&store.list()).expect("serializable"))
        }
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> CliResult {
    writeln!(out, "{text}").map_err(|e| CliError::Io {
        context: "writing output".into(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| abdkit::Error::io(path, e))?;
    Ok(serde_json::from_str(&text).map_err(abdkit::Error::from)?)
}

pub fn data_dir_or_default(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("abdkit-data"))
}

fn phantom_gen(a: PhantomGenArgs, out: &mut dyn std::io::Write) -> CliResult {
    let mut base = match &a.spec {
        Some(p) => read_json::<PhantomSpec>(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(s) = a.noise_sigma {
        base.noise_sigma_hu = s;
    }
    let mut jitter = CorpusJitter::default();
    if let Some(k) = a.view_dependent_every {
        jitter.view_dependent_every = k;
    }
    let manifest = generate_corpus(a.n, &base, &jitter, a.seed, &a.out)?;
    for c in &manifest.cases {
        emit(
            out,
            &format!("{}  {:?}  start={} end={}", c.id, c.family, c.label.start, c.label.end),
        )?;
    }
    emit(out, &format!("wrote {} cases to {}", manifest.cases.len(), a.out.display()))
}

fn load_model(path: &Path) -> CliResult<LocNet> {
    Ok(Checkpoint::load(path)?.model)
}

fn locate(a: LocateArgs, out: &mut dyn std::io::Write) -> CliResult {
    let v = load_volume(&a.volume)?;
    let p = predict(&load_model(&a.ckpt)?, &v)?;
    let sz = v.spacing().sz;
    if a.json {
        let j = json!({
            "start": p.start,
            "end": p.end,
            "start_mm": p.start as f64 * sz,
            "end_mm": p.end as f64 * sz,
            "swapped": p.swapped,
        });
        emit(out, &j.to_string())
    } else {
        emit(
            out,
            &format!(
                "start {} ({} mm)  end {} ({} mm){}",
                p.start,
                p.start as f64 * sz,
                p.end,
                p.end as f64 * sz,
                if p.swapped { "  [endpoints were swapped]" } else { "" }
            ),
        )
    }
}

/// The slice range from flags, or the whole volume.
fn resolve_range(r: &RangeArgs, v: &Volume) -> CliResult<Localization> {
    let depth = v.dims().depth;
    let (start, end, method) = match (r.start, r.end, &r.ckpt) {
        (Some(s), Some(e), _) => (s, e, "manual"),
        (_, _, Some(ck)) => {
            let p = predict(&load_model(ck)?, v)?;
            (p.start, p.end, "locnet")
        }
        _ => (0, depth - 1, "full"),
    };
    LocLabel::new(start, end, depth)?;
    Ok(Localization {
        start,
        end,
        method: method.into(),
    })
}

fn segment(a: SegmentArgs, out: &mut dyn std::io::Write) -> CliResult {
    let v = load_volume(&a.volume)?;
    let d = v.dims();
    let stack = match (&a.masks, a.slice) {
        (Some(m), Some(k)) => {
            if k >= d.depth {
                return Err(CliError::Usage(format!("--slice {k} is outside 0..{}", d.depth)));
            }
            let mask = ingest_mask(m, (d.rows, d.cols))?;
            let mut s = MaskStack::background(d);
            s.set_slice(k, &mask)?;
            s
        }
        (Some(m), None) => MaskStack::load(m, Some(d))?,
        (None, _) => {
            let r = resolve_range(&a.range, &v)?;
            let s = segment_volume(&v, r.start, r.end, &SegParams::default())?;
            emit(out, &format!("segmented slices {}..={} ({})", r.start, r.end, r.method))?;
            s
        }
    };
    stack.save(&a.out, v.spacing())?;
    emit(out, &format!("wrote {}", a.out.display()))
}

/// Evaluation input for one case: heatmap-grid predictions against
/// original-grid labels.
pub fn loc_eval_input(p: &Prediction, gt: LocLabel, v: &Volume, heatmap_len: usize) -> LocEvalInput {
    let s_ori = v.spacing().sz;
    let (ps, pe) = if p.swapped {
        (p.end_heatmap, p.start_heatmap)
    } else {
        (p.start_heatmap, p.end_heatmap)
    };
    LocEvalInput {
        pred_start: ps,
        pred_end: pe,
        gt_start: gt.start as f64,
        gt_end: gt.end as f64,
        s_res: heatmap_spacing(s_ori, v.dims().depth, heatmap_len),
        s_ori,
    }
}

fn evaluate_loc(a: EvalLocArgs, out: &mut dyn std::io::Write) -> CliResult {
    let manifest = read_manifest(&a.manifest)?;
    let root = a.manifest.parent().unwrap_or(Path::new("."));
    let model = load_model(&a.ckpt)?;
    let mut inputs = Vec::new();
    for case in &manifest.cases {
        let (vol_path, _) = manifest.resolve(root, case);
        let v = load_volume(&vol_path)?;
        let p = predict(&model, &v)?;
        inputs.push(loc_eval_input(&p, case.label, &v, model.config().heatmap_len));
    }
    let table = loc_eval_table(&inputs)?;
    if a.json {
        emit(out, &serde_json::to_string_pretty(&table).expect("serializable"))
    } else {
        emit(out, &table.to_string())
    }
}

fn is_mask_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    p.is_file() && (name.ends_with(".rawv") || name.ends_with(".nii"))
}

fn mask_pairs(pred: &Path, gt: &Path) -> CliResult<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_file() && gt.is_file() {
        let name = pred.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, pred.to_path_buf(), gt.to_path_buf())]);
    }
    if !(pred.is_dir() && gt.is_dir()) {
        return Err(CliError::Usage("--pred and --gt must both be files or both be directories".into()));
    }
    let entries = fs::read_dir(pred).map_err(|e| abdkit::Error::io(pred, e))?;
    let mut pairs = Vec::new();
    for e in entries {
        let p = e.map_err(|e| abdkit::Error::io(pred, e))?.path();
        if !is_mask_file(&p) {
            continue;
        }
        let name = p.file_name().expect("file").to_string_lossy().into_owned();
        let g = gt.join(&name);
        if !g.is_file() {
            return Err(CliError::Usage(format!("no reference mask {} for {name}", g.display())));
        }
        pairs.push((name, p, g));
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("no mask files in {}", pred.display())));
    }
    pairs.sort();
    Ok(pairs)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}

fn seg_rows(name: &str, kind: &str, s: &SegScores) -> Vec<String> {
    let mut rows: Vec<String> = Tissue::CLASSES
        .iter()
        .map(|&t| {
            let c = s.class(t).expect("tissue class");
            format!(
                "{name:<24} {kind:<8} {:<7} {:.4}  {:.4}  {}",
                t.name(),
                c.dsc,
                c.iou,
                fmt_opt(c.hd95_mm)
            )
        })
        .collect();
    rows.push(format!(
        "{name:<24} {kind:<8} {:<7} {:.4}  {:.4}  {}",
        "macro",
        s.macro_dsc,
        s.macro_iou,
        fmt_opt(s.macro_hd95_mm)
    ));
    rows
}

fn evaluate_seg(a: EvalSegArgs, out: &mut dyn std::io::Write) -> CliResult {
    let mut results: Vec<(String, SegEvaluation)> = Vec::new();
    for (name, p, g) in mask_pairs(&a.pred, &a.gt)? {
        let spacing = load_image(&g)?.spacing;
        let gt = MaskStack::load(&g, None)?;
        let pred = MaskStack::load(&p, Some(gt.dims()))?;
        let d = gt.dims().depth;
        let ev = evaluate_segmentation(&pred.slices(0, d - 1)?, &gt.slices(0, d - 1)?, (spacing.sy, spacing.sx))?;
        results.push((name, ev));
    }
    if a.json {
        let j: Vec<_> = results.iter().map(|(n, e)| json!({ "file": n, "evaluation": e })).collect();
        return emit(out, &serde_json::to_string_pretty(&j).expect("serializable"));
    }
    emit(out, &format!("{:<24} {:<8} {:<7} {:<6}  {:<6}  hd95_mm", "file", "scope", "class", "dsc", "iou"))?;
    for (name, ev) in &results {
        for row in seg_rows(name, "slice", &ev.per_slice_mean)
            .into_iter()
            .chain(seg_rows(name, "pooled", &ev.pooled))
        {
            emit(out, &row)?;
        }
    }
    Ok(())
}

fn quantify_cmd(a: QuantifyArgs, out: &mut dyn std::io::Write) -> CliResult {
    let v = load_volume(&a.volume)?;
    let masks = MaskStack::load(&a.masks, Some(v.dims()))?;
    let (s, e) = match (a.start, a.end) {
        (Some(s), Some(e)) => (s, e),
        _ => (0, v.dims().depth - 1),
    };
    LocLabel::new(s, e, v.dims().depth)?;
    let report = report_for(&v, &masks, s, e)?;
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    let text = match format {
        ReportFormat::Csv => report_csv(&report)?,
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("serializable"),
    };
    match &a.out {
        Some(p) => {
            fs::write(p, &text).map_err(|e| abdkit::Error::io(p, e))?;
            emit(out, &format!("wrote {}", p.display()))
        }
        None => emit(out, text.trim_end()),
    }
}

fn train_toy(a: TrainArgs, out: &mut dyn std::io::Write) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => read_json::<LocNetConfig>(p)?,
        None => LocNetConfig::default(),
    };
    if a.volume_only {
        cfg.view_mode = ViewMode::VolumeOnly;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if !(a.lr.is_finite() && a.lr >= 0.0) {
        return Err(CliError::Usage(format!("--lr must be >= 0, got {}", a.lr)));
    }
    let manifest = read_manifest(&a.manifest)?;
    let root = a.manifest.parent().unwrap_or(Path::new("."));
    let mut data = Vec::with_capacity(manifest.cases.len());
    for case in &manifest.cases {
        let (vol_path, _) = manifest.resolve(root, case);
        data.push(TrainSample::from_volume(&load_volume(&vol_path)?, case.label, &cfg)?);
    }
    let tc = TrainConfig {
        iterations: a.iterations,
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        target: match a.target {
            TargetArg::Gaussian => TargetKind::Gaussian { sigma: cfg.sigma },
            TargetArg::Onehot => TargetKind::OneHot,
        },
    };
    let net = LocNet::build(cfg)?;
    emit(
        out,
        &format!("training {} parameters on {} cases for {} iterations", net.param_count(), data.len(), a.iterations),
    )?;
    let every = a.log_every.max(1);
    let ck = train_with(net, &data, &tc, |i, l| {
        if i % every == 0 || i + 1 == tc.iterations {
            eprintln!("iter {i:>5}  loss {l:.6}");
        }
    })?;
    ck.save(&a.out)?;
    let final_loss = ck.meta.as_ref().map_or(f64::NAN, |m| m.final_loss);
    emit(out, &format!("final loss {final_loss:.6}; wrote {}", a.out.display()))
}

fn serve(a: ServeArgs) -> CliResult {
    let root = data_dir_or_default(a.data_dir);
    let store = Arc::new(Store::open(&root)?);
    eprintln!("{} studies under {}", store.list().len(), root.display());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io {
        context: "starting runtime".into(),
        source: e,
    })?;
    rt.block_on(crate::api::serve(store, a.addr)).map_err(|e| CliError::Io {
        context: format!("serving on {}", a.addr),
        source: e,
    })
}

fn study_import(a: ImportArgs, out: &mut dyn std::io::Write) -> CliResult {
    let store = Store::open(data_dir_or_default(a.data_dir))?;
    let v = load_volume(&a.volume)?;
    let masks = a.masks.as_ref().map(|m| MaskStack::load(m, Some(v.dims()))).transpose()?;
    let explicit = a.range.start.is_some() || a.range.ckpt.is_some();
    let loc = if explicit { Some(resolve_range(&a.range, &v)?) } else { None };
    let study = store.create(&a.id, v, masks, loc)?;
    emit(
        out,
        &serde_json::to_string_pretty(&study.snapshot().summary()).expect("serializable"),
    )
}
