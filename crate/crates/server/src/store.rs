//! Studies on disk.
//!
//! Each study is a directory under the data root:
//!
//! ```text
//! <root>/<id>/volume.rawv          CT in raw HU
//!            /masks_initial.rawv   mask stack at creation
//!            /masks.rawv           current mask stack
//!            /edits.jsonl          one LogEntry per accepted change
//!            /meta.json            StudyMeta
//! ```
//!
//! Writers to one study are serialized; readers clone an `Arc` to the
//! current snapshot and never wait on a writer's disk I/O.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use abdkit::metrics::{quantify, TissueReport};
use abdkit::seg::{segment_volume, MaskStack, SegParams};
use abdkit::volume::{load_volume, save_volume, Dims, Spacing, Volume};
use serde::{Deserialize, Serialize};

use crate::edit::{apply_batch, EditBatch, FieldError};

pub const VOLUME_FILE: &str = "volume.rawv";
pub const MASKS_FILE: &str = "masks.rawv";
pub const INITIAL_MASKS_FILE: &str = "masks_initial.rawv";
pub const LOG_FILE: &str = "edits.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown study '{0}'")]
    NotFound(String),
    #[error("study '{0}' already exists")]
    Exists(String),
    #[error("mask version conflict: base {base}, current {current}")]
    Conflict { base: u64, current: u64 },
    #[error("invalid request: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error(transparent)]
    Core(#[from] abdkit::Error),
}

impl StoreError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        StoreError::Core(abdkit::Error::io(path, e))
    }
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    pub start: usize,
    pub end: usize,
    /// Where the range came from, e.g. `"locnet"`, `"manual"`, `"manifest"`.
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub id: String,
    pub localization: Option<Localization>,
    pub mask_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogAction {
    Batch(EditBatch),
    /// The baseline segmenter was rerun over `start..=end`.
    Resegment { start: usize, end: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Mask version after this entry.
    pub version: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(flatten)]
    pub action: LogAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub id: String,
    pub dims: Dims,
    pub spacing: Spacing,
    pub localization: Option<Localization>,
    pub mask_version: u64,
}

/// Immutable state of a study at one mask version.
#[derive(Debug)]
pub struct Snapshot {
    pub meta: StudyMeta,
    pub volume: Arc<Volume>,
    pub masks: Arc<MaskStack>,
}

impl Snapshot {
    pub fn summary(&self) -> StudySummary {
        StudySummary {
            id: self.meta.id.clone(),
            dims: self.volume.dims(),
            spacing: self.volume.spacing(),
            localization: self.meta.localization.clone(),
            mask_version: self.meta.mask_version,
        }
    }

    /// Axial slices the study is measured over.
    pub fn range(&self) -> (usize, usize) {
        slice_range(&self.volume, self.meta.localization.as_ref())
    }

    pub fn report(&self) -> abdkit::Result<TissueReport> {
        let (s, e) = self.range();
        report_for(&self.volume, &self.masks, s, e)
    }
}

fn slice_range(v: &Volume, loc: Option<&Localization>) -> (usize, usize) {
    loc.map_or((0, v.dims().depth - 1), |l| (l.start, l.end))
}

/// Report over slices `start..=end` of a full-depth mask stack.
pub fn report_for(v: &Volume, masks: &MaskStack, start: usize, end: usize) -> abdkit::Result<TissueReport> {
    quantify(&masks.slices(start, end)?, v, start)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> abdkit::Result<()>) -> StoreResult<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    // keep the extension last so format detection by suffix still works
    let tmp = path.with_file_name(format!(".tmp-{name}"));
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> StoreResult<()> {
    write_atomic(path, |p| {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(p, text).map_err(|e| abdkit::Error::io(p, e))
    })
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub struct Study {
    dir: PathBuf,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl Study {
    /// Writes a new study directory. Without `masks`, the baseline
    /// segmenter labels the localized range (or every slice).
    pub fn create(
        dir: impl Into<PathBuf>,
        id: &str,
        volume: Volume,
        masks: Option<MaskStack>,
        localization: Option<Localization>,
    ) -> StoreResult<Study> {
        let dir = dir.into();
        if !valid_id(id) {
            return Err(StoreError::Invalid(vec![FieldError::new(
                "id",
                "use 1-128 characters from [A-Za-z0-9_-]",
            )]));
        }
        if dir.join(META_FILE).exists() {
            return Err(StoreError::Exists(id.to_string()));
        }
        let d = volume.dims();
        if let Some(l) = &localization {
            abdkit::heatmap::LocLabel::new(l.start, l.end, d.depth)?;
        }
        let masks = match masks {
            Some(m) if m.dims() != d => {
                return Err(StoreError::Invalid(vec![FieldError::new(
                    "masks",
                    format!("mask dims {:?} differ from volume {:?}", m.dims(), d),
                )]))
            }
            Some(m) => m,
            None => {
                let (s, e) = slice_range(&volume, localization.as_ref());
                segment_volume(&volume, s, e, &SegParams::default())?
            }
        };
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        save_volume(dir.join(VOLUME_FILE), &volume)?;
        masks.save(dir.join(INITIAL_MASKS_FILE), volume.spacing())?;
        masks.save(dir.join(MASKS_FILE), volume.spacing())?;
        let log = dir.join(LOG_FILE);
        fs::write(&log, b"").map_err(|e| StoreError::io(&log, e))?;
        let meta = StudyMeta {
            id: id.to_string(),
            localization,
            mask_version: 0,
        };
        write_json(&dir.join(META_FILE), &meta)?;
        Ok(Study::from_parts(dir, meta, volume, masks))
    }

    pub fn open(dir: impl Into<PathBuf>) -> StoreResult<Study> {
        let dir = dir.into();
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| StoreError::io(&meta_path, e))?;
        let meta: StudyMeta = serde_json::from_str(&text).map_err(abdkit::Error::from)?;
        let volume = load_volume(dir.join(VOLUME_FILE))?;
        let masks = MaskStack::load(dir.join(MASKS_FILE), Some(volume.dims()))?;
        Ok(Study::from_parts(dir, meta, volume, masks))
    }

    fn from_parts(dir: PathBuf, meta: StudyMeta, volume: Volume, masks: MaskStack) -> Study {
        Study {
            dir,
            current: RwLock::new(Arc::new(Snapshot {
                meta,
                volume: Arc::new(volume),
                masks: Arc::new(masks),
            })),
            writer: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().expect("snapshot lock").clone()
    }

    /// Persists `masks` as the next version and publishes it.
    fn commit(&self, cur: &Snapshot, masks: MaskStack, action: LogAction) -> StoreResult<u64> {
        let version = cur.meta.mask_version + 1;
        let spacing = cur.volume.spacing();
        write_atomic(&self.dir.join(MASKS_FILE), |p| masks.save(p, spacing))?;
        let entry = LogEntry {
            version,
            timestamp: now_ms(),
            action,
        };
        let log = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_string(&entry).map_err(abdkit::Error::from)?;
        line.push('\n');
        OpenOptions::new()
            .append(true)
            .open(&log)
            .and_then(|mut f| f.write_all(line.as_bytes()).and_then(|_| f.sync_data()))
            .map_err(|e| StoreError::io(&log, e))?;
        let meta = StudyMeta {
            mask_version: version,
            ..cur.meta.clone()
        };
        write_json(&self.dir.join(META_FILE), &meta)?;
        *self.current.write().expect("snapshot lock") = Arc::new(Snapshot {
            meta,
            volume: cur.volume.clone(),
            masks: Arc::new(masks),
        });
        Ok(version)
    }

    /// Applies one edit batch if it was made against the current version.
    /// The whole batch is rejected when any stroke is invalid.
    pub fn apply_edit(&self, batch: &EditBatch) -> StoreResult<u64> {
        let _guard = self.writer.lock().expect("writer lock");
        let cur = self.snapshot();
        if batch.base_version != cur.meta.mask_version {
            return Err(StoreError::Conflict {
                base: batch.base_version,
                current: cur.meta.mask_version,
            });
        }
        let mut masks = (*cur.masks).clone();
        apply_batch(&mut masks, batch).map_err(StoreError::Invalid)?;
        self.commit(&cur, masks, LogAction::Batch(batch.clone()))
    }

    /// Reruns the baseline segmenter over the study range.
    pub fn resegment(&self) -> StoreResult<u64> {
        let _guard = self.writer.lock().expect("writer lock");
        let cur = self.snapshot();
        let (start, end) = cur.range();
        let masks = segment_volume(&cur.volume, start, end, &SegParams::default())?;
        self.commit(&cur, masks, LogAction::Resegment { start, end })
    }

    pub fn edit_log(&self) -> StoreResult<Vec<LogEntry>> {
        let path = self.dir.join(LOG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Core(e.into())))
            .collect()
    }

    /// Rebuilds the mask stack from the initial masks and the edit log.
    pub fn replay(&self) -> StoreResult<MaskStack> {
        let volume = self.snapshot().volume.clone();
        let mut masks = MaskStack::load(self.dir.join(INITIAL_MASKS_FILE), Some(volume.dims()))?;
        for entry in self.edit_log()? {
            match entry.action {
                LogAction::Batch(b) => {
                    apply_batch(&mut masks, &b).map_err(StoreError::Invalid)?;
                }
                LogAction::Resegment { start, end } => {
                    masks = segment_volume(&volume, start, end, &SegParams::default())?;
                }
            }
        }
        Ok(masks)
    }
}

/// All studies under one data root, keyed by id.
pub struct Store {
    root: PathBuf,
    studies: RwLock<BTreeMap<String, Arc<Study>>>,
}

impl Store {
    /// Opens every study directory under `root`, creating `root` if needed.
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Store> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        let mut studies = BTreeMap::new();
        let entries = fs::read_dir(&root).map_err(|e| StoreError::io(&root, e))?;
        for entry in entries {
            let path = entry.map_err(|e| StoreError::io(&root, e))?.path();
            if path.join(META_FILE).is_file() {
                let study = Study::open(&path)?;
                let id = study.snapshot().meta.id.clone();
                studies.insert(id, Arc::new(study));
            }
        }
        Ok(Store {
            root,
            studies: RwLock::new(studies),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&self, id: &str) -> StoreResult<Arc<Study>> {
        self.studies
            .read()
            .expect("study map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    pub fn list(&self) -> Vec<StudySummary> {
        self.studies
            .read()
            .expect("study map lock")
            .values()
            .map(|s| s.snapshot().summary())
            .collect()
    }

    pub fn create(
        &self,
        id: &str,
        volume: Volume,
        masks: Option<MaskStack>,
        localization: Option<Localization>,
    ) -> StoreResult<Arc<Study>> {
        let mut map = self.studies.write().expect("study map lock");
        if map.contains_key(id) {
            return Err(StoreError::Exists(id.to_string()));
        }
        let study = Arc::new(Study::create(self.root.join(id), id, volume, masks, localization)?);
        map.insert(id.to_string(), study.clone());
        Ok(study)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::{Point, Stroke};

    fn volume() -> Volume {
        let dims = Dims::new(3, 8, 8);
        Volume::from_hu(dims, Spacing::new(5.0, 1.0, 1.0).unwrap(), vec![50.0; dims.len()]).unwrap()
    }

    fn batch(base: u64, label: u8, x: f64) -> EditBatch {
        EditBatch {
            base_version: base,
            slice_index: 1,
            strokes: vec![Stroke {
                label,
                brush_radius_px: 1.0,
                points: vec![Point { x, y: 3.0 }],
            }],
        }
    }

    #[test]
    fn edits_version_and_persist() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let study = store
            .create("a", volume(), Some(MaskStack::background(Dims::new(3, 8, 8))), None)
            .unwrap();
        assert_eq!(study.apply_edit(&batch(0, 1, 3.0)).unwrap(), 1);
        assert!(matches!(
            study.apply_edit(&batch(0, 2, 3.0)),
            Err(StoreError::Conflict { base: 0, current: 1 })
        ));
        assert!(matches!(study.apply_edit(&batch(1, 9, 3.0)), Err(StoreError::Invalid(_))));
        assert_eq!(study.snapshot().meta.mask_version, 1);
        assert_eq!(study.apply_edit(&batch(1, 3, 5.0)).unwrap(), 2);

        let reopened = Store::open(dir.path()).unwrap();
        let s = reopened.get("a").unwrap().snapshot();
        assert_eq!(s.meta.mask_version, 2);
        assert_eq!(*s.masks, *study.snapshot().masks);
        assert_eq!(study.replay().unwrap(), *s.masks);
        assert_eq!(study.edit_log().unwrap().len(), 2);
        assert!(matches!(reopened.get("b"), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn create_rejects_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.create("../x", volume(), None, None).is_err());
        assert!(store
            .create("m", volume(), Some(MaskStack::background(Dims::new(2, 8, 8))), None)
            .is_err());
        let loc = Localization {
            start: 2,
            end: 3,
            method: "manual".into(),
        };
        assert!(store.create("l", volume(), None, Some(loc)).is_err());
        store.create("ok", volume(), None, None).unwrap();
        assert!(matches!(store.create("ok", volume(), None, None), Err(StoreError::Exists(_))));
    }

    #[test]
    fn log_line_shape() {
        let e = LogEntry {
            version: 3,
            timestamp: 7,
            action: LogAction::Resegment { start: 1, end: 2 },
        };
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v, serde_json::json!({"version": 3, "timestamp": 7, "resegment": {"start": 1, "end": 2}}));
        let b = LogEntry {
            version: 1,
            timestamp: 0,
            action: LogAction::Batch(batch(0, 1, 1.0)),
        };
        let text = serde_json::to_string(&b).unwrap();
        assert!(text.contains("\"batch\":{\"base_version\":0"));
        assert_eq!(serde_json::from_str::<LogEntry>(&text).unwrap(), b);
    }
}
