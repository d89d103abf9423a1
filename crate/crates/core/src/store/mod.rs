//! Filesystem run repository.
//!
//! Each run lives in `<runs-dir>/<run_id>/`:
//!
//! ```text
//! run.json              RunRecord
//! transcript.jsonl      recorded exchanges
//! plan_original.json    Prescription
//! plan_revised.json     Prescription
//! classifications.json  optional, ClassificationsDocument
//! ratings.json          optional, RatingsDocument
//! metrics.json          optional, MetricReport (complete classification only)
//! ```
//!
//! New runs are assembled in a hidden staging directory and renamed into
//! place, so a visible run directory always has both run.json and its transcript.

mod adjudicate;
mod corpus;
mod report;

pub use adjudicate::{ClassificationSubmission, ConsensusInput, RatingsOutcome, RatingsSubmission};
pub use corpus::{CaseBundle, Corpus};
pub use report::{
    radar_from_store, render_csv, render_table, report_table, CaseGroup, Cell, Column, MetricRow, ReportTable,
};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::case::{read_document, write_json_pretty, DocumentError};
use crate::eval::{ClassificationsDocument, EvalError, MetricReport, RatingsDocument};
use crate::workflow::RunRecord;

pub const RUN_FILE: &str = "run.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const PLAN_ORIGINAL_FILE: &str = "plan_original.json";
pub const PLAN_REVISED_FILE: &str = "plan_revised.json";
pub const CLASSIFICATIONS_FILE: &str = "classifications.json";
pub const RATINGS_FILE: &str = "ratings.json";
pub const METRICS_FILE: &str = "metrics.json";

const STAGING_PREFIX: &str = ".staging-";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("run `{0}` not found")]
    NotFound(String),
    #[error("run `{0}` already exists")]
    AlreadyExists(String),
    #[error("invalid run id `{0}` (use letters, digits, `.`, `_` and `-`; no leading dot)")]
    InvalidRunId(String),
    #[error("case `{0}` is not in the corpus")]
    UnknownCase(String),
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Recorded,
    Classified,
    Rated,
    Complete,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIndexEntry {
    pub run_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<crate::workflow::PipelineKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Why the directory is invalid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

pub fn validate_run_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidRunId(id.into()))
    }
}

/// Writes via a sibling temp file and rename.
pub fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    write_json_pretty(&tmp, value).map_err(|e| StoreError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    /// Opens a runs directory, creating it if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn file(&self, run_id: &str, name: &str) -> PathBuf {
        self.run_dir(run_id).join(name)
    }

    pub fn exists(&self, run_id: &str) -> bool {
        validate_run_id(run_id).is_ok() && self.file(run_id, RUN_FILE).is_file()
    }

    /// Starts a new run; the directory becomes visible on [`StagedRun::commit`].
    pub fn begin(&self, run_id: &str) -> Result<StagedRun, StoreError> {
        validate_run_id(run_id)?;
        let final_dir = self.run_dir(run_id);
        if final_dir.exists() {
            return Err(StoreError::AlreadyExists(run_id.into()));
        }
        let staging = self.root.join(format!("{STAGING_PREFIX}{run_id}-{}", std::process::id()));
        if staging.exists() {
            std::fs::remove_dir_all(&staging).map_err(|e| StoreError::io(&staging, e))?;
        }
        std::fs::create_dir(&staging).map_err(|e| StoreError::io(&staging, e))?;
        Ok(StagedRun { run_id: run_id.into(), staging, final_dir, committed: false })
    }

    fn require(&self, run_id: &str) -> Result<(), StoreError> {
        if self.exists(run_id) {
            Ok(())
        } else {
            Err(StoreError::NotFound(run_id.into()))
        }
    }

    pub fn load_run(&self, run_id: &str) -> Result<RunRecord, StoreError> {
        self.require(run_id)?;
        Ok(read_document(&self.file(run_id, RUN_FILE))?)
    }

    /// Raw stored document, for serving byte-for-byte.
    pub fn read_raw(&self, run_id: &str, name: &str) -> Result<Option<String>, StoreError> {
        self.require(run_id)?;
        let path = self.file(run_id, name);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::io(&path, e)),
        }
    }

    fn load_optional<T: DeserializeOwned>(&self, run_id: &str, name: &str) -> Result<Option<T>, StoreError> {
        self.require(run_id)?;
        match read_document(&self.file(run_id, name)) {
            Ok(doc) => Ok(Some(doc)),
            Err(DocumentError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn load_classifications(&self, run_id: &str) -> Result<ClassificationsDocument, StoreError> {
        Ok(self.load_optional(run_id, CLASSIFICATIONS_FILE)?.unwrap_or_else(|| ClassificationsDocument::new(run_id)))
    }

    pub fn save_classifications(&self, run_id: &str, doc: &ClassificationsDocument) -> Result<(), StoreError> {
        self.require(run_id)?;
        write_atomic(&self.file(run_id, CLASSIFICATIONS_FILE), doc)
    }

    pub fn load_ratings(&self, run_id: &str) -> Result<RatingsDocument, StoreError> {
        Ok(self.load_optional(run_id, RATINGS_FILE)?.unwrap_or_else(|| RatingsDocument::new(run_id)))
    }

    pub fn save_ratings(&self, run_id: &str, doc: &RatingsDocument) -> Result<(), StoreError> {
        self.require(run_id)?;
        write_atomic(&self.file(run_id, RATINGS_FILE), doc)
    }

    pub fn load_metrics(&self, run_id: &str) -> Result<Option<MetricReport>, StoreError> {
        self.load_optional(run_id, METRICS_FILE)
    }

    /// Scores the run from its stored files. A complete classification is
    /// persisted to metrics.json; a partial one (with `allow_partial`) is
    /// returned as provisional and any stale metrics.json is removed.
    pub fn evaluate_run(&self, run_id: &str, corpus: &Corpus, allow_partial: bool) -> Result<MetricReport, StoreError> {
        let report = self.score_run(run_id, corpus, allow_partial)?;
        let path = self.file(run_id, METRICS_FILE);
        if report.provisional {
            match std::fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(StoreError::io(&path, e)),
            }
        } else {
            write_atomic(&path, &report)?;
        }
        Ok(report)
    }

    pub fn status(&self, run_id: &str) -> RunIndexEntry {
        let mut entry = RunIndexEntry {
            run_id: run_id.into(),
            status: RunStatus::Invalid,
            case_id: None,
            pipeline: None,
            model_id: None,
            problem: None,
        };
        let record: RunRecord = match read_document(&self.file(run_id, RUN_FILE)) {
            Ok(r) => r,
            Err(e) => {
                entry.problem = Some(e.to_string());
                return entry;
            }
        };
        entry.case_id = Some(record.case_id.clone());
        entry.pipeline = Some(record.pipeline);
        entry.model_id = Some(record.model_id.clone());
        if record.run_id != run_id {
            entry.problem = Some(format!("run.json names run `{}`", record.run_id));
            return entry;
        }
        if !self.file(run_id, TRANSCRIPT_FILE).is_file() {
            entry.problem = Some(format!("{TRANSCRIPT_FILE} is missing"));
            return entry;
        }
        let classified = self.file(run_id, METRICS_FILE).is_file();
        let rated = self.file(run_id, RATINGS_FILE).is_file();
        entry.status = match (classified, rated) {
            (false, false) => RunStatus::Recorded,
            (true, false) => RunStatus::Classified,
            (false, true) => RunStatus::Rated,
            (true, true) => RunStatus::Complete,
        };
        entry
    }

    /// Every run directory, sorted by id. Broken directories are listed as
    /// invalid rather than failing the listing.
    pub fn list_runs(&self) -> Result<Vec<RunIndexEntry>, StoreError> {
        let reader = std::fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        let mut ids = Vec::new();
        for item in reader {
            let item = item.map_err(|e| StoreError::io(&self.root, e))?;
            let Some(name) = item.file_name().to_str().map(str::to_string) else { continue };
            if name.starts_with('.') || !item.path().is_dir() {
                continue;
            }
            ids.push(name);
        }
        ids.sort();
        Ok(ids.iter().map(|id| self.status(id)).collect())
    }
}

/// A run being written. Dropping it without committing discards the files.
#[derive(Debug)]
pub struct StagedRun {
    run_id: String,
    staging: PathBuf,
    final_dir: PathBuf,
    committed: bool,
}

impl StagedRun {
    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    /// Where the gateway should record the transcript.
    pub fn transcript_path(&self) -> PathBuf {
        self.staging.join(TRANSCRIPT_FILE)
    }

    /// Writes run.json and both plans, then moves the directory into place.
    pub fn commit(mut self, record: &RunRecord) -> Result<PathBuf, StoreError> {
        let transcript = self.transcript_path();
        if !transcript.is_file() {
            return Err(StoreError::io(
                &transcript,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no transcript was recorded"),
            ));
        }
        let mut record = record.clone();
        record.transcript = Some(TRANSCRIPT_FILE.into());
        put(&self.staging, PLAN_ORIGINAL_FILE, &record.original_plan)?;
        put(&self.staging, PLAN_REVISED_FILE, &record.revised_plan)?;
        put(&self.staging, RUN_FILE, &record)?;
        if self.final_dir.exists() {
            return Err(StoreError::AlreadyExists(self.run_id.clone()));
        }
        std::fs::rename(&self.staging, &self.final_dir).map_err(|e| StoreError::io(&self.final_dir, e))?;
        self.committed = true;
        Ok(self.final_dir.clone())
    }
}

impl Drop for StagedRun {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.staging);
        }
    }
}

fn put<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), StoreError> {
    let path = dir.join(name);
    write_json_pretty(&path, value).map_err(|e| StoreError::io(&path, e))
}
