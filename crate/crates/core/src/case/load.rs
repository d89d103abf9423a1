use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ConflictLexicon, GoldStandard, PatientCase};
use crate::SCHEMA_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("{}: not found", path.display())]
    NotFound { path: PathBuf },
    #[error("{}:{line}:{column}: malformed document: {message}", path.display())]
    MalformedDocument { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{}: invariant violated: {rule}", path.display())]
    InvariantViolation { path: PathBuf, rule: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DocumentError {
    pub fn invariant(path: &Path, rule: impl Into<String>) -> Self {
        DocumentError::InvariantViolation { path: path.to_path_buf(), rule: rule.into() }
    }
}

pub(crate) fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T, DocumentError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DocumentError::NotFound { path: path.to_path_buf() }
        } else {
            DocumentError::Io { path: path.to_path_buf(), source }
        }
    })?;
    parse_document(path, &text)
}

pub(crate) fn parse_document<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, DocumentError> {
    serde_json::from_str(text).map_err(|e| DocumentError::MalformedDocument {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn check_version(path: &Path, version: u32) -> Result<(), DocumentError> {
    if version != SCHEMA_VERSION {
        return Err(DocumentError::invariant(
            path,
            format!("unsupported schema_version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

/// Loads and validates a `case.json` document.
pub fn load_case(path: impl AsRef<Path>) -> Result<PatientCase, DocumentError> {
    let path = path.as_ref();
    let mut case: PatientCase = read_document(path)?;
    check_version(path, case.schema_version)?;
    case.normalize();
    case.validate().map_err(|rule| DocumentError::invariant(path, rule))?;
    Ok(case)
}

/// Loads and validates a `gold.json` document.
pub fn load_gold(path: impl AsRef<Path>) -> Result<GoldStandard, DocumentError> {
    let path = path.as_ref();
    let gold: GoldStandard = read_document(path)?;
    check_version(path, gold.schema_version)?;
    gold.validate().map_err(|rule| DocumentError::invariant(path, rule))?;
    Ok(gold)
}

/// Loads and validates a `lexicon.json` document.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<ConflictLexicon, DocumentError> {
    let path = path.as_ref();
    let mut lexicon: ConflictLexicon = read_document(path)?;
    check_version(path, lexicon.schema_version)?;
    lexicon.normalize();
    lexicon.validate().map_err(|rule| DocumentError::invariant(path, rule))?;
    Ok(lexicon)
}

/// Pretty JSON with a trailing newline; the byte layout is stable for equal values.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()
}
