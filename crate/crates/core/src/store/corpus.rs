use std::path::{Path, PathBuf};

use super::StoreError;
use crate::case::{load_case, load_gold, load_lexicon, ConflictLexicon, DocumentError, GoldStandard, PatientCase};

/// A case with its gold standard and conflict lexicon.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub case: PatientCase,
    pub gold: GoldStandard,
    pub lexicon: ConflictLexicon,
}

/// Benchmark cases on disk: `<corpus>/<case_id>/{case,gold,lexicon}.json`.
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
}

impl Corpus {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(StoreError::Io {
                path: root,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
            });
        }
        Ok(Corpus { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn case_dir(&self, case_id: &str) -> PathBuf {
        self.root.join(case_id)
    }

    /// Ids of every directory holding a case.json, sorted.
    pub fn case_ids(&self) -> Result<Vec<String>, StoreError> {
        let reader = std::fs::read_dir(&self.root).map_err(|e| StoreError::io(&self.root, e))?;
        let mut ids: Vec<String> = reader
            .filter_map(Result::ok)
            .filter(|e| e.path().join("case.json").is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn path(&self, case_id: &str, file: &str) -> Result<PathBuf, StoreError> {
        super::validate_run_id(case_id).map_err(|_| StoreError::UnknownCase(case_id.into()))?;
        let dir = self.case_dir(case_id);
        if !dir.join("case.json").is_file() {
            return Err(StoreError::UnknownCase(case_id.into()));
        }
        Ok(dir.join(file))
    }

    pub fn case_path(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        self.path(case_id, "case.json")
    }

    pub fn gold_path(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        self.path(case_id, "gold.json")
    }

    pub fn lexicon_path(&self, case_id: &str) -> Result<PathBuf, StoreError> {
        self.path(case_id, "lexicon.json")
    }

    /// Loads all three documents and checks they name the same case.
    pub fn load(&self, case_id: &str) -> Result<CaseBundle, StoreError> {
        let mut case = load_case(self.case_path(case_id)?)?;
        let gold_path = self.gold_path(case_id)?;
        let gold = load_gold(&gold_path)?;
        let lexicon_path = self.lexicon_path(case_id)?;
        let lexicon = load_lexicon(&lexicon_path)?;
        for (path, id) in [(&gold_path, &gold.case_id), (&lexicon_path, &lexicon.case_id)] {
            if *id != case.case_id {
                return Err(DocumentError::invariant(
                    path,
                    format!("case_id `{id}` does not match case `{}`", case.case_id),
                )
                .into());
            }
        }
        if case.case_id != case_id {
            return Err(DocumentError::invariant(
                &self.case_path(case_id)?,
                format!("directory `{case_id}` holds case `{}`", case.case_id),
            )
            .into());
        }
        case.canonicalize(&lexicon);
        Ok(CaseBundle { case, gold, lexicon })
    }
}
