//! JSONL transcripts: one header line, then one line per completed exchange.

use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::{ChatRequest, ChatResponse, GatewayError};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub schema_version: u32,
    pub run_id: String,
    pub created_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub sequence: u64,
    pub agent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub request_digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
    pub timestamp_ms: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(TranscriptHeader),
    Entry(Box<TranscriptEntry>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptSummary {
    pub run_id: String,
    pub path: PathBuf,
    pub entries: u64,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn storage(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::StorageFailure(format!("{}: {e}", path.display()))
}

/// Single-writer transcript for one run.
pub struct RecordingSession {
    run_id: String,
    path: PathBuf,
    writer: BufWriter<File>,
    next_sequence: u64,
}

impl RecordingSession {
    /// Opens a fresh transcript; fails if the file already exists.
    pub fn create(path: impl AsRef<Path>, run_id: impl Into<String>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let run_id = run_id.into();
        let file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                storage(&path, format!("a recording for run `{run_id}` already exists"))
            } else {
                storage(&path, e)
            }
        })?;
        let mut session =
            RecordingSession { run_id: run_id.clone(), path, writer: BufWriter::new(file), next_sequence: 1 };
        session.write_line(&Line::Header(TranscriptHeader {
            schema_version: SCHEMA_VERSION,
            run_id,
            created_at_ms: now_ms(),
        }))?;
        Ok(session)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    fn write_line(&mut self, line: &Line) -> Result<(), GatewayError> {
        let json = serde_json::to_string(line).map_err(|e| storage(&self.path, e))?;
        writeln!(self.writer, "{json}").map_err(|e| storage(&self.path, e))?;
        self.writer.flush().map_err(|e| storage(&self.path, e))
    }

    pub fn append(
        &mut self,
        agent_id: &str,
        round: Option<u32>,
        request: &ChatRequest,
        response: &ChatResponse,
    ) -> Result<(), GatewayError> {
        let entry = TranscriptEntry {
            sequence: self.next_sequence,
            agent_id: agent_id.to_string(),
            round,
            request_digest: request.digest(),
            request: request.clone(),
            response: response.clone(),
            timestamp_ms: now_ms(),
        };
        self.write_line(&Line::Entry(Box::new(entry)))?;
        self.next_sequence += 1;
        Ok(())
    }

    pub fn close(mut self) -> Result<TranscriptSummary, GatewayError> {
        self.writer.flush().map_err(|e| storage(&self.path, e))?;
        self.writer.get_ref().sync_all().map_err(|e| storage(&self.path, e))?;
        Ok(TranscriptSummary { run_id: self.run_id, path: self.path, entries: self.next_sequence - 1 })
    }
}

/// Reads and checks a transcript: header first, sequences strictly increasing.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<(TranscriptHeader, Vec<TranscriptEntry>), GatewayError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| storage(path, e))?;
    let mut header = None;
    let mut entries: Vec<TranscriptEntry> = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| storage(path, format!("line {}: {e}", index + 1)))?;
        match parsed {
            Line::Header(h) if header.is_none() && entries.is_empty() => header = Some(h),
            Line::Header(_) => return Err(storage(path, format!("line {}: unexpected header", index + 1))),
            Line::Entry(_) if header.is_none() => return Err(storage(path, "transcript does not start with a header")),
            Line::Entry(e) => {
                if let Some(last) = entries.last() {
                    if e.sequence <= last.sequence {
                        return Err(storage(
                            path,
                            format!("line {}: sequence {} not increasing", index + 1, e.sequence),
                        ));
                    }
                }
                entries.push(*e);
            }
        }
    }
    let header = header.ok_or_else(|| storage(path, "empty transcript"))?;
    Ok((header, entries))
}
