//! Append-only JSONL session logs.
//!
//! The first line is a [`LogHeader`]; every following line is one
//! [`TrialRecord`], written and flushed as soon as the trial finishes.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::harness::TrialResult;
use crate::space::JobSpec;

pub const LOG_SCHEMA: &str = "crashtune-log";
pub const LOG_VERSION: u32 = 1;

/// Fields that vary between otherwise identical runs.
pub const VOLATILE_FIELDS: [&str; 5] = ["build_seconds", "test_seconds", "propose_seconds", "eval_seconds", "timestamp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub fingerprint: String,
    pub seed: u64,
    pub job: JobSpec,
}

impl LogHeader {
    pub fn new(job: &JobSpec) -> Self {
        Self {
            schema: LOG_SCHEMA.into(),
            version: LOG_VERSION,
            fingerprint: job.fingerprint(),
            seed: job.seed,
            job: job.clone(),
        }
    }
}

/// Per-iteration timing, kept alongside the trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// Strategy time since the previous evaluation finished (observe + propose).
    pub propose_seconds: f64,
    pub eval_seconds: f64,
    /// Seconds since the Unix epoch when the trial finished.
    pub timestamp: f64,
}

impl Timing {
    pub fn now(propose_seconds: f64, eval_seconds: f64) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            propose_seconds,
            eval_seconds,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub result: TrialResult,
    #[serde(flatten)]
    pub timing: Timing,
}

/// Parsed log contents.
#[derive(Debug, Clone)]
pub struct LogContents {
    pub header: LogHeader,
    pub records: Vec<TrialRecord>,
    /// Byte length of the intact prefix (header plus parsed records).
    pub intact_len: u64,
    /// Whether a corrupt final line was dropped.
    pub truncated: bool,
}

fn corrupt(path: &Path, msg: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::CorruptLog(format!("{}: {msg}", path.display()))
}

/// Read a log. A malformed final line is dropped with a warning; a malformed
/// line anywhere else is an error.
pub fn read_log(path: &Path) -> Result<LogContents, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
    let mut offset = 0u64;
    let mut lines = Vec::new();
    for piece in text.split_inclusive('\n') {
        lines.push((offset, piece));
        offset += piece.len() as u64;
    }
    let Some(&(_, first)) = lines.first() else {
        return Err(corrupt(path, "empty log"));
    };
    let header: LogHeader = serde_json::from_str(first.trim_end()).map_err(|e| corrupt(path, format!("header: {e}")))?;
    if header.schema != LOG_SCHEMA || header.version != LOG_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported log schema {} v{}", header.schema, header.version),
        ));
    }
    let mut intact_len = first.len() as u64;
    let mut records = Vec::new();
    let mut truncated = false;
    let body: Vec<_> = lines[1..].iter().filter(|(_, l)| !l.trim().is_empty()).collect();
    for (k, &&(start, line)) in body.iter().enumerate() {
        match serde_json::from_str::<TrialRecord>(line.trim_end()) {
            Ok(r) => {
                records.push(r);
                intact_len = start + line.len() as u64;
            }
            Err(_) if k + 1 == body.len() => {
                warn!("{}: dropping corrupt final line {}", path.display(), k + 2);
                truncated = true;
            }
            Err(e) => return Err(corrupt(path, format!("line {}: {e}", k + 2))),
        }
    }
    Ok(LogContents {
        header,
        records,
        intact_len,
        truncated,
    })
}

/// Buffered appender that flushes after every line.
#[derive(Debug)]
pub struct LogWriter {
    out: BufWriter<File>,
}

impl LogWriter {
    /// Start a new log, replacing any existing file.
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, OrchestratorError> {
        let file = File::create(path).map_err(|e| OrchestratorError::Io(format!("{}: {e}", path.display())))?;
        let mut w = Self { out: BufWriter::new(file) };
        w.write_json(header)?;
        Ok(w)
    }

    /// Append to an existing log, first cutting it back to `intact_len` bytes.
    pub fn append(path: &Path, intact_len: u64) -> Result<Self, OrchestratorError> {
        let io = |e: std::io::Error| OrchestratorError::Io(format!("{}: {e}", path.display()));
        let file = OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
        file.set_len(intact_len).map_err(io)?;
        let mut file = OpenOptions::new().append(true).open(path).map_err(io)?;
        let text = std::fs::read(path).map_err(io)?;
        if text.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(Self { out: BufWriter::new(file) })
    }

    fn write_json<S: Serialize>(&mut self, value: &S) -> Result<(), OrchestratorError> {
        let io = |e: std::io::Error| OrchestratorError::Io(e.to_string());
        serde_json::to_writer(&mut self.out, value).map_err(|e| OrchestratorError::Io(e.to_string()))?;
        self.out.write_all(b"\n").map_err(io)?;
        self.out.flush().map_err(io)
    }

    pub fn write(&mut self, record: &TrialRecord) -> Result<(), OrchestratorError> {
        self.write_json(record)
    }
}

/// Log lines as JSON values with [`VOLATILE_FIELDS`] removed, for comparing runs.
pub fn canonical_lines(path: &Path) -> Result<Vec<serde_json::Value>, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Io(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).map_err(|e| corrupt(path, e))?;
            if let Some(obj) = v.as_object_mut() {
                for f in VOLATILE_FIELDS {
                    obj.remove(f);
                }
            }
            Ok(v)
        })
        .collect()
}
