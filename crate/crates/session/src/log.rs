//! JSON Lines session record.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::session::SessionEvent;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot open session log {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
}

/// Buffered writer that stops after the first I/O error and keeps it for
/// the caller to report.
pub struct EventSink {
    out: Option<BufWriter<Box<dyn Write + Send>>>,
    failure: Option<String>,
    reported: bool,
    written: u64,
}

impl EventSink {
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let file = File::create(path).map_err(|source| LogError::Open { path: path.to_owned(), source })?;
        Ok(Self::from_writer(Box::new(file)))
    }

    pub fn from_writer(w: Box<dyn Write + Send>) -> Self {
        Self { out: Some(BufWriter::new(w)), failure: None, reported: false, written: 0 }
    }

    pub fn disabled() -> Self {
        Self { out: None, failure: None, reported: true, written: 0 }
    }

    pub fn write(&mut self, event: &SessionEvent) {
        if self.out.is_some() {
            self.write_line(&serde_json::to_string(event).expect("events serialize"));
        }
    }

    /// Appends one already-serialized event.
    pub fn write_line(&mut self, line: &str) {
        let Some(out) = self.out.as_mut() else { return };
        let res = out.write_all(line.as_bytes()).and_then(|_| out.write_all(b"\n"));
        match res {
            Ok(()) => self.written += 1,
            Err(e) => self.fail(e),
        }
    }

    pub fn flush(&mut self) {
        if let Some(out) = self.out.as_mut() {
            if let Err(e) = out.flush() {
                self.fail(e);
            }
        }
    }

    fn fail(&mut self, e: io::Error) {
        self.out = None;
        self.failure = Some(e.to_string());
    }

    /// The sink error, returned once.
    pub fn take_failure(&mut self) -> Option<String> {
        if self.reported {
            return None;
        }
        let f = self.failure.clone()?;
        self.reported = true;
        Some(f)
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn lines_written(&self) -> u64 {
        self.written
    }
}

pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Open { path: path.to_owned(), source })?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Read { path: path.to_owned(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let ev = serde_path_to_error::deserialize(&mut de).map_err(|e| LogError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: format!("at {}: {}", e.path(), e.inner()),
        })?;
        events.push(ev);
    }
    Ok(events)
}
