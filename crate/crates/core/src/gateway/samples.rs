//! Append-only sample log, one JSON object per line.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SAMPLES_FILE: &str = "samples.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Sample(SampleLogEntry),
    /// A scheduled sample that could not be taken.
    Gap {
        internal_id: u64,
        uri: String,
        timestamp: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLogEntry {
    pub internal_id: u64,
    pub uri: String,
    pub value: Value,
    pub timestamp: u64,
}

#[derive(Debug, Default)]
pub struct SampleLog {
    path: Option<PathBuf>,
    lines: Vec<LogLine>,
}

impl SampleLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens `<dir>/samples.jsonl`, replaying existing lines. Unparseable lines are skipped.
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        let path = dir.join(SAMPLES_FILE);
        let mut lines = Vec::new();
        match fs::File::open(&path) {
            Ok(file) => {
                for line in BufReader::new(file).lines() {
                    if let Ok(entry) = serde_json::from_str::<LogLine>(&line?) {
                        lines.push(entry);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        Ok(Self {
            path: Some(path),
            lines,
        })
    }

    pub fn append(&mut self, line: LogLine) -> std::io::Result<()> {
        if let Some(path) = &self.path {
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut text = serde_json::to_string(&line).expect("log line serializes");
            text.push('\n');
            file.write_all(text.as_bytes())?;
        }
        self.lines.push(line);
        Ok(())
    }

    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn samples_for(&self, internal_id: u64, uri: &str) -> Vec<SampleLogEntry> {
        self.lines
            .iter()
            .filter_map(|l| match l {
                LogLine::Sample(s) if s.internal_id == internal_id && s.uri == uri => {
                    Some(s.clone())
                }
                _ => None,
            })
            .collect()
    }

    pub fn gap_count(&self, internal_id: u64, uri: &str) -> usize {
        self.lines
            .iter()
            .filter(|l| matches!(l, LogLine::Gap { internal_id: i, uri: u, .. } if *i == internal_id && u == uri))
            .count()
    }
}
