//! Session archive: NDJSON with a header line, then raw samples, sync ticks
//! and log events in the order they happened, then a trailer holding the
//! line count and the SHA-256 of every byte before it.
//!
//! ```text
//! {"type":"header","v":1,"session_id":..,"mode":..,"k":2,..}
//! {"stream":"eeg","ts_us":0,"values":[..]}           raw sample, recording format
//! {"type":"tick","clock_us":1000000}                  the merger was polled here
//! {"type":"event","seq":0,"ts_us":..,"kind":..,..}    log event
//! {"type":"trailer","lines":N,"sha256":"..."}
//! ```

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::events::{Event, SessionMode};
use crate::features::FeatureConfig;
use crate::sim::ScenarioScript;
use crate::stream::{read_record_line, write_record_line, Micros, TimestampedSample};

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub v: u32,
    pub session_id: String,
    pub mode: SessionMode,
    pub k: usize,
    pub history_turns: usize,
    pub features: FeatureConfig,
    pub model_sha256: String,
    pub scenario: Option<ScenarioScript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ControlLine {
    Header(ArchiveHeader),
    Tick { clock_us: Micros },
    Event(Event),
    Trailer { lines: u64, sha256: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchiveItem {
    Sample { stream: String, sample: TimestampedSample },
    Tick { clock_us: Micros },
    Event(Event),
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("archive line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("archive is truncated; last valid line is {last_valid_line}")]
    Truncated { last_valid_line: usize },
    #[error("archive checksum mismatch: trailer says {expected}, content hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("archive version {0} is not supported")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes archive lines while hashing them.
pub struct ArchiveWriter<W: Write> {
    out: W,
    hasher: Sha256,
    lines: u64,
    buf: Vec<u8>,
}

impl<W: Write> ArchiveWriter<W> {
    pub fn new(out: W, header: &ArchiveHeader) -> io::Result<Self> {
        let mut w = Self {
            out,
            hasher: Sha256::new(),
            lines: 0,
            buf: Vec::with_capacity(256),
        };
        w.control(&ControlLine::Header(header.clone()))?;
        Ok(w)
    }

    fn emit(&mut self) -> io::Result<()> {
        self.hasher.update(&self.buf);
        self.out.write_all(&self.buf)?;
        self.lines += 1;
        self.buf.clear();
        Ok(())
    }

    fn control(&mut self, line: &ControlLine) -> io::Result<()> {
        serde_json::to_writer(&mut self.buf, line)?;
        self.buf.push(b'\n');
        self.emit()
    }

    pub fn sample(&mut self, stream: &str, sample: &TimestampedSample) -> io::Result<()> {
        write_record_line(&mut self.buf, stream, sample)?;
        self.emit()
    }

    pub fn tick(&mut self, clock_us: Micros) -> io::Result<()> {
        self.control(&ControlLine::Tick { clock_us })
    }

    pub fn event(&mut self, e: &Event) -> io::Result<()> {
        self.control(&ControlLine::Event(e.clone()))
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    /// Writes the trailer and hands back the sink.
    pub fn finish(mut self) -> io::Result<W> {
        let sha256 = hex::encode(self.hasher.clone().finalize());
        let trailer = ControlLine::Trailer {
            lines: self.lines,
            sha256,
        };
        serde_json::to_writer(&mut self.buf, &trailer)?;
        self.buf.push(b'\n');
        self.out.write_all(&self.buf)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub header: ArchiveHeader,
    pub items: Vec<ArchiveItem>,
}

impl Archive {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.items.iter().filter_map(|i| match i {
            ArchiveItem::Event(e) => Some(e),
            _ => None,
        })
    }

    /// Reads and verifies a whole archive.
    pub fn read<R: BufRead>(mut reader: R) -> Result<Self, ArchiveError> {
        let mut hasher = Sha256::new();
        let mut header = None;
        let mut items = Vec::new();
        let mut raw = Vec::new();
        let mut line_no = 0usize;
        loop {
            raw.clear();
            if reader.read_until(b'\n', &mut raw)? == 0 {
                return Err(ArchiveError::Truncated {
                    last_valid_line: line_no,
                });
            }
            line_no += 1;
            let complete = raw.last() == Some(&b'\n');
            let corrupt = |message: String| {
                if complete {
                    ArchiveError::Corrupt {
                        line: line_no,
                        message,
                    }
                } else {
                    ArchiveError::Truncated {
                        last_valid_line: line_no - 1,
                    }
                }
            };
            let text = std::str::from_utf8(&raw).map_err(|e| corrupt(e.to_string()))?;
            if !complete {
                return Err(corrupt(String::new()));
            }
            if text.starts_with("{\"stream\"") {
                let (stream, sample) = read_record_line(text).map_err(|e| corrupt(e.to_string()))?;
                if header.is_none() {
                    return Err(corrupt("sample before header".into()));
                }
                hasher.update(&raw);
                items.push(ArchiveItem::Sample { stream, sample });
                continue;
            }
            let control: ControlLine =
                serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
            match control {
                ControlLine::Header(h) => {
                    if header.is_some() || line_no != 1 {
                        return Err(corrupt("unexpected header".into()));
                    }
                    if h.v != ARCHIVE_VERSION {
                        return Err(ArchiveError::Version(h.v));
                    }
                    header = Some(h);
                }
                ControlLine::Trailer { lines, sha256 } => {
                    let actual = hex::encode(hasher.finalize());
                    if lines != (line_no - 1) as u64 {
                        return Err(corrupt(format!(
                            "trailer counts {lines} lines, found {}",
                            line_no - 1
                        )));
                    }
                    if actual != sha256 {
                        return Err(ArchiveError::Checksum {
                            expected: sha256,
                            actual,
                        });
                    }
                    let header = header.ok_or_else(|| ArchiveError::Corrupt {
                        line: 1,
                        message: "missing header".into(),
                    })?;
                    return Ok(Archive { header, items });
                }
                ControlLine::Tick { clock_us } => items.push(ArchiveItem::Tick { clock_us }),
                ControlLine::Event(e) => items.push(ArchiveItem::Event(e)),
            }
            if header.is_none() {
                return Err(corrupt("missing header".into()));
            }
            hasher.update(&raw);
        }
    }

    pub fn read_bytes(bytes: &[u8]) -> Result<Self, ArchiveError> {
        Self::read(bytes)
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self, ArchiveError> {
        let f = std::fs::File::open(path)?;
        Self::read(io::BufReader::new(f))
    }
}
