use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};
use crate::hash::fingerprint128;

/// One image-text pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub uid: String,
    #[serde(default)]
    pub alt_text: String,
    #[serde(default)]
    pub image_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_coverage: Option<f64>,
    /// Assigned by the reader, not stored in the manifest line.
    #[serde(skip)]
    pub shard_id: u32,
}

impl SampleRecord {
    pub fn new(uid: impl Into<String>, alt_text: impl Into<String>, image_ref: impl Into<String>) -> Self {
        SampleRecord {
            uid: uid.into(),
            alt_text: alt_text.into(),
            image_ref: image_ref.into(),
            clip_score: None,
            text_coverage: None,
            shard_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_uid(&self.uid)?;
        if let Some(c) = self.clip_score {
            if !c.is_finite() {
                return Err(SieveError::NonFinite {
                    uid: self.uid.clone(),
                });
            }
        }
        if let Some(t) = self.text_coverage {
            if !(0.0..=1.0).contains(&t) {
                return Err(SieveError::Domain(format!(
                    "text_coverage {t} for uid {:?} outside [0,1]",
                    self.uid
                )));
            }
        }
        Ok(())
    }
}

/// uids are opaque keys, but they must be non-empty and fit on one line of
/// the selection format.
pub fn validate_uid(uid: &str) -> Result<()> {
    if uid.is_empty() {
        return Err(SieveError::Invariant("empty uid".into()));
    }
    if uid.contains(['\n', '\r']) {
        return Err(SieveError::Invariant(format!("uid {uid:?} contains a line break")));
    }
    Ok(())
}

/// How the manifest reader detects duplicate uids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuplicateCheck {
    /// Input must be strictly uid-ascending; constant memory.
    Sorted,
    /// Any order; keeps a 16-byte fingerprint per record.
    Fingerprint,
}

pub struct ManifestReader<R> {
    source: PathBuf,
    lines: std::io::Lines<R>,
    line_no: u64,
    count: u64,
    shard_id: u32,
    check: DuplicateCheck,
    seen: HashSet<u128>,
    prev_uid: Option<String>,
    failed: bool,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(reader: R, source: impl Into<PathBuf>, check: DuplicateCheck) -> Self {
        ManifestReader {
            source: source.into(),
            lines: reader.lines(),
            line_no: 0,
            count: 0,
            shard_id: 0,
            check,
            seen: HashSet::new(),
            prev_uid: None,
            failed: false,
        }
    }

    pub fn with_shard_id(mut self, shard_id: u32) -> Self {
        self.shard_id = shard_id;
        self
    }

    /// Records yielded so far; the total once the stream is exhausted.
    pub fn records_read(&self) -> u64 {
        self.count
    }

    fn parse_line(&mut self, line: &str) -> Result<SampleRecord> {
        let mut record: SampleRecord =
            serde_json::from_str(line).map_err(|e| SieveError::Parse {
                path: self.source.clone(),
                line: self.line_no,
                message: e.to_string(),
            })?;
        record.shard_id = self.shard_id;
        record.validate().map_err(|e| SieveError::Parse {
            path: self.source.clone(),
            line: self.line_no,
            message: e.to_string(),
        })?;
        match self.check {
            DuplicateCheck::Sorted => {
                if let Some(prev) = &self.prev_uid {
                    match prev.as_str().cmp(record.uid.as_str()) {
                        std::cmp::Ordering::Less => {}
                        std::cmp::Ordering::Equal => {
                            return Err(SieveError::DuplicateUid {
                                uid: record.uid,
                                line: self.line_no,
                            })
                        }
                        std::cmp::Ordering::Greater => {
                            return Err(SieveError::Order {
                                prev: prev.clone(),
                                next: record.uid,
                            })
                        }
                    }
                }
                self.prev_uid = Some(record.uid.clone());
            }
            DuplicateCheck::Fingerprint => {
                if !self.seen.insert(fingerprint128(record.uid.as_bytes())) {
                    return Err(SieveError::DuplicateUid {
                        uid: record.uid,
                        line: self.line_no,
                    });
                }
            }
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<SampleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(SieveError::io(&self.source, e)));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let out = self.parse_line(&line);
            match &out {
                Ok(_) => self.count += 1,
                Err(_) => self.failed = true,
            }
            return Some(out);
        }
    }
}

/// Streams a `*.manifest.jsonl` file in any uid order.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<ManifestReader<BufReader<File>>> {
    open_manifest(path, DuplicateCheck::Fingerprint)
}

/// Streams a uid-sorted manifest in constant memory; out-of-order lines are
/// an error.
pub fn read_sorted_manifest(path: impl AsRef<Path>) -> Result<ManifestReader<BufReader<File>>> {
    open_manifest(path, DuplicateCheck::Sorted)
}

fn open_manifest(path: impl AsRef<Path>, check: DuplicateCheck) -> Result<ManifestReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
    Ok(ManifestReader::new(BufReader::new(file), path, check))
}

pub fn write_manifest<'a>(
    records: impl IntoIterator<Item = &'a SampleRecord>,
    path: impl AsRef<Path>,
) -> Result<u64> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| SieveError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    for record in records {
        record.validate()?;
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| SieveError::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| SieveError::io(path, e))?;
    Ok(n)
}
