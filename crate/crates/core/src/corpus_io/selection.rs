use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::validate_uid;
use crate::error::{Result, SieveError};
use crate::pruning::selection_count;

pub const SELECTION_FORMAT: &str = "sieve-selection";
pub const SELECTION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    UidAscending,
}

impl TieBreak {
    pub fn name(self) -> &'static str {
        match self {
            TieBreak::UidAscending => "uid_ascending",
        }
    }
}

/// Selected uids in rank order, plus the provenance needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionManifest {
    uids: Vec<String>,
    k: f64,
    scorer_id: String,
    source_count: u64,
    tie_break: TieBreak,
}

impl SelectionManifest {
    /// Checks that `uids` has exactly `floor(k * source_count)` unique
    /// entries. `k = 0` is only produced by intersections that came out empty.
    pub fn new(
        uids: Vec<String>,
        k: f64,
        scorer_id: impl Into<String>,
        source_count: u64,
        tie_break: TieBreak,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&k) {
            return Err(SieveError::Invariant(format!("selection k {k} outside [0,1]")));
        }
        let expected = selection_count(k, source_count);
        if uids.len() as u64 != expected {
            return Err(SieveError::Invariant(format!(
                "selection holds {} uids but k={k} of {source_count} requires {expected}",
                uids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(uids.len());
        for uid in &uids {
            validate_uid(uid)?;
            if !seen.insert(uid.as_str()) {
                return Err(SieveError::Invariant(format!("uid {uid:?} selected twice")));
            }
        }
        Ok(SelectionManifest {
            uids,
            k,
            scorer_id: scorer_id.into(),
            source_count,
            tie_break,
        })
    }

    pub fn uids(&self) -> &[String] {
        &self.uids
    }

    pub fn into_uids(self) -> Vec<String> {
        self.uids
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    pub fn source_count(&self) -> u64 {
        self.source_count
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    pub fn len(&self) -> usize {
        self.uids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uids.is_empty()
    }

    pub fn uid_set(&self) -> HashSet<&str> {
        self.uids.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionHeader {
    format: String,
    version: u32,
    k: f64,
    scorer_id: String,
    source_count: u64,
    tie_break: TieBreak,
    count: u64,
}

pub fn write_selection(manifest: &SelectionManifest, path: impl AsRef<Path>) -> Result<()> {
    // Re-check: the manifest may have been built from parts by a caller.
    let manifest = SelectionManifest::new(
        manifest.uids.clone(),
        manifest.k,
        manifest.scorer_id.clone(),
        manifest.source_count,
        manifest.tie_break,
    )?;
    let path = path.as_ref();
    let io = |e| SieveError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    let header = SelectionHeader {
        format: SELECTION_FORMAT.into(),
        version: SELECTION_VERSION,
        k: manifest.k,
        scorer_id: manifest.scorer_id.clone(),
        source_count: manifest.source_count,
        tie_break: manifest.tie_break,
        count: manifest.uids.len() as u64,
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for uid in &manifest.uids {
        writeln!(out, "{uid}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<SelectionManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: u64, message: String| SieveError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing selection header".into()))?
        .map_err(|e| SieveError::io(path, e))?;
    let header: SelectionHeader =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    if header.format != SELECTION_FORMAT || header.version != SELECTION_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported selection format {} v{}", header.format, header.version),
        ));
    }
    let mut uids = Vec::new();
    for line in lines {
        let line = line.map_err(|e| SieveError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        uids.push(line);
    }
    if uids.len() as u64 != header.count {
        return Err(parse_err(
            1,
            format!("header declares {} uids, file has {}", header.count, uids.len()),
        ));
    }
    SelectionManifest::new(uids, header.k, header.scorer_id, header.source_count, header.tie_break)
}

/// Reads a plain uid membership list: one uid per line, blank lines and
/// `#` comments ignored. A selection file is also accepted (its header is
/// skipped).
pub fn read_uid_set(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
    let mut set = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SieveError::io(path, e))?;
        let uid = line.trim();
        if uid.is_empty() || uid.starts_with('#') || (i == 0 && uid.starts_with('{')) {
            continue;
        }
        set.insert(uid.to_owned());
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_records_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("top.selection.jsonl");
        let m = SelectionManifest::new(vec!["b".into(), "a".into()], 0.2, "fused", 10, TieBreak::UidAscending)
            .unwrap();
        write_selection(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        let v: serde_json::Value = serde_json::from_str(first).unwrap();
        assert_eq!(v["k"], 0.2);
        assert_eq!(v["scorer_id"], "fused");
        assert_eq!(v["tie_break"], "uid_ascending");
        assert_eq!(text.lines().skip(1).collect::<Vec<_>>(), ["b", "a"]);
        assert_eq!(read_selection(&path).unwrap(), m);
    }

    #[test]
    fn wrong_count_is_invariant_violation() {
        let err = SelectionManifest::new(vec!["a".into()], 0.2, "s", 10, TieBreak::UidAscending).unwrap_err();
        assert!(matches!(err, SieveError::Invariant(_)));
    }

    #[test]
    fn duplicate_uids_rejected() {
        assert!(SelectionManifest::new(vec!["a".into(), "a".into()], 1.0, "s", 2, TieBreak::UidAscending).is_err());
    }

    #[test]
    fn uid_set_skips_header_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        std::fs::write(&path, "# members\nx\n\ny\n").unwrap();
        let set = read_uid_set(&path).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains("x") && set.contains("y"));
    }
}
