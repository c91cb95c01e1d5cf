use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};

/// Per-uid score columns. Absent columns are omitted from the JSONL line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRow {
    pub uid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sieve_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sieve_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fused: Option<f64>,
}

/// A named score column, used to pick the ranking key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreColumn {
    SieveRaw,
    ClipRaw,
    SieveNorm,
    ClipNorm,
    Fused,
}

impl ScoreColumn {
    pub const ALL: [ScoreColumn; 5] = [
        ScoreColumn::SieveRaw,
        ScoreColumn::ClipRaw,
        ScoreColumn::SieveNorm,
        ScoreColumn::ClipNorm,
        ScoreColumn::Fused,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreColumn::SieveRaw => "sieve_raw",
            ScoreColumn::ClipRaw => "clip_raw",
            ScoreColumn::SieveNorm => "sieve_norm",
            ScoreColumn::ClipNorm => "clip_norm",
            ScoreColumn::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Preferred ranking column for a row: the fused score if present,
    /// otherwise the raw Sieve score, otherwise the raw CLIP score.
    pub fn preferred(row: &ScoreRow) -> Option<Self> {
        [ScoreColumn::Fused, ScoreColumn::SieveRaw, ScoreColumn::ClipRaw]
            .into_iter()
            .find(|c| row.get(*c).is_some())
    }
}

impl std::fmt::Display for ScoreColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl ScoreRow {
    pub fn new(uid: impl Into<String>) -> Self {
        ScoreRow {
            uid: uid.into(),
            ..Default::default()
        }
    }

    pub fn get(&self, column: ScoreColumn) -> Option<f64> {
        match column {
            ScoreColumn::SieveRaw => self.sieve_raw,
            ScoreColumn::ClipRaw => self.clip_raw,
            ScoreColumn::SieveNorm => self.sieve_norm,
            ScoreColumn::ClipNorm => self.clip_norm,
            ScoreColumn::Fused => self.fused,
        }
    }

    fn slot(&mut self, column: ScoreColumn) -> &mut Option<f64> {
        match column {
            ScoreColumn::SieveRaw => &mut self.sieve_raw,
            ScoreColumn::ClipRaw => &mut self.clip_raw,
            ScoreColumn::SieveNorm => &mut self.sieve_norm,
            ScoreColumn::ClipNorm => &mut self.clip_norm,
            ScoreColumn::Fused => &mut self.fused,
        }
    }

    /// The value of `column`, or a missing-score error naming the uid.
    pub fn require(&self, column: ScoreColumn) -> Result<f64> {
        self.get(column).ok_or_else(|| SieveError::MissingScore {
            uid: self.uid.clone(),
            column: column.name(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        crate::corpus_io::validate_uid(&self.uid)?;
        for column in ScoreColumn::ALL {
            if let Some(v) = self.get(column) {
                if !v.is_finite() {
                    return Err(SieveError::NonFinite {
                        uid: self.uid.clone(),
                    });
                }
            }
        }
        for column in [ScoreColumn::SieveNorm, ScoreColumn::ClipNorm] {
            if let Some(v) = self.get(column) {
                if !(0.0..=1.0).contains(&v) {
                    return Err(SieveError::Domain(format!(
                        "{column} {v} for uid {:?} outside [0,1]",
                        self.uid
                    )));
                }
            }
        }
        if self.fused.is_some() && (self.sieve_norm.is_none() || self.clip_norm.is_none()) {
            return Err(SieveError::Invariant(format!(
                "uid {:?} has a fused score without both normalized scores",
                self.uid
            )));
        }
        Ok(())
    }

    /// Merges `other`'s columns into `self`. Equal values are accepted;
    /// differing values are a conflict.
    pub fn merge(&mut self, other: &ScoreRow) -> Result<()> {
        debug_assert_eq!(self.uid, other.uid);
        for column in ScoreColumn::ALL {
            if let Some(v) = other.get(column) {
                let slot = self.slot(column);
                match *slot {
                    None => *slot = Some(v),
                    Some(mine) if mine.to_bits() == v.to_bits() || mine == v => {}
                    Some(_) => {
                        return Err(SieveError::Conflict {
                            uid: self.uid.clone(),
                            column: column.name(),
                        })
                    }
                }
            }
        }
        Ok(())
    }
}

/// Streams a `*.scores.jsonl` file, enforcing strictly ascending uids.
pub struct ScoreReader<R> {
    source: PathBuf,
    lines: std::io::Lines<R>,
    line_no: u64,
    prev: Option<String>,
    failed: bool,
}

impl<R: BufRead> ScoreReader<R> {
    pub fn new(reader: R, source: impl Into<PathBuf>) -> Self {
        ScoreReader {
            source: source.into(),
            lines: reader.lines(),
            line_no: 0,
            prev: None,
            failed: false,
        }
    }

    fn parse(&mut self, line: &str) -> Result<ScoreRow> {
        let row: ScoreRow = serde_json::from_str(line).map_err(|e| SieveError::Parse {
            path: self.source.clone(),
            line: self.line_no,
            message: e.to_string(),
        })?;
        row.validate()?;
        if let Some(prev) = &self.prev {
            if prev.as_str() >= row.uid.as_str() {
                return Err(SieveError::Order {
                    prev: prev.clone(),
                    next: row.uid,
                });
            }
        }
        self.prev = Some(row.uid.clone());
        Ok(row)
    }
}

impl<R: BufRead> Iterator for ScoreReader<R> {
    type Item = Result<ScoreRow>;

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
            let out = self.parse(&line);
            self.failed = out.is_err();
            return Some(out);
        }
    }
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
    Ok(ScoreReader::new(BufReader::new(file), path))
}

pub struct ScoreWriter {
    path: PathBuf,
    out: BufWriter<File>,
    prev: Option<String>,
    rows: u64,
}

impl ScoreWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| SieveError::io(&path, e))?;
        Ok(ScoreWriter {
            out: BufWriter::new(file),
            path,
            prev: None,
            rows: 0,
        })
    }

    pub fn push(&mut self, row: &ScoreRow) -> Result<()> {
        row.validate()?;
        if let Some(prev) = &self.prev {
            if prev.as_str() >= row.uid.as_str() {
                return Err(SieveError::Order {
                    prev: prev.clone(),
                    next: row.uid.clone(),
                });
            }
        }
        let line = serde_json::to_string(row).expect("score rows serialize");
        writeln!(self.out, "{line}").map_err(|e| SieveError::io(&self.path, e))?;
        self.prev = Some(row.uid.clone());
        self.rows += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        self.out.flush().map_err(|e| SieveError::io(&self.path, e))?;
        Ok(self.rows)
    }
}

pub fn write_scores<'a>(rows: impl IntoIterator<Item = &'a ScoreRow>, path: impl AsRef<Path>) -> Result<u64> {
    let mut w = ScoreWriter::create(path)?;
    for row in rows {
        w.push(row)?;
    }
    w.finish()
}

/// Outer-joins uid-sorted score streams column-wise.
pub struct JoinScores<I: Iterator<Item = Result<ScoreRow>>> {
    inputs: Vec<std::iter::Peekable<I>>,
    last: Vec<Option<String>>,
    failed: bool,
}

pub fn join_scores<I>(tables: impl IntoIterator<Item = I>) -> JoinScores<I>
where
    I: Iterator<Item = Result<ScoreRow>>,
{
    let inputs: Vec<_> = tables.into_iter().map(Iterator::peekable).collect();
    let last = vec![None; inputs.len()];
    JoinScores {
        inputs,
        last,
        failed: false,
    }
}

impl<I: Iterator<Item = Result<ScoreRow>>> JoinScores<I> {
    fn step(&mut self) -> Result<Option<ScoreRow>> {
        let mut smallest: Option<String> = None;
        for input in &mut self.inputs {
            match input.peek() {
                None => {}
                Some(Err(_)) => return Err(input.next().unwrap().unwrap_err()),
                Some(Ok(row)) if smallest.as_deref().is_none_or(|s| row.uid.as_str() < s) => {
                    smallest = Some(row.uid.clone());
                }
                Some(Ok(_)) => {}
            }
        }
        let Some(uid) = smallest else { return Ok(None) };
        let mut merged = ScoreRow::new(uid.clone());
        for (input, last) in self.inputs.iter_mut().zip(self.last.iter_mut()) {
            if input.peek().is_some_and(|r| matches!(r, Ok(row) if row.uid == uid)) {
                let row = input.next().unwrap()?;
                if let Some(prev) = last.as_deref() {
                    if prev >= row.uid.as_str() {
                        return Err(SieveError::Order {
                            prev: prev.to_owned(),
                            next: row.uid,
                        });
                    }
                }
                merged.merge(&row)?;
                *last = Some(row.uid);
            }
        }
        // An input whose head is now below the emitted uid went backwards.
        for (input, last) in self.inputs.iter_mut().zip(&self.last) {
            if let (Some(Ok(row)), Some(prev)) = (input.peek(), last) {
                if row.uid.as_str() <= prev.as_str() {
                    return Err(SieveError::Order {
                        prev: prev.clone(),
                        next: row.uid.clone(),
                    });
                }
            }
        }
        merged.validate()?;
        Ok(Some(merged))
    }
}

impl<I: Iterator<Item = Result<ScoreRow>>> Iterator for JoinScores<I> {
    type Item = Result<ScoreRow>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.step().transpose();
        if matches!(out, Some(Err(_))) {
            self.failed = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(uid: &str, sieve: Option<f64>, clip: Option<f64>) -> ScoreRow {
        ScoreRow {
            uid: uid.into(),
            sieve_raw: sieve,
            clip_raw: clip,
            ..Default::default()
        }
    }

    fn join(tables: Vec<Vec<ScoreRow>>) -> Result<Vec<ScoreRow>> {
        join_scores(tables.into_iter().map(|t| t.into_iter().map(Ok))).collect()
    }

    #[test]
    fn disjoint_columns_merge() {
        let out = join(vec![vec![row("a", Some(0.5), None)], vec![row("a", None, Some(0.3))]]).unwrap();
        assert_eq!(out, vec![row("a", Some(0.5), Some(0.3))]);
    }

    #[test]
    fn disjoint_uids_stay_separate() {
        let out = join(vec![vec![row("a", Some(0.5), None)], vec![row("b", None, Some(0.3))]]).unwrap();
        assert_eq!(out, vec![row("a", Some(0.5), None), row("b", None, Some(0.3))]);
    }

    #[test]
    fn conflicting_values_error() {
        let err = join(vec![vec![row("a", Some(0.5), None)], vec![row("a", Some(0.6), None)]]).unwrap_err();
        match err {
            SieveError::Conflict { uid, column } => {
                assert_eq!(uid, "a");
                assert_eq!(column, "sieve_raw");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unsorted_input_errors() {
        let err = join(vec![
            vec![row("b", Some(0.5), None), row("a", Some(0.1), None)],
            vec![row("c", None, Some(0.3))],
        ])
        .unwrap_err();
        assert!(matches!(err, SieveError::Order { .. }), "{err}");
    }

    #[test]
    fn fused_requires_both_norms() {
        let mut r = ScoreRow::new("a");
        r.fused = Some(0.5);
        r.sieve_norm = Some(0.5);
        assert!(r.validate().is_err());
        r.clip_norm = Some(0.5);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn jsonl_omits_absent_columns() {
        let line = serde_json::to_string(&row("a", Some(0.5), None)).unwrap();
        assert_eq!(line, r#"{"uid":"a","sieve_raw":0.5}"#);
    }
}
