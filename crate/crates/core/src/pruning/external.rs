//! Top-k over score shards that may not fit in memory.
//!
//! Keys are collected into a bounded heap while it fits the budget. Past
//! that, keys are buffered, sorted, truncated to the selection size, and
//! spilled as sorted runs; the runs are then k-way merged. Any key worse
//! than the last key of a full run can never be selected and is dropped on
//! arrival. The result is identical to [`rank_and_select`](super::rank_and_select) on the
//! concatenated input.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::{selection_count, validate_fraction, BoundedTopK, RankKey};
use crate::corpus_io::{read_scores, ScoreColumn, SelectionManifest, TieBreak};
use crate::error::{Result, SieveError};

const READ_BUF: usize = 64 * 1024;
/// Smallest budget that still leaves room for a reader and a run buffer.
pub const MIN_MEMORY_BUDGET: u64 = 4 * READ_BUF as u64;

#[derive(Debug, Clone)]
pub struct TopKOptions {
    pub k: f64,
    pub source_count: u64,
    /// Bytes available for selection buffers. The output manifest itself is
    /// not counted.
    pub memory_budget: u64,
    /// Ranking column; `None` picks the preferred column of the first row.
    pub column: Option<ScoreColumn>,
    /// Directory for spilled runs; the system temp dir when `None`.
    pub spill_dir: Option<PathBuf>,
}

impl TopKOptions {
    pub fn new(k: f64, source_count: u64, memory_budget: u64) -> Self {
        TopKOptions {
            k,
            source_count,
            memory_budget,
            column: None,
            spill_dir: None,
        }
    }
}

struct RunWriter {
    dir: tempfile::TempDir,
    runs: Vec<PathBuf>,
    next_id: usize,
}

struct RunSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RunSink {
    fn push(&mut self, key: &RankKey) -> Result<()> {
        let io = |e| SieveError::io(&self.path, e);
        self.out.write_all(&key.score.to_bits().to_le_bytes()).map_err(io)?;
        self.out.write_all(&(key.uid.len() as u32).to_le_bytes()).map_err(io)?;
        self.out.write_all(key.uid.as_bytes()).map_err(io)
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(|e| SieveError::io(&self.path, e))?;
        Ok(self.path)
    }
}

impl RunWriter {
    fn new(spill_dir: Option<&Path>) -> Result<Self> {
        let dir = match spill_dir {
            Some(d) => tempfile::Builder::new().prefix("sieve-topk-").tempdir_in(d),
            None => tempfile::Builder::new().prefix("sieve-topk-").tempdir(),
        }
        .map_err(|e| SieveError::io(spill_dir.unwrap_or(Path::new("<tmp>")), e))?;
        Ok(RunWriter {
            dir,
            runs: Vec::new(),
            next_id: 0,
        })
    }

    fn open_run(&mut self) -> Result<RunSink> {
        let path = self.dir.path().join(format!("run-{:06}.bin", self.next_id));
        self.next_id += 1;
        let file = File::create(&path).map_err(|e| SieveError::io(&path, e))?;
        Ok(RunSink {
            out: BufWriter::with_capacity(READ_BUF, file),
            path,
        })
    }

    fn write_run(&mut self, keys: impl IntoIterator<Item = RankKey>) -> Result<()> {
        let mut sink = self.open_run()?;
        for key in keys {
            sink.push(&key)?;
        }
        self.runs.push(sink.finish()?);
        Ok(())
    }
}

struct RunReader {
    path: PathBuf,
    input: BufReader<File>,
}

impl RunReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
        Ok(RunReader {
            path: path.to_path_buf(),
            input: BufReader::with_capacity(READ_BUF, file),
        })
    }

    fn next_key(&mut self) -> Result<Option<RankKey>> {
        let io = |e| SieveError::io(&self.path, e);
        let mut head = [0u8; 12];
        match self.input.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(io(e)),
        }
        let score = f64::from_bits(u64::from_le_bytes(head[..8].try_into().unwrap()));
        let len = u32::from_le_bytes(head[8..].try_into().unwrap()) as usize;
        let mut uid = vec![0u8; len];
        self.input.read_exact(&mut uid).map_err(io)?;
        let uid = String::from_utf8(uid).map_err(|_| SieveError::Format("corrupt spill run".into()))?;
        Ok(Some(RankKey { score, uid }))
    }
}

enum Collector {
    Heap(BoundedTopK),
    Spill {
        buffer: Vec<RankKey>,
        bytes: usize,
        cutoff: Option<RankKey>,
        runs: RunWriter,
    },
}

struct Selector<'a> {
    n: usize,
    budget: usize,
    spill_dir: Option<&'a Path>,
    collector: Collector,
}

impl<'a> Selector<'a> {
    fn push(&mut self, key: RankKey) -> Result<()> {
        match &mut self.collector {
            Collector::Heap(heap) => {
                heap.push(key);
                if heap.bytes() > self.budget / 2 {
                    self.start_spilling()?;
                }
            }
            Collector::Spill {
                buffer,
                bytes,
                cutoff,
                runs,
            } => {
                if cutoff.as_ref().is_some_and(|c| key >= *c) {
                    return Ok(());
                }
                *bytes += key.footprint();
                buffer.push(key);
                if *bytes > self.budget / 2 {
                    flush_run(self.n, buffer, bytes, cutoff, runs)?;
                }
            }
        }
        Ok(())
    }

    fn start_spilling(&mut self) -> Result<()> {
        log::debug!("top-k heap exceeded budget; spilling sorted runs");
        let Collector::Heap(heap) = std::mem::replace(&mut self.collector, Collector::Heap(BoundedTopK::new(0)))
        else {
            unreachable!()
        };
        let mut runs = RunWriter::new(self.spill_dir)?;
        let keys = heap.into_sorted();
        let cutoff = (keys.len() == self.n).then(|| keys[self.n - 1].clone());
        runs.write_run(keys)?;
        self.collector = Collector::Spill {
            buffer: Vec::new(),
            bytes: 0,
            cutoff,
            runs,
        };
        Ok(())
    }

    fn finish(self) -> Result<Vec<RankKey>> {
        match self.collector {
            Collector::Heap(heap) => Ok(heap.into_sorted()),
            Collector::Spill {
                mut buffer,
                mut bytes,
                mut cutoff,
                mut runs,
            } => {
                if !buffer.is_empty() {
                    flush_run(self.n, &mut buffer, &mut bytes, &mut cutoff, &mut runs)?;
                }
                drop(buffer);
                merge_runs(self.n, self.budget, &mut runs)
            }
        }
    }
}

fn flush_run(
    n: usize,
    buffer: &mut Vec<RankKey>,
    bytes: &mut usize,
    cutoff: &mut Option<RankKey>,
    runs: &mut RunWriter,
) -> Result<()> {
    buffer.sort_unstable();
    buffer.truncate(n);
    if n > 0 && buffer.len() == n {
        let last = buffer[n - 1].clone();
        if cutoff.as_ref().is_none_or(|c| last < *c) {
            *cutoff = Some(last);
        }
    }
    runs.write_run(buffer.drain(..))?;
    *bytes = 0;
    Ok(())
}

/// Merges runs, at most `fan_in` at a time, until one pass yields the
/// final `n` keys.
fn merge_runs(n: usize, budget: usize, runs: &mut RunWriter) -> Result<Vec<RankKey>> {
    let fan_in = (budget / (2 * READ_BUF)).max(2);
    while runs.runs.len() > fan_in {
        let pending = std::mem::take(&mut runs.runs);
        for group in pending.chunks(fan_in) {
            let mut sink = runs.open_run()?;
            merge_group(n, group, |key| sink.push(&key))?;
            runs.runs.push(sink.finish()?);
            for p in group {
                let _ = std::fs::remove_file(p);
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    merge_group(n, &runs.runs, |key| {
        out.push(key);
        Ok(())
    })?;
    Ok(out)
}

fn merge_group(n: usize, paths: &[PathBuf], mut emit: impl FnMut(RankKey) -> Result<()>) -> Result<()> {
    let mut readers = paths.iter().map(|p| RunReader::open(p)).collect::<Result<Vec<_>>>()?;
    let mut heap = BinaryHeap::with_capacity(readers.len());
    for (i, r) in readers.iter_mut().enumerate() {
        if let Some(key) = r.next_key()? {
            heap.push(Reverse((key, i)));
        }
    }
    let mut emitted = 0;
    while emitted < n {
        let Some(Reverse((key, i))) = heap.pop() else { break };
        if let Some(next) = readers[i].next_key()? {
            heap.push(Reverse((next, i)));
        }
        emit(key)?;
        emitted += 1;
    }
    Ok(())
}

/// Selects the top `floor(k * source_count)` rows across uid-sorted score
/// shards within a fixed buffer budget. Shard order does not matter.
pub fn external_topk(shards: &[PathBuf], opts: &TopKOptions) -> Result<SelectionManifest> {
    validate_fraction("k", opts.k)?;
    if opts.memory_budget < MIN_MEMORY_BUDGET {
        return Err(SieveError::Resource(format!(
            "memory budget of {} bytes is below the {MIN_MEMORY_BUDGET}-byte minimum",
            opts.memory_budget
        )));
    }
    let budget = usize::try_from(opts.memory_budget).unwrap_or(usize::MAX);
    let n = selection_count(opts.k, opts.source_count) as usize;
    let mut selector = Selector {
        n,
        budget,
        spill_dir: opts.spill_dir.as_deref(),
        collector: Collector::Heap(BoundedTopK::new(n)),
    };
    let mut column = opts.column;
    let mut seen = 0u64;
    for path in shards {
        for row in read_scores(path)? {
            let row = row?;
            let col = *column.get_or_insert_with(|| ScoreColumn::preferred(&row).unwrap_or(ScoreColumn::Fused));
            let score = row.require(col)?;
            seen += 1;
            selector.push(RankKey::new(score, row.uid))?;
        }
    }
    if seen != opts.source_count {
        return Err(SieveError::Consistency(format!(
            "shards hold {seen} rows but source_count is {}",
            opts.source_count
        )));
    }
    let scorer = column.unwrap_or(ScoreColumn::Fused);
    let uids = selector.finish()?.into_iter().map(|key| key.uid).collect();
    SelectionManifest::new(uids, opts.k, scorer.name(), opts.source_count, TieBreak::UidAscending)
}

/// Counts data rows across score shards.
pub fn count_rows(shards: &[PathBuf]) -> Result<u64> {
    let mut n = 0;
    for path in shards {
        let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| SieveError::io(path, e))?;
            if !line.trim().is_empty() {
                n += 1;
            }
        }
    }
    Ok(n)
}
