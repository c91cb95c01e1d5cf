//! Turning score columns into selections.

mod external;
mod filters;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::corpus_io::{SelectionManifest, TieBreak};
use crate::error::{Result, SieveError};

pub use external::{count_rows, external_topk, TopKOptions, MIN_MEMORY_BUDGET};
pub use filters::{coverage_filter, intersect_selections, selection_iou, DEFAULT_COVERAGE_KEEP};

pub const DEFAULT_K: f64 = 0.2;

/// `floor(k * n)`, except that products within 1e-9 (relative) of an
/// integer snap to it, so decimal fractions like 0.29 of 100 give 29 rather
/// than the 28 that binary rounding of 28.999999999999996 would.
pub fn selection_count(k: f64, n: u64) -> u64 {
    let x = k * n as f64;
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        x.floor() as u64
    }
}

pub fn validate_fraction(name: &str, k: f64) -> Result<()> {
    if k > 0.0 && k <= 1.0 {
        Ok(())
    } else {
        Err(SieveError::Domain(format!("{name} {k} outside (0,1]")))
    }
}

/// Total ranking order: higher score first, then ascending uid. `a < b`
/// means `a` ranks ahead of `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankKey {
    pub score: f64,
    pub uid: String,
}

impl RankKey {
    pub fn new(score: f64, uid: impl Into<String>) -> Self {
        // -0.0 and 0.0 must tie so that only the uid breaks them.
        RankKey {
            score: score + 0.0,
            uid: uid.into(),
        }
    }

    /// Approximate heap footprint, used by memory budgeting.
    pub fn footprint(&self) -> usize {
        std::mem::size_of::<RankKey>() + self.uid.len() + 16
    }
}

impl Eq for RankKey {}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.uid.cmp(&other.uid))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `capacity` best keys seen so far.
#[derive(Debug)]
pub(crate) struct BoundedTopK {
    capacity: usize,
    // Max-heap on RankKey order: the top is the worst retained key.
    heap: BinaryHeap<RankKey>,
    bytes: usize,
}

impl BoundedTopK {
    pub(crate) fn new(capacity: usize) -> Self {
        BoundedTopK {
            capacity,
            heap: BinaryHeap::new(),
            bytes: 0,
        }
    }

    pub(crate) fn push(&mut self, key: RankKey) {
        if self.capacity == 0 {
            return;
        }
        if self.heap.len() < self.capacity {
            self.bytes += key.footprint();
            self.heap.push(key);
        } else if key < *self.heap.peek().unwrap() {
            self.bytes += key.footprint();
            let out = self.heap.pop().unwrap();
            self.bytes -= out.footprint();
            self.heap.push(key);
        }
    }

    pub(crate) fn bytes(&self) -> usize {
        self.bytes
    }

    /// Retained keys, best first.
    pub(crate) fn into_sorted(self) -> Vec<RankKey> {
        self.heap.into_sorted_vec()
    }
}

/// Selects the `floor(k * source_count)` best `(uid, score)` pairs.
///
/// The result depends only on the multiset of pairs, not on input order.
pub fn rank_and_select<S: Into<String>>(
    scores: impl IntoIterator<Item = (S, f64)>,
    k: f64,
    source_count: u64,
    scorer_id: &str,
) -> Result<SelectionManifest> {
    validate_fraction("k", k)?;
    let n = selection_count(k, source_count) as usize;
    let mut top = BoundedTopK::new(n);
    let mut seen = 0u64;
    for (uid, score) in scores {
        let uid = uid.into();
        if !score.is_finite() {
            return Err(SieveError::NonFinite { uid });
        }
        top.push(RankKey::new(score, uid));
        seen += 1;
    }
    if seen != source_count {
        return Err(SieveError::Consistency(format!(
            "stream has {seen} scores but source_count is {source_count}"
        )));
    }
    let uids = top.into_sorted().into_iter().map(|key| key.uid).collect();
    SelectionManifest::new(uids, k, scorer_id, source_count, TieBreak::UidAscending)
}
