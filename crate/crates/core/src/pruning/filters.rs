use std::collections::HashSet;
use std::hash::{BuildHasher, Hash};

use super::{selection_count, validate_fraction, BoundedTopK, RankKey};
use crate::corpus_io::SelectionManifest;
use crate::error::{Result, SieveError};

/// Fraction of least text-covered samples kept by the coverage filter.
pub const DEFAULT_COVERAGE_KEEP: f64 = 0.8;

/// Keeps the uids of `a` that are members of `b`, in `a`'s order. `k` is
/// recomputed against `a`'s source count.
pub fn intersect_selections<S: BuildHasher>(a: &SelectionManifest, b: &HashSet<String, S>) -> SelectionManifest {
    let uids: Vec<String> = a.uids().iter().filter(|u| b.contains(u.as_str())).cloned().collect();
    if uids.len() == a.len() {
        return a.clone();
    }
    let k = uids.len() as f64 / a.source_count() as f64;
    SelectionManifest::new(uids, k, a.scorer_id(), a.source_count(), a.tie_break())
        .expect("a subset of a valid selection is valid")
}

/// The `floor(keep_fraction * N)` uids with the smallest text coverage,
/// ties broken by ascending uid.
pub fn coverage_filter<S: Into<String>>(
    coverage: impl IntoIterator<Item = (S, f64)>,
    keep_fraction: f64,
) -> Result<HashSet<String>> {
    validate_fraction("keep_fraction", keep_fraction)?;
    let mut keys = Vec::new();
    for (uid, fraction) in coverage {
        let uid = uid.into();
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SieveError::Domain(format!(
                "text coverage {fraction} for uid {uid:?} outside [0,1]"
            )));
        }
        // Ascending coverage is descending (0 - coverage).
        keys.push(RankKey::new(0.0 - fraction, uid));
    }
    let n = selection_count(keep_fraction, keys.len() as u64) as usize;
    let mut top = BoundedTopK::new(n);
    for key in keys {
        top.push(key);
    }
    Ok(top.into_sorted().into_iter().map(|k| k.uid).collect())
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets defined to have IoU 1.
pub fn selection_iou<T: Eq + Hash, S: BuildHasher>(a: &HashSet<T, S>, b: &HashSet<T, S>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(*x)).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::TieBreak;

    fn manifest(uids: &[&str], source: u64) -> SelectionManifest {
        let k = uids.len() as f64 / source as f64;
        SelectionManifest::new(uids.iter().map(|s| s.to_string()).collect(), k, "t", source, TieBreak::UidAscending)
            .unwrap()
    }

    fn set(v: &[&str]) -> HashSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn intersection_examples() {
        let a = manifest(&["x", "y", "z"], 10);
        let r = intersect_selections(&a, &set(&["y", "z", "w"]));
        assert_eq!(r.uids(), ["y", "z"]);
        assert_eq!(r.k(), 0.2);
        assert_eq!(intersect_selections(&a, &set(&["x", "y", "z"])), a);
        let empty = intersect_selections(&a, &set(&[]));
        assert!(empty.is_empty());
        assert_eq!(empty.k(), 0.0);
    }

    #[test]
    fn coverage_examples() {
        let cov = [("a", 0.0), ("b", 0.9), ("c", 0.1)];
        assert_eq!(coverage_filter(cov, 2.0 / 3.0).unwrap(), set(&["a", "c"]));
        assert_eq!(coverage_filter(cov, 1.0).unwrap(), set(&["a", "b", "c"]));
        let same = [("d", 0.3), ("b", 0.3), ("a", 0.3), ("c", 0.3)];
        assert_eq!(coverage_filter(same, 0.5).unwrap(), set(&["a", "b"]));
        assert!(coverage_filter([("a", 1.2)], 0.8).is_err());
        assert!(coverage_filter([("a", 0.2)], 0.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = set(&["1", "2", "3"]);
        assert_eq!(selection_iou(&a, &a), 1.0);
        assert_eq!(selection_iou(&a, &set(&["4", "5"])), 0.0);
        assert_eq!(selection_iou(&a, &set(&["2", "3", "4"])), 0.5);
        assert_eq!(selection_iou(&set(&[]), &set(&[])), 1.0);
    }
}
