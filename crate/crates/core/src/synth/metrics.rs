use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Label;
use crate::backends::Backend;
use crate::error::{Result, SieveError};
use crate::pruning::{rank_and_select, validate_fraction};
use crate::scoring::cosine;
use crate::textnorm::{mask_medium_phrases, PhraseList};

pub const DEFAULT_PRECISION_KS: [f64; 3] = [0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    /// `None` when one class is absent.
    pub auc: Option<f64>,
    /// Keyed by the k value as written, e.g. `"0.2"`.
    pub precision_at_k: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: f64,
    /// Aligned fraction of the selection; `None` if nothing was selected.
    pub precision: Option<f64>,
    pub selected_count: u64,
}

fn labeled_scores(scores: &HashMap<String, f64>, labels: &BTreeMap<String, Label>) -> Result<Vec<(String, f64)>> {
    labels
        .keys()
        .map(|uid| {
            scores
                .get(uid)
                .map(|s| (uid.clone(), *s))
                .ok_or_else(|| SieveError::Consistency(format!("no score for labeled uid {uid:?}")))
        })
        .collect()
}

/// Probability that a random aligned sample outscores a random misaligned
/// one, ties counting one half (Mann-Whitney U with mid-ranks).
pub fn roc_auc(scored: &[(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|(_, p)| *p).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        // 1-based mid-rank of the tie block i..=j.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_block = sorted[i..=j].iter().filter(|(_, p)| *p).count();
        rank_sum += mid * pos_in_block as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Some(u / (p * negatives as f64))
}

/// Top-k precision rows, using the same selection rule as pruning.
pub fn k_sweep(
    scores: &HashMap<String, f64>,
    labels: &BTreeMap<String, Label>,
    ks: &[f64],
) -> Result<Vec<SweepRow>> {
    let pairs = labeled_scores(scores, labels)?;
    ks.iter()
        .map(|&k| {
            validate_fraction("k", k)?;
            let sel = rank_and_select(pairs.iter().map(|(u, s)| (u.clone(), *s)), k, pairs.len() as u64, "eval")?;
            let aligned = sel.uids().iter().filter(|u| labels[u.as_str()] == Label::Aligned).count();
            Ok(SweepRow {
                k,
                precision: (!sel.is_empty()).then(|| aligned as f64 / sel.len() as f64),
                selected_count: sel.len() as u64,
            })
        })
        .collect()
}

pub fn detection_metrics(
    scores: &HashMap<String, f64>,
    labels: &BTreeMap<String, Label>,
    ks: &[f64],
) -> Result<DetectionMetrics> {
    let pairs = labeled_scores(scores, labels)?;
    let scored: Vec<(f64, bool)> = pairs
        .iter()
        .map(|(u, s)| (*s, labels[u.as_str()] == Label::Aligned))
        .collect();
    let precision_at_k = k_sweep(scores, labels, ks)?
        .into_iter()
        .map(|row| (row.k.to_string(), row.precision))
        .collect();
    Ok(DetectionMetrics {
        auc: roc_auc(&scored),
        precision_at_k,
    })
}

/// Pairwise cosine between embeddings of the masked texts. The matrix is
/// filled from the upper triangle, so it is exactly symmetric.
pub fn similarity_matrix(texts: &[String], backend: &dyn Backend, phrases: &PhraseList) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(SieveError::EmptyInput("similarity matrix needs at least one text".into()));
    }
    let masked: Vec<String> = texts.iter().map(|t| mask_medium_phrases(t, phrases)).collect();
    let embs = backend.embed_texts(&masked)?;
    let n = embs.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = cosine(&embs[i], &embs[j])?;
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::MockBackend;

    /// Brute-force pair enumeration.
    fn auc_oracle(scored: &[(f64, bool)]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (sp, _) in scored.iter().filter(|x| x.1) {
            for (sn, _) in scored.iter().filter(|x| !x.1) {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn fixture(v: &[(&str, f64, Label)]) -> (HashMap<String, f64>, BTreeMap<String, Label>) {
        (
            v.iter().map(|(u, s, _)| (u.to_string(), *s)).collect(),
            v.iter().map(|(u, _, l)| (u.to_string(), *l)).collect(),
        )
    }

    #[test]
    fn auc_examples() {
        use Label::*;
        let (s, l) = fixture(&[("a", 0.9, Aligned), ("b", 0.8, Aligned), ("c", 0.1, Misaligned)]);
        assert_eq!(detection_metrics(&s, &l, &[0.5]).unwrap().auc, Some(1.0));
        let (s, l) = fixture(&[("a", 0.4, Aligned), ("b", 0.4, Misaligned), ("c", 0.4, Aligned)]);
        assert_eq!(detection_metrics(&s, &l, &[0.5]).unwrap().auc, Some(0.5));
        let (s, l) = fixture(&[
            ("a", 0.9, Aligned),
            ("b", 0.7, Aligned),
            ("c", 0.8, Misaligned),
            ("d", 0.1, Misaligned),
        ]);
        let m = detection_metrics(&s, &l, &[0.5]).unwrap();
        assert_eq!(m.auc, Some(0.75));
        assert_eq!(m.precision_at_k["0.5"], Some(0.5));
    }

    #[test]
    fn auc_matches_pair_enumeration() {
        let mut x = 12345u64;
        let mut next = || {
            x = crate::hash::mix64(x);
            x
        };
        for _ in 0..200 {
            let n = 2 + (next() % 40) as usize;
            let mut scored: Vec<(f64, bool)> = (0..n).map(|_| ((next() % 7) as f64, next() % 3 == 0)).collect();
            scored[0].1 = true;
            scored[1].1 = false;
            let got = roc_auc(&scored).unwrap();
            assert!((got - auc_oracle(&scored)).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_score_is_consistency_error() {
        let (mut s, l) = fixture(&[("a", 0.9, Label::Aligned), ("b", 0.1, Label::Misaligned)]);
        s.remove("b");
        assert!(matches!(detection_metrics(&s, &l, &[0.5]), Err(SieveError::Consistency(_))));
    }

    #[test]
    fn sweep_rows() {
        use Label::*;
        let (s, l) = fixture(&[
            ("a", 0.9, Aligned),
            ("b", 0.7, Misaligned),
            ("c", 0.5, Aligned),
            ("d", 0.1, Aligned),
        ]);
        let rows = k_sweep(&s, &l, &[0.25, 0.5, 1.0]).unwrap();
        assert_eq!(rows[0].precision, Some(1.0));
        assert_eq!(rows[1].precision, Some(0.5));
        assert_eq!(rows[2].precision, Some(0.75));
        assert!(rows.windows(2).all(|w| w[0].selected_count <= w[1].selected_count));
    }

    #[test]
    fn matrix_basics() {
        let b = MockBackend::new();
        let p = PhraseList::default();
        let m = similarity_matrix(&["a red cat".into()], &b, &p).unwrap();
        assert!((m[0][0] - 1.0).abs() < 1e-6);
        let m = similarity_matrix(&["blue sky".into(), "blue sky".into()], &b, &p).unwrap();
        assert!((m[0][1] - 1.0).abs() < 1e-6);
        assert!(similarity_matrix(&[], &b, &p).is_err());
    }
}
