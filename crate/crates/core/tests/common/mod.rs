#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sieve_core::corpus_io::{write_scores, ScoreRow};

/// Reference masking over whitespace-separated words: find the leftmost
/// position where any phrase matches, delete the longest phrase there, and
/// start over from the beginning until nothing matches.
pub fn mask_oracle(words: &[&str], phrases: &[String]) -> Vec<String> {
    let phrases: Vec<Vec<&str>> = phrases.iter().map(|p| p.split(' ').collect()).collect();
    let mut cur: Vec<(String, String)> = words.iter().map(|w| (w.to_string(), w.to_lowercase())).collect();
    loop {
        let mut hit = None;
        'scan: for start in 0..cur.len() {
            let mut best = 0;
            for p in &phrases {
                let fits = start + p.len() <= cur.len()
                    && p.iter().zip(&cur[start..]).all(|(a, (_, lower))| lower == a);
                if fits && p.len() > best {
                    best = p.len();
                }
            }
            if best > 0 {
                hit = Some((start, best));
                break 'scan;
            }
        }
        match hit {
            Some((start, len)) => {
                cur.drain(start..start + len);
            }
            None => return cur.into_iter().map(|(w, _)| w).collect(),
        }
    }
}

/// Writes `(uid, score)` pairs as a `sieve_raw` score table, sorting by uid.
pub fn write_raw_scores(path: &Path, rows: &[(String, f64)]) -> PathBuf {
    let mut rows: Vec<ScoreRow> = rows
        .iter()
        .map(|(u, s)| {
            let mut r = ScoreRow::new(u.as_str());
            r.sieve_raw = Some(*s);
            r
        })
        .collect();
    rows.sort_by(|a, b| a.uid.cmp(&b.uid));
    write_scores(&rows, path).unwrap();
    path.to_path_buf()
}

/// Reference top-k: full sort by (score descending, uid ascending).
pub fn sort_oracle(rows: &[(String, f64)], n: usize) -> Vec<String> {
    let mut v: Vec<(String, f64)> = rows.iter().map(|(u, s)| (u.clone(), *s + 0.0)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().take(n).map(|(u, _)| u).collect()
}
