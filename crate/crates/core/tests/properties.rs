mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use sieve_core::config::PipelineConfig;
use sieve_core::corpus_io::{
    join_scores, read_embedding_shard, read_selection, write_embedding_shard, write_selection, EmbeddingShard,
    ScoreRow,
};
use sieve_core::pruning::{
    coverage_filter, external_topk, rank_and_select, selection_count, selection_iou, TopKOptions, MIN_MEMORY_BUDGET,
};
use sieve_core::scoring::{cosine, fuse_scores, min_max_normalize, FusionWeights, NormalizationStats};
use sieve_core::textnorm::{default_phrase_list, mask_medium_phrases, normalize_whitespace, PhraseList};

use common::{mask_oracle, sort_oracle, write_raw_scores};

const TOKENS: [&str; 20] = [
    "a", "an", "the", "A", "photo", "PHOTO", "Photo", "image", "picture", "photograph", "of", "OF", "showing",
    "cat", "dog", "x1", "ünï", ",", "(", ")",
];
const SEPARATORS: [&str; 5] = [" ", " ", "  ", "\t\n", ""];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(&TOKENS[..]), prop::sample::select(&SEPARATORS[..])), 0..16)
        .prop_map(|parts| parts.into_iter().map(|(t, s)| format!("{t}{s}")).collect())
}

fn words() -> impl Strategy<Value = Vec<&'static str>> {
    prop::collection::vec(prop::sample::select(&TOKENS[..17]), 0..14)
}

fn uid_scores(max: usize) -> impl Strategy<Value = Vec<(String, f64)>> {
    prop::collection::hash_set("[a-z]{1,6}", 0..max).prop_flat_map(|uids| {
        let n = uids.len();
        (
            Just(uids.into_iter().collect::<Vec<_>>()),
            prop::collection::vec(prop_oneof![(-3i32..3).prop_map(f64::from), -1.0f64..1.0], n),
        )
            .prop_map(|(u, s)| u.into_iter().zip(s).collect())
    })
}

proptest! {
    #[test]
    fn masking_is_idempotent(t in text()) {
        let p = default_phrase_list();
        let once = mask_medium_phrases(&t, &p);
        prop_assert_eq!(mask_medium_phrases(&once, &p), once.clone());
    }

    #[test]
    fn masking_never_expands(t in text()) {
        let out = mask_medium_phrases(&t, &default_phrase_list());
        prop_assert!(out.len() <= t.len());
        prop_assert!(out.split_whitespace().count() <= t.split_whitespace().count());
    }

    #[test]
    fn masking_without_phrases_only_canonicalizes_whitespace(t in text()) {
        prop_assert_eq!(mask_medium_phrases(&t, &PhraseList::empty()), normalize_whitespace(&t));
        let plain: String = t.replace(|c: char| "photoimagepicture".contains(c.to_ascii_lowercase()), "z");
        prop_assert_eq!(mask_medium_phrases(&plain, &default_phrase_list()), normalize_whitespace(&plain));
    }

    #[test]
    fn masking_ignores_ascii_case(t in text()) {
        let p = default_phrase_list();
        prop_assert_eq!(
            mask_medium_phrases(&t.to_ascii_uppercase(), &p),
            mask_medium_phrases(&t, &p).to_ascii_uppercase()
        );
    }

    #[test]
    fn masking_matches_restart_oracle(w in words()) {
        let p = default_phrase_list();
        let got = mask_medium_phrases(&w.join(" "), &p);
        prop_assert_eq!(got, mask_oracle(&w, p.phrases()).join(" "));
    }

    #[test]
    fn cosine_is_bounded_symmetric_and_scale_free(
        x in prop::collection::vec(-10.0f32..10.0, 1..24),
        seed in any::<u64>(),
        scale in 0.01f32..100.0,
    ) {
        let mut s = seed;
        let y: Vec<f32> = x.iter().map(|_| { s = sieve_core::hash::mix64(s); (s % 2001) as f32 / 100.0 - 10.0 }).collect();
        let c = cosine(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, cosine(&y, &x).unwrap());
        let scaled: Vec<f32> = x.iter().map(|v| v * scale).collect();
        prop_assert!((cosine(&scaled, &y).unwrap() - c).abs() < 1e-5);
    }

    #[test]
    fn normalization_is_bounded_and_monotone(v in prop::collection::vec(-1e6f64..1e6, 1..64)) {
        let pairs: Vec<(String, f64)> = v.iter().enumerate().map(|(i, x)| (i.to_string(), *x)).collect();
        let (norm, stats) = min_max_normalize(&pairs).unwrap();
        for (i, a) in v.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&norm[i]));
            for (j, b) in v.iter().enumerate() {
                if a < b {
                    prop_assert!(norm[i] <= norm[j]);
                }
            }
        }
        if stats.max > stats.min {
            prop_assert_eq!(stats.normalize(stats.min), 0.0);
            prop_assert_eq!(stats.normalize(stats.max), 1.0);
        }
    }

    #[test]
    fn stats_merge_equals_whole(v in prop::collection::vec(-1e3f64..1e3, 2..40), cut in 1usize..39) {
        let cut = cut.min(v.len() - 1);
        let fold = |xs: &[f64]| xs[1..].iter().fold(NormalizationStats::of(xs[0]), |s, x| s.merge(NormalizationStats::of(*x)));
        let (a, b) = v.split_at(cut);
        prop_assert_eq!(fold(a).merge(fold(b)), fold(&v));
        prop_assert_eq!(fold(b).merge(fold(a)), fold(&v));
    }

    #[test]
    fn fusion_lies_between_inputs(s in 0.0f64..=1.0, c in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let f = fuse_scores(s, c, FusionWeights::new(alpha).unwrap()).unwrap();
        prop_assert!(f >= s.min(c) - 1e-15 && f <= s.max(c) + 1e-15);
    }

    #[test]
    fn selection_is_order_free_nested_and_separating(
        rows in uid_scores(120),
        k1 in 0.01f64..=1.0,
        k2 in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
        let n = rows.len() as u64;
        let a = rank_and_select(rows.clone(), lo, n, "t").unwrap();
        let mut shuffled = rows.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = sieve_core::hash::mix64(s);
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(&rank_and_select(shuffled, lo, n, "t").unwrap(), &a);
        prop_assert_eq!(a.len() as u64, selection_count(lo, n));
        prop_assert_eq!(a.uids(), &sort_oracle(&rows, a.len())[..]);
        let b = rank_and_select(rows.clone(), hi, n, "t").unwrap();
        prop_assert!(a.uid_set().is_subset(&b.uid_set()));
        let chosen = a.uid_set();
        let worst_in = rows.iter().filter(|r| chosen.contains(r.0.as_str())).map(|r| r.1).fold(f64::INFINITY, f64::min);
        let best_out = rows.iter().filter(|r| !chosen.contains(r.0.as_str())).map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(chosen.is_empty() || worst_in >= best_out);
    }

    #[test]
    fn coverage_filter_keeps_least_covered(rows in uid_scores(60), keep in 0.01f64..=1.0) {
        let cov: Vec<(String, f64)> = rows.iter().map(|(u, s)| (u.clone(), (s.abs() / 3.0).min(1.0))).collect();
        let kept = coverage_filter(cov.clone(), keep).unwrap();
        prop_assert_eq!(kept.len() as u64, selection_count(keep, cov.len() as u64));
        let max_in = cov.iter().filter(|r| kept.contains(&r.0)).map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
        let min_out = cov.iter().filter(|r| !kept.contains(&r.0)).map(|r| r.1).fold(f64::INFINITY, f64::min);
        prop_assert!(max_in <= min_out);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in prop::collection::hash_set(0u8..30, 0..20), b in prop::collection::hash_set(0u8..30, 0..20)) {
        let x = selection_iou(&a, &b);
        prop_assert_eq!(x, selection_iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(selection_iou(&a, &a), 1.0);
    }

    #[test]
    fn config_render_round_trips(alpha in 0.0f64..=1.0, k in 0.001f64..=1.0, r in 1u32..64, seed in any::<u64>()) {
        let mut c = PipelineConfig::default();
        c.alpha = alpha;
        c.k = k;
        c.r = r;
        c.global_seed = seed;
        prop_assert_eq!(PipelineConfig::parse(&c.render()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn external_topk_matches_sort(rows in uid_scores(400), k in 0.01f64..=1.0, shards in 1usize..5, small in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let paths: Vec<_> = (0..shards)
            .map(|s| {
                let part: Vec<_> = rows.iter().enumerate().filter(|(i, _)| i % shards == s).map(|(_, r)| r.clone()).collect();
                write_raw_scores(&dir.path().join(format!("{s}.jsonl")), &part)
            })
            .collect();
        let budget = if small { MIN_MEMORY_BUDGET } else { 1 << 30 };
        let got = external_topk(&paths, &TopKOptions::new(k, rows.len() as u64, budget)).unwrap();
        let n = selection_count(k, rows.len() as u64) as usize;
        prop_assert_eq!(got.uids(), &sort_oracle(&rows, n)[..]);
    }

    #[test]
    fn shard_round_trips(rows in prop::collection::btree_map("[a-z]{1,5}", prop::collection::vec(-1e3f32..1e3, 3), 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let shard = EmbeddingShard::new(3, "enc", rows.into_iter().collect()).unwrap();
        let path = dir.path().join("x.emb");
        write_embedding_shard(&shard, &path).unwrap();
        prop_assert_eq!(read_embedding_shard(&path).unwrap(), shard);
    }

    #[test]
    fn selection_file_round_trips(rows in uid_scores(50), k in 0.01f64..=1.0) {
        let dir = tempfile::tempdir().unwrap();
        let sel = rank_and_select(rows.clone(), k, rows.len() as u64, "sieve_raw").unwrap();
        let path = dir.path().join("s.jsonl");
        write_selection(&sel, &path).unwrap();
        prop_assert_eq!(read_selection(&path).unwrap(), sel);
    }

    #[test]
    fn join_of_disjoint_columns_is_union(a in uid_scores(40), b in uid_scores(40)) {
        let column = |rows: &[(String, f64)], clip: bool| {
            let mut v: Vec<ScoreRow> = rows.iter().map(|(u, s)| {
                let mut r = ScoreRow::new(u.as_str());
                if clip { r.clip_raw = Some(*s) } else { r.sieve_raw = Some(*s) }
                r
            }).collect();
            v.sort_by(|x, y| x.uid.cmp(&y.uid));
            v.into_iter().map(Ok)
        };
        let joined: Vec<ScoreRow> = join_scores([column(&a, false), column(&b, true)]).collect::<Result<_, _>>().unwrap();
        let uids: HashSet<&str> = a.iter().chain(&b).map(|r| r.0.as_str()).collect();
        prop_assert_eq!(joined.len(), uids.len());
        prop_assert!(joined.windows(2).all(|w| w[0].uid < w[1].uid));
        for row in &joined {
            prop_assert_eq!(row.sieve_raw.is_some(), a.iter().any(|r| r.0 == row.uid));
            prop_assert_eq!(row.clip_raw.is_some(), b.iter().any(|r| r.0 == row.uid));
        }
    }
}
