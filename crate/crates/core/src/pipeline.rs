//! The file-level stages (embed, score, fuse, prune) and `run`, which chains
//! them. `run` calls the same stage functions as the individual
//! subcommands, so its outputs equal a manual composition bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::backends::{Backend, BackendInfo, CaptionParams, CaptionRequest, FileBackend, MockBackend};
use crate::config::{BackendKind, PipelineConfig};
use crate::corpus_io::{
    read_scores, read_sorted_manifest, write_selection, SampleRecord, ScoreColumn, ScoreRow, ScoreWriter,
    SelectionManifest, ShardReader, ShardWriter,
};
use crate::error::{Result, SieveError};
use crate::hash::sample_seed;
use crate::pruning::{count_rows, external_topk, TopKOptions};
use crate::scoring::{fuse_scores, sieve_score, FusionWeights, NormalizationStats, StatsAccumulator};
use crate::textnorm::{mask_medium_phrases, PhraseList};

pub const CAPTIONS_EMB: &str = "captions.emb";
pub const ALT_EMB: &str = "alt.emb";
pub const SIEVE_SCORES: &str = "sieve.scores.jsonl";
pub const FUSED_SCORES: &str = "fused.scores.jsonl";
pub const SELECTION: &str = "selection.jsonl";
pub const REPORT: &str = "report.jsonl";
/// Partial outputs of a failed run are left here.
pub const QUARANTINE_DIR: &str = ".sieve-partial";

#[cfg(feature = "parallel")]
fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, U>(items: &[T], f: impl Fn(&T) -> Result<U>) -> Result<Vec<U>> {
    items.iter().map(f).collect()
}

pub fn build_backend(config: &PipelineConfig) -> Result<Box<dyn Backend>> {
    match config.backend {
        BackendKind::Mock => Ok(Box::new(MockBackend::new())),
        BackendKind::File => {
            let mut b = FileBackend::new();
            if let Some(p) = &config.captions_file {
                b = b.with_captions_file(p)?;
            }
            if let Some(p) = &config.embeddings_file {
                b = b.with_embeddings_file(p)?;
            }
            if config.backend_url.is_some() {
                b = b.with_fallback(service_backend(config)?);
            }
            Ok(Box::new(b))
        }
        BackendKind::Service => service_backend(config),
    }
}

#[cfg(feature = "service")]
fn service_backend(config: &PipelineConfig) -> Result<Box<dyn Backend>> {
    use crate::backends::ServiceBackend;
    let url = config.backend_url.as_deref().unwrap_or_default();
    let b = ServiceBackend::from_env_or(url);
    if b.url().is_empty() {
        return Err(SieveError::config("backend_url", "the service backend needs a URL"));
    }
    Ok(Box::new(b))
}

#[cfg(not(feature = "service"))]
fn service_backend(_: &PipelineConfig) -> Result<Box<dyn Backend>> {
    Err(SieveError::config("backend", "built without service support"))
}

/// Caption and alt-text embeddings for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordEmbeddings {
    pub uid: String,
    pub captions: Vec<Vec<f32>>,
    pub alt: Vec<f32>,
}

/// In-memory Sieve scoring: caption, mask, embed, best cosine.
pub struct SieveScorer<'a> {
    backend: &'a dyn Backend,
    phrases: &'a PhraseList,
    params: CaptionParams,
    global_seed: u64,
    batch_size: usize,
}

impl<'a> SieveScorer<'a> {
    pub fn new(backend: &'a dyn Backend, phrases: &'a PhraseList, params: CaptionParams, global_seed: u64) -> Self {
        SieveScorer {
            backend,
            phrases,
            params,
            global_seed,
            batch_size: crate::config::DEFAULT_BATCH_SIZE,
        }
    }

    pub fn from_config(config: &PipelineConfig, backend: &'a dyn Backend, phrases: &'a PhraseList) -> Self {
        Self::new(backend, phrases, config.caption_params(), config.global_seed).with_batch_size(config.batch_size)
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Masked captions for one record. The sampling seed depends only on
    /// the global seed and the uid.
    pub fn masked_captions(&self, record: &SampleRecord) -> Result<Vec<String>> {
        let req = CaptionRequest::new(
            record.image_ref.clone(),
            self.params,
            sample_seed(self.global_seed, &record.uid),
        );
        let captions = self
            .backend
            .generate_captions(&req)
            .map_err(|e| e.at_stage("caption", Some(&record.uid)))?;
        if captions.len() != self.params.r as usize {
            return Err(SieveError::Arity(format!(
                "backend returned {} captions, {} requested",
                captions.len(),
                self.params.r
            ))
            .at_stage("caption", Some(&record.uid)));
        }
        Ok(captions.iter().map(|c| mask_medium_phrases(c, self.phrases)).collect())
    }

    pub fn embed_records(&self, records: &[SampleRecord]) -> Result<Vec<RecordEmbeddings>> {
        let captions = map_ordered(records, |r| self.masked_captions(r))?;
        let mut texts = Vec::with_capacity(records.len() * (self.params.r as usize + 1));
        for (record, caps) in records.iter().zip(&captions) {
            texts.push(mask_medium_phrases(&record.alt_text, self.phrases));
            texts.extend(caps.iter().cloned());
        }
        let chunks: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let embedded = map_ordered(&chunks, |chunk| {
            let v = self.backend.embed_texts(chunk).map_err(|e| e.at_stage("embed", None))?;
            if v.len() != chunk.len() {
                return Err(SieveError::Arity(format!(
                    "backend returned {} embeddings for {} texts",
                    v.len(),
                    chunk.len()
                ))
                .at_stage("embed", None));
            }
            Ok(v)
        })?;
        let mut vectors = embedded.into_iter().flatten();
        let out = records
            .iter()
            .zip(&captions)
            .map(|(record, caps)| {
                let alt = vectors.next().expect("one vector per text");
                RecordEmbeddings {
                    uid: record.uid.clone(),
                    alt,
                    captions: vectors.by_ref().take(caps.len()).collect(),
                }
            })
            .collect();
        Ok(out)
    }

    pub fn score_records(&self, records: &[SampleRecord]) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::with_capacity(records.len());
        for chunk in records.chunks(self.batch_size) {
            for e in self.embed_records(chunk)? {
                let s = sieve_score(&e.captions, &e.alt).map_err(|err| err.at_stage("score", Some(&e.uid)))?;
                out.push((e.uid, s));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSummary {
    pub records: u64,
    pub caption_rows: u64,
    pub info: BackendInfo,
}

/// Captions, masks, and embeds every record of a uid-sorted manifest,
/// writing `r` caption rows and one alt-text row per record.
pub fn embed_manifest(
    manifest: &Path,
    scorer: &SieveScorer,
    captions_out: &Path,
    alt_out: &Path,
) -> Result<EmbedSummary> {
    let info = scorer.backend.info().map_err(|e| e.at_stage("embed", None))?;
    let mut captions_w = ShardWriter::create(captions_out, info.dim, &info.encoder_id)?;
    let mut alt_w = ShardWriter::create(alt_out, info.dim, &info.encoder_id)?;
    let mut records = read_sorted_manifest(manifest)?;
    let mut count = 0u64;
    let mut batch = Vec::with_capacity(scorer.batch_size);
    loop {
        batch.clear();
        for rec in records.by_ref().take(scorer.batch_size) {
            batch.push(rec?);
        }
        if batch.is_empty() {
            break;
        }
        for e in scorer.embed_records(&batch)? {
            for c in &e.captions {
                captions_w.push(&e.uid, c).map_err(|err| err.at_stage("embed", Some(&e.uid)))?;
            }
            alt_w.push(&e.uid, &e.alt).map_err(|err| err.at_stage("embed", Some(&e.uid)))?;
            count += 1;
        }
    }
    let caption_rows = captions_w.finish()?;
    alt_w.finish()?;
    Ok(EmbedSummary {
        records: count,
        caption_rows,
        info,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub rows: u64,
    pub with_clip: u64,
}

fn consistency(uid: &str, message: String) -> SieveError {
    SieveError::Consistency(message).at_stage("score", Some(uid))
}

/// Merge-joins a uid-sorted manifest with its caption and alt-text shards
/// into a score table holding `sieve_raw` and, where present, `clip_raw`.
pub fn score_from_shards(manifest: &Path, captions: &Path, alt: &Path, out: &Path) -> Result<ScoreSummary> {
    let cap_r = ShardReader::open(captions)?;
    let alt_r = ShardReader::open(alt)?;
    if cap_r.dim() != alt_r.dim() || cap_r.encoder_id() != alt_r.encoder_id() {
        return Err(SieveError::Consistency(format!(
            "caption shard ({}, dim {}) and alt-text shard ({}, dim {}) come from different encoders",
            cap_r.encoder_id(),
            cap_r.dim(),
            alt_r.encoder_id(),
            alt_r.dim()
        ))
        .at_stage("score", None));
    }
    let mut cap_rows = cap_r.peekable();
    let mut alt_rows = alt_r;
    let mut writer = ScoreWriter::create(out)?;
    let mut with_clip = 0;
    for rec in read_sorted_manifest(manifest)? {
        let rec = rec?;
        let mut caps = Vec::new();
        while let Some(row) = cap_rows.peek() {
            let uid = match row {
                Ok((uid, _)) => uid.as_str(),
                Err(_) => return Err(cap_rows.next().unwrap().unwrap_err()),
            };
            match uid.cmp(rec.uid.as_str()) {
                std::cmp::Ordering::Less => {
                    return Err(consistency(uid, "caption shard has a uid missing from the manifest".into()))
                }
                std::cmp::Ordering::Equal => caps.push(cap_rows.next().unwrap()?.1),
                std::cmp::Ordering::Greater => break,
            }
        }
        if caps.is_empty() {
            return Err(consistency(&rec.uid, "no caption embeddings".into()));
        }
        let alt_emb = match alt_rows.next().transpose()? {
            Some((uid, v)) if uid == rec.uid => v,
            Some((uid, _)) => {
                return Err(consistency(
                    &rec.uid,
                    format!("alt-text shard has {uid:?} where the manifest has this uid"),
                ))
            }
            None => return Err(consistency(&rec.uid, "no alt-text embedding".into())),
        };
        let mut row = ScoreRow::new(rec.uid.as_str());
        row.sieve_raw = Some(sieve_score(&caps, &alt_emb).map_err(|e| e.at_stage("score", Some(&rec.uid)))?);
        row.clip_raw = rec.clip_score;
        with_clip += u64::from(rec.clip_score.is_some());
        writer.push(&row).map_err(|e| e.at_stage("score", Some(&rec.uid)))?;
    }
    if let Some(row) = cap_rows.next() {
        let (uid, _) = row?;
        return Err(consistency(&uid, "caption shard has rows past the end of the manifest".into()));
    }
    if let Some(row) = alt_rows.next() {
        let (uid, _) = row?;
        return Err(consistency(&uid, "alt-text shard has rows past the end of the manifest".into()));
    }
    Ok(ScoreSummary {
        rows: writer.finish()?,
        with_clip,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuseSummary {
    pub rows: u64,
    pub sieve: NormalizationStats,
    pub clip: NormalizationStats,
}

/// Two passes over a score table: collect min/max of both raw columns,
/// then write normalized columns and the fused score.
pub fn fuse_file(input: &Path, out: &Path, weights: FusionWeights) -> Result<FuseSummary> {
    let mut sieve_acc = StatsAccumulator::default();
    let mut clip_acc = StatsAccumulator::default();
    for row in read_scores(input)? {
        let row = row?;
        sieve_acc.push(&row.uid, row.require(ScoreColumn::SieveRaw)?)?;
        clip_acc.push(&row.uid, row.require(ScoreColumn::ClipRaw)?)?;
    }
    let sieve = sieve_acc.finish("sieve_raw").map_err(|e| e.at_stage("fuse", None))?;
    let clip = clip_acc.finish("clip_raw").map_err(|e| e.at_stage("fuse", None))?;
    let mut writer = ScoreWriter::create(out)?;
    for row in read_scores(input)? {
        let mut row = row?;
        let s = sieve.normalize(row.require(ScoreColumn::SieveRaw)?);
        let c = clip.normalize(row.require(ScoreColumn::ClipRaw)?);
        row.sieve_norm = Some(s);
        row.clip_norm = Some(c);
        row.fused = Some(fuse_scores(s, c, weights)?);
        writer.push(&row)?;
    }
    Ok(FuseSummary {
        rows: writer.finish()?,
        sieve,
        clip,
    })
}

/// Bounded-memory top-k over one or more score tables.
pub fn prune_scores(
    inputs: &[PathBuf],
    k: f64,
    memory_budget: u64,
    column: Option<ScoreColumn>,
) -> Result<SelectionManifest> {
    let source_count = count_rows(inputs)?;
    let mut opts = TopKOptions::new(k, source_count, memory_budget);
    opts.column = column;
    external_topk(inputs, &opts).map_err(|e| e.at_stage("prune", None))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub selection: SelectionManifest,
    pub report: Vec<serde_json::Value>,
}

struct Stopwatch(Instant);

impl Stopwatch {
    fn lap(&mut self) -> f64 {
        let now = Instant::now();
        let s = (now - self.0).as_secs_f64();
        self.0 = now;
        s
    }
}

fn finalize(work: &Path, out_dir: &Path, names: &[&str]) -> Result<()> {
    for name in names {
        let from = work.join(name);
        if from.exists() {
            std::fs::rename(&from, out_dir.join(name)).map_err(|e| SieveError::io(&from, e))?;
        }
    }
    std::fs::remove_dir_all(work).map_err(|e| SieveError::io(work, e))
}

/// caption → mask → embed → score → (normalize + fuse) → prune.
///
/// Outputs are written under [`QUARANTINE_DIR`] and moved to their final
/// names only once every stage has succeeded. Fusion runs when the
/// manifest carries CLIP scores; otherwise the raw Sieve score is pruned.
pub fn run_pipeline(config: &PipelineConfig, manifest: &Path, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let phrases = config.phrase_list()?;
    let backend = build_backend(config)?;
    let scorer = SieveScorer::from_config(config, backend.as_ref(), &phrases);

    std::fs::create_dir_all(out_dir).map_err(|e| SieveError::io(out_dir, e))?;
    let work = out_dir.join(QUARANTINE_DIR);
    if work.exists() {
        std::fs::remove_dir_all(&work).map_err(|e| SieveError::io(&work, e))?;
    }
    std::fs::create_dir(&work).map_err(|e| SieveError::io(&work, e))?;

    let mut report = vec![json!({
        "event": "config",
        "config": config.pairs().into_iter().map(|(k, v)| (k.to_owned(), v.into())).collect::<serde_json::Map<_, _>>(),
    })];
    let mut clock = Stopwatch(Instant::now());

    let embedded = embed_manifest(manifest, &scorer, &work.join(CAPTIONS_EMB), &work.join(ALT_EMB))?;
    report.push(json!({"event": "stage", "stage": "embed", "seconds": clock.lap(), "summary": embedded}));

    let sieve_path = work.join(SIEVE_SCORES);
    let scored = score_from_shards(manifest, &work.join(CAPTIONS_EMB), &work.join(ALT_EMB), &sieve_path)?;
    report.push(json!({"event": "stage", "stage": "score", "seconds": clock.lap(), "summary": scored}));

    let prune_input = if scored.with_clip > 0 {
        let fused_path = work.join(FUSED_SCORES);
        let fused = fuse_file(&sieve_path, &fused_path, config.fusion_weights())?;
        report.push(json!({"event": "stage", "stage": "fuse", "seconds": clock.lap(), "summary": fused}));
        fused_path
    } else {
        sieve_path
    };

    let selection = prune_scores(&[prune_input], config.k, config.memory_budget, None)?;
    write_selection(&selection, work.join(SELECTION))?;
    report.push(json!({
        "event": "stage",
        "stage": "prune",
        "seconds": clock.lap(),
        "summary": {
            "source_count": selection.source_count(),
            "selected": selection.len(),
            "k": selection.k(),
            "scorer_id": selection.scorer_id(),
        },
    }));

    let report_path = work.join(REPORT);
    let io = |e| SieveError::io(&report_path, e);
    let mut w = BufWriter::new(File::create(&report_path).map_err(io)?);
    for line in &report {
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    drop(w);

    finalize(
        &work,
        out_dir,
        &[CAPTIONS_EMB, ALT_EMB, SIEVE_SCORES, FUSED_SCORES, SELECTION, REPORT],
    )?;
    Ok(RunOutcome { selection, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::{read_scores, read_selection, write_manifest};
    use crate::synth::{generate_synthetic_corpus, SynthSpec};

    fn corpus(dir: &Path, n: usize, with_clip: bool) -> PathBuf {
        let mut c = generate_synthetic_corpus(&SynthSpec::new(n, 0.3, 11)).unwrap();
        if !with_clip {
            c.records.iter_mut().for_each(|r| r.clip_score = None);
        }
        let path = dir.join("m.jsonl");
        write_manifest(&c.records, &path).unwrap();
        path
    }

    #[test]
    fn run_selects_floor_k_n_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 100, true);
        let config = PipelineConfig::default();
        let a = run_pipeline(&config, &m, &dir.path().join("a")).unwrap();
        let b = run_pipeline(&config, &m, &dir.path().join("b")).unwrap();
        assert_eq!(a.selection.len(), 20);
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.selection.scorer_id(), "fused");
        for name in [SIEVE_SCORES, FUSED_SCORES, SELECTION, CAPTIONS_EMB] {
            let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
            let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        assert!(!dir.path().join("a").join(QUARANTINE_DIR).exists());
        assert_eq!(read_selection(dir.path().join("a").join(SELECTION)).unwrap(), a.selection);
    }

    #[test]
    fn alpha_zero_matches_sieve_only() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 200, true);
        let mut config = PipelineConfig::default();
        config.alpha = 0.0;
        let fused = run_pipeline(&config, &m, &dir.path().join("f")).unwrap();
        let sieve_only = prune_scores(
            &[dir.path().join("f").join(SIEVE_SCORES)],
            config.k,
            config.memory_budget,
            Some(ScoreColumn::SieveRaw),
        )
        .unwrap();
        assert_eq!(fused.selection.uids(), sieve_only.uids());
    }

    #[test]
    fn without_clip_prunes_raw_sieve() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 50, false);
        let out = run_pipeline(&PipelineConfig::default(), &m, &dir.path().join("o")).unwrap();
        assert_eq!(out.selection.scorer_id(), "sieve_raw");
        assert!(!dir.path().join("o").join(FUSED_SCORES).exists());
    }

    #[test]
    fn failure_leaves_outputs_in_quarantine() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = generate_synthetic_corpus(&SynthSpec::new(10, 0.3, 2)).unwrap();
        c.records[5].image_ref = "nowhere".into();
        let m = dir.path().join("m.jsonl");
        write_manifest(&c.records, &m).unwrap();
        let out = dir.path().join("o");
        let err = run_pipeline(&PipelineConfig::default(), &m, &out).unwrap_err();
        match &err {
            SieveError::Stage { stage, uid, .. } => {
                assert_eq!(*stage, "caption");
                assert_eq!(uid.as_deref(), Some(c.records[5].uid.as_str()));
            }
            other => panic!("{other}"),
        }
        assert_eq!(err.class(), crate::ErrorClass::Backend);
        assert!(out.join(QUARANTINE_DIR).exists());
        assert!(!out.join(SELECTION).exists());
    }

    #[test]
    fn scorer_matches_file_stages() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 60, true);
        let (b, p) = (MockBackend::new(), PhraseList::default());
        let scorer = SieveScorer::new(&b, &p, CaptionParams::default(), 0).with_batch_size(7);
        let (c, a, s) = (dir.path().join("c.emb"), dir.path().join("a.emb"), dir.path().join("s.jsonl"));
        embed_manifest(&m, &scorer, &c, &a).unwrap();
        score_from_shards(&m, &c, &a, &s).unwrap();
        let from_files: Vec<(String, f64)> = read_scores(&s)
            .unwrap()
            .map(|r| r.map(|r| (r.uid, r.sieve_raw.unwrap())))
            .collect::<Result<_>>()
            .unwrap();
        let records: Vec<_> = read_sorted_manifest(&m).unwrap().collect::<Result<_>>().unwrap();
        let in_memory = SieveScorer::new(&b, &p, CaptionParams::default(), 0).score_records(&records).unwrap();
        assert_eq!(from_files, in_memory);
    }

    #[test]
    fn score_rejects_mismatched_shards() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path(), 20, true);
        let (b, p) = (MockBackend::new(), PhraseList::default());
        let scorer = SieveScorer::new(&b, &p, CaptionParams::default(), 0);
        let (c, a) = (dir.path().join("c.emb"), dir.path().join("a.emb"));
        embed_manifest(&m, &scorer, &c, &a).unwrap();
        let records: Vec<_> = read_sorted_manifest(&m).unwrap().collect::<Result<_>>().unwrap();
        let short = dir.path().join("short.jsonl");
        write_manifest(&records[..10], &short).unwrap();
        let err = score_from_shards(&short, &c, &a, &dir.path().join("s.jsonl")).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Data);
    }
}
