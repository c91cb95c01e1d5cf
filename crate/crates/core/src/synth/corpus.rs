use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backends::mock::STOPWORDS;
use crate::corpus_io::{read_sorted_manifest, write_manifest, SampleRecord};
use crate::error::{Result, SieveError};

/// Medium phrases prepended to synthetic alt-text.
const ALT_PREFIXES: [&str; 5] = ["a photo of", "an image of", "a picture of", "photo of", "image of"];
const SCENE_SIZE: usize = 6;
/// Aligned alt-text keeps at least this many of the scene's tokens (60%).
const MIN_SHARED: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub misalignment_rate: f64,
    pub vocab_size: usize,
    pub seed: u64,
    pub medium_phrase_rate: f64,
    /// Fraction of misaligned pairs whose simulated CLIPScore is drawn
    /// from above the aligned distribution.
    #[serde(default = "default_fp_rate")]
    pub clip_false_positive_rate: f64,
}

fn default_fp_rate() -> f64 {
    0.3
}

impl SynthSpec {
    pub fn new(n: usize, misalignment_rate: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            misalignment_rate,
            vocab_size: 2000,
            seed,
            medium_phrase_rate: 0.0,
            clip_false_positive_rate: default_fp_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("misalignment_rate", self.misalignment_rate),
            ("medium_phrase_rate", self.medium_phrase_rate),
            ("clip_false_positive_rate", self.clip_false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SieveError::Domain(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.n == 0 {
            return Err(SieveError::Domain("n must be positive".into()));
        }
        if self.vocab_size < 2 * SCENE_SIZE {
            return Err(SieveError::Domain(format!(
                "vocab_size must be at least {}",
                2 * SCENE_SIZE
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Aligned,
    Misaligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub records: Vec<SampleRecord>,
    pub labels: BTreeMap<String, Label>,
}

impl LabeledCorpus {
    pub fn aligned_fraction(&self) -> f64 {
        let aligned = self.labels.values().filter(|l| **l == Label::Aligned).count();
        aligned as f64 / self.labels.len().max(1) as f64
    }
}

fn vocab_token(i: usize) -> String {
    format!("v{i:04}")
}

fn draw_scene(rng: &mut ChaCha8Rng, vocab_size: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, vocab_size, SCENE_SIZE).into_vec()
}

fn describe(rng: &mut ChaCha8Rng, scene: &[usize], vocab_size: usize) -> Vec<String> {
    let shared = rng.random_range(MIN_SHARED..=scene.len());
    let mut picked: Vec<usize> = scene.to_vec();
    picked.shuffle(rng);
    picked.truncate(shared);
    let mut tokens: Vec<String> = picked.into_iter().map(vocab_token).collect();
    for _ in 0..rng.random_range(0..=2) {
        tokens.push(STOPWORDS[rng.random_range(0..STOPWORDS.len())].to_owned());
    }
    for _ in 0..rng.random_range(0..=1) {
        let t = loop {
            let t = rng.random_range(0..vocab_size);
            if !scene.contains(&t) {
                break t;
            }
        };
        tokens.push(vocab_token(t));
    }
    tokens.shuffle(rng);
    tokens
}

/// Builds a labeled corpus; identical specs give identical corpora.
///
/// Exactly `round(rate * n)` records are misaligned. Each image locator
/// carries its scene tokens for the mock captioner. Aligned alt-text reuses
/// at least 60% of the scene; misaligned alt-text describes a different
/// scene. The simulated CLIPScore is a noisy class signal plus a
/// false-positive channel that scores some misaligned pairs highly.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<LabeledCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let misaligned_count = (spec.misalignment_rate * n as f64).round() as usize;
    let mut misaligned = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, misaligned_count) {
        misaligned[i] = true;
    }
    let width = (n.max(2) - 1).to_string().len();
    let clip_aligned = Normal::new(0.30, 0.04).unwrap();
    let clip_misaligned = Normal::new(0.20, 0.04).unwrap();
    let clip_false_positive = Normal::new(0.34, 0.03).unwrap();

    let mut records = Vec::with_capacity(n);
    let mut labels = BTreeMap::new();
    for (i, &is_misaligned) in misaligned.iter().enumerate() {
        let uid = format!("syn-{i:0width$}");
        let scene = draw_scene(&mut rng, spec.vocab_size);
        let described = if is_misaligned {
            let other = loop {
                let s = draw_scene(&mut rng, spec.vocab_size);
                if s.iter().all(|t| !scene.contains(t)) {
                    break s;
                }
            };
            describe(&mut rng, &other, spec.vocab_size)
        } else {
            describe(&mut rng, &scene, spec.vocab_size)
        };
        let mut alt = described.join(" ");
        if rng.random_bool(spec.medium_phrase_rate) {
            let prefix = ALT_PREFIXES[rng.random_range(0..ALT_PREFIXES.len())];
            alt = format!("{prefix} {alt}");
        }
        let clip = if !is_misaligned {
            clip_aligned.sample(&mut rng)
        } else if rng.random_bool(spec.clip_false_positive_rate) {
            clip_false_positive.sample(&mut rng)
        } else {
            clip_misaligned.sample(&mut rng)
        };
        let image_ref = format!(
            "mock:{}",
            scene.iter().map(|&t| vocab_token(t)).collect::<Vec<_>>().join("+")
        );
        let mut record = SampleRecord::new(uid.clone(), alt, image_ref);
        record.clip_score = Some(clip);
        record.text_coverage = Some(rng.random::<f64>().powi(3));
        records.push(record);
        labels.insert(
            uid,
            if is_misaligned {
                Label::Misaligned
            } else {
                Label::Aligned
            },
        );
    }
    Ok(LabeledCorpus { records, labels })
}

#[derive(Serialize, Deserialize)]
struct LabelLine {
    uid: String,
    label: Label,
}

/// Writes `manifest.jsonl`, `labels.jsonl`, and `spec.json` into `dir`.
pub fn write_corpus_dir(corpus: &LabeledCorpus, spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| SieveError::io(dir, e))?;
    write_manifest(&corpus.records, dir.join("manifest.jsonl"))?;
    let labels_path = dir.join("labels.jsonl");
    let io = |e| SieveError::io(&labels_path, e);
    let mut out = BufWriter::new(File::create(&labels_path).map_err(io)?);
    for (uid, label) in &corpus.labels {
        let line = serde_json::to_string(&LabelLine {
            uid: uid.clone(),
            label: *label,
        })
        .expect("labels serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(spec).expect("spec serializes"))
        .map_err(|e| SieveError::io(&spec_path, e))
}

pub fn read_corpus_dir(dir: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let dir = dir.as_ref();
    let records = read_sorted_manifest(dir.join("manifest.jsonl"))?.collect::<Result<Vec<_>>>()?;
    let labels_path = dir.join("labels.jsonl");
    let file = File::open(&labels_path).map_err(|e| SieveError::io(&labels_path, e))?;
    let mut labels = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SieveError::io(&labels_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| SieveError::Parse {
            path: labels_path.clone(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        labels.insert(parsed.uid, parsed.label);
    }
    if labels.len() != records.len() || records.iter().any(|r| !labels.contains_key(&r.uid)) {
        return Err(SieveError::Consistency(
            "labels do not cover exactly the manifest uids".into(),
        ));
    }
    Ok(LabeledCorpus { records, labels })
}
