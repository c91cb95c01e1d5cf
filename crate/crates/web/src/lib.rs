//! Browser demo: phrase masking, a caption similarity matrix, and an
//! alpha/k explorer over a synthetic corpus, all on the mock backend.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sieve_core::backends::{CaptionParams, MockBackend};
use sieve_core::pipeline::SieveScorer;
use sieve_core::pruning::rank_and_select;
use sieve_core::scoring::{fuse_scores, min_max_normalize, FusionWeights};
use sieve_core::synth::{generate_synthetic_corpus, roc_auc, Label, SynthSpec};
use sieve_core::textnorm::{default_phrase_list, mask_medium_phrases, PhraseList};
use sieve_core::Result;

/// Masks with the built-in list, or with `phrases` (one per line) when it
/// has any entries.
pub fn mask(text: &str, phrases: &str) -> Result<String> {
    let list = custom_or_default(phrases)?;
    Ok(text.lines().map(|l| mask_medium_phrases(l, &list)).collect::<Vec<_>>().join("\n"))
}

fn custom_or_default(phrases: &str) -> Result<PhraseList> {
    let list = PhraseList::parse(phrases)?;
    Ok(if list.is_empty() { default_phrase_list() } else { list })
}

#[derive(Debug, Serialize)]
pub struct Matrix {
    pub texts: Vec<String>,
    pub masked: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Cosine matrix over the non-blank lines of `texts`.
pub fn matrix(texts: &str) -> Result<Matrix> {
    let texts: Vec<String> = texts.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    let phrases = default_phrase_list();
    let values = sieve_core::synth::similarity_matrix(&texts, &MockBackend::new(), &phrases)?;
    let masked = texts.iter().map(|t| mask_medium_phrases(t, &phrases)).collect();
    Ok(Matrix { texts, masked, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub alpha: f64,
    pub k: f64,
    pub selected: usize,
    pub precision: Option<f64>,
    pub auc: Option<f64>,
}

/// Normalized Sieve and CLIP columns of one synthetic corpus.
#[derive(Debug)]
pub struct Explorer {
    uids: Vec<String>,
    sieve: Vec<f64>,
    clip: Vec<f64>,
    aligned: Vec<bool>,
}

impl Explorer {
    pub fn build(n: usize, rate: f64, seed: u64) -> Result<Self> {
        let mut spec = SynthSpec::new(n, rate, seed);
        spec.medium_phrase_rate = 0.5;
        let corpus = generate_synthetic_corpus(&spec)?;
        let backend = MockBackend::new();
        let phrases = default_phrase_list();
        let raw = SieveScorer::new(&backend, &phrases, CaptionParams::default(), seed).score_records(&corpus.records)?;
        let clip_raw: Vec<(&str, f64)> = corpus
            .records
            .iter()
            .map(|r| Ok((r.uid.as_str(), sieve_core::scoring::clip_score_passthrough(r)?)))
            .collect::<Result<_>>()?;
        let (sieve, _) = min_max_normalize(&raw)?;
        let (clip, _) = min_max_normalize(&clip_raw)?;
        let aligned = raw.iter().map(|(u, _)| corpus.labels[u] == Label::Aligned).collect();
        let uids = raw.into_iter().map(|(u, _)| u).collect();
        Ok(Explorer { uids, sieve, clip, aligned })
    }

    pub fn len(&self) -> usize {
        self.uids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uids.is_empty()
    }

    pub fn fused(&self, alpha: f64) -> Result<Vec<f64>> {
        let w = FusionWeights::new(alpha)?;
        self.sieve.iter().zip(&self.clip).map(|(s, c)| fuse_scores(*s, *c, w)).collect()
    }

    /// Precision of the top-k selection under fused scores at `alpha`.
    pub fn evaluate(&self, alpha: f64, k: f64) -> Result<Point> {
        let fused = self.fused(alpha)?;
        let sel = rank_and_select(self.uids.iter().cloned().zip(fused.iter().copied()), k, self.len() as u64, "fused")?;
        let index: std::collections::HashMap<&str, usize> =
            self.uids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let hits = sel.uids().iter().filter(|u| self.aligned[index[u.as_str()]]).count();
        let scored: Vec<(f64, bool)> = fused.into_iter().zip(self.aligned.iter().copied()).collect();
        Ok(Point {
            alpha,
            k,
            selected: sel.len(),
            precision: (!sel.is_empty()).then(|| hits as f64 / sel.len() as f64),
            auc: roc_auc(&scored),
        })
    }

    /// `steps + 1` evenly spaced alphas from 0 to 1.
    pub fn alpha_curve(&self, k: f64, steps: usize) -> Result<Vec<Point>> {
        let steps = steps.max(1);
        (0..=steps).map(|i| self.evaluate(i as f64 / steps as f64, k)).collect()
    }
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = maskText)]
pub fn mask_text(text: &str, phrases: &str) -> std::result::Result<String, JsError> {
    mask(text, phrases).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON `{texts, masked, values}`.
#[wasm_bindgen(js_name = similarityMatrix)]
pub fn similarity_matrix(texts: &str) -> std::result::Result<String, JsError> {
    js(matrix(texts))
}

#[wasm_bindgen]
pub struct FusionDemo(Explorer);

#[wasm_bindgen]
impl FusionDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, rate: f64, seed: u32) -> std::result::Result<FusionDemo, JsError> {
        Explorer::build(n, rate, seed.into()).map(FusionDemo).map_err(|e| JsError::new(&e.to_string()))
    }

    /// JSON `Point`.
    pub fn evaluate(&self, alpha: f64, k: f64) -> std::result::Result<String, JsError> {
        js(self.0.evaluate(alpha, k))
    }

    /// JSON list of `Point`s across alpha.
    pub fn curve(&self, k: f64, steps: usize) -> std::result::Result<String, JsError> {
        js(self.0.alpha_curve(k, steps))
    }
}
