//! Alignment math: cosine similarity, the max-over-captions Sieve score,
//! min-max normalization, and weighted fusion with CLIPScore.

use crate::corpus_io::SampleRecord;
use crate::error::{Result, SieveError};

/// Weight given to the normalized CLIP score when fusing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    alpha: f64,
}

impl FusionWeights {
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SieveError::Domain(format!("alpha {alpha} outside [0,1]")));
        }
        Ok(FusionWeights { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            alpha: Self::DEFAULT_ALPHA,
        }
    }
}

/// Min and max of a score column over the corpus being pruned.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationStats {
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl NormalizationStats {
    pub fn of(value: f64) -> Self {
        NormalizationStats {
            min: value,
            max: value,
            count: 1,
        }
    }

    /// Commutative, associative merge so shards can be scanned independently.
    pub fn merge(self, other: NormalizationStats) -> Self {
        NormalizationStats {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
            count: self.count + other.count,
        }
    }

    pub fn push(&mut self, value: f64) {
        *self = self.merge(Self::of(value));
    }

    /// Maps `raw` into [0,1]. A degenerate range maps everything to 0.5.
    pub fn normalize(&self, raw: f64) -> f64 {
        let range = self.max - self.min;
        if range <= 0.0 {
            return 0.5;
        }
        if range.is_infinite() {
            // Halving keeps the range finite; the endpoints still map to exactly 0 and 1.
            return ((raw / 2.0 - self.min / 2.0) / (self.max / 2.0 - self.min / 2.0)).clamp(0.0, 1.0);
        }
        ((raw - self.min) / range).clamp(0.0, 1.0)
    }
}

/// Accumulates [`NormalizationStats`] over a stream of `(uid, raw)` pairs.
#[derive(Debug, Default, Clone)]
pub struct StatsAccumulator {
    stats: Option<NormalizationStats>,
}

impl StatsAccumulator {
    pub fn push(&mut self, uid: &str, raw: f64) -> Result<()> {
        if !raw.is_finite() {
            return Err(SieveError::NonFinite { uid: uid.to_owned() });
        }
        match &mut self.stats {
            Some(s) => s.push(raw),
            None => self.stats = Some(NormalizationStats::of(raw)),
        }
        Ok(())
    }

    pub fn merge(self, other: StatsAccumulator) -> Self {
        let stats = match (self.stats, other.stats) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            (a, b) => a.or(b),
        };
        StatsAccumulator { stats }
    }

    pub fn finish(self, what: &str) -> Result<NormalizationStats> {
        self.stats
            .ok_or_else(|| SieveError::EmptyInput(format!("no {what} scores to normalize")))
    }
}

/// Cosine similarity of two vectors, accumulated in f64 and clamped to
/// [-1, 1]. A zero-norm vector has similarity 0 with everything.
pub fn cosine(x: &[f32], y: &[f32]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(SieveError::Shape {
            expected: x.len(),
            found: y.len(),
        });
    }
    let (mut dot, mut nx, mut ny) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0))
}

/// The best cosine between any caption embedding and the alt-text embedding.
/// Both sides must already be embeddings of masked text.
pub fn sieve_score<V: AsRef<[f32]>>(caption_embs: &[V], alt_emb: &[f32]) -> Result<f64> {
    if caption_embs.is_empty() {
        return Err(SieveError::Arity("sieve score needs at least one caption".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for c in caption_embs {
        best = best.max(cosine(c.as_ref(), alt_emb)?);
    }
    Ok(best)
}

/// Two-pass min-max normalization over an in-memory column.
pub fn min_max_normalize<S: AsRef<str>>(scores: &[(S, f64)]) -> Result<(Vec<f64>, NormalizationStats)> {
    let mut acc = StatsAccumulator::default();
    for (uid, raw) in scores {
        acc.push(uid.as_ref(), *raw)?;
    }
    let stats = acc.finish("input")?;
    let normalized = scores.iter().map(|(_, raw)| stats.normalize(*raw)).collect();
    Ok((normalized, stats))
}

/// `(1 - alpha) * sieve_norm + alpha * clip_norm`.
pub fn fuse_scores(sieve_norm: f64, clip_norm: f64, weights: FusionWeights) -> Result<f64> {
    for (name, v) in [("sieve_norm", sieve_norm), ("clip_norm", clip_norm)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SieveError::Domain(format!("{name} {v} outside [0,1]")));
        }
    }
    let a = weights.alpha;
    // Endpoints are exact so alpha in {0, 1} reproduces one input bit-for-bit.
    if a == 0.0 {
        return Ok(sieve_norm);
    }
    if a == 1.0 {
        return Ok(clip_norm);
    }
    Ok((1.0 - a) * sieve_norm + a * clip_norm)
}

/// The CLIPScore stored on the record, computed upstream by a CLIP model.
pub fn clip_score_passthrough(record: &SampleRecord) -> Result<f64> {
    let v = record.clip_score.ok_or_else(|| SieveError::MissingScore {
        uid: record.uid.clone(),
        column: "clip",
    })?;
    if !v.is_finite() {
        return Err(SieveError::NonFinite {
            uid: record.uid.clone(),
        });
    }
    Ok(v)
}
