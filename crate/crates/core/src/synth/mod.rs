//! Ground-truth-labeled synthetic corpora and signal-quality metrics.
//!
//! Downstream CLIP training is out of reach at desk scale, so pruning
//! signals are judged by how well they separate known-aligned from
//! known-misaligned pairs: ROC AUC and precision of the top-k selection.

mod corpus;
mod metrics;

pub use corpus::{generate_synthetic_corpus, read_corpus_dir, write_corpus_dir, Label, LabeledCorpus, SynthSpec};
pub use metrics::{
    detection_metrics, k_sweep, roc_auc, similarity_matrix, DetectionMetrics, SweepRow, DEFAULT_PRECISION_KS,
};
