//! Dataset pruning for noisy image-text corpora.
//!
//! Each pair is scored by how well its alt-text agrees with captions
//! generated for the image, measured as the best cosine similarity between
//! sentence embeddings of the captions and the alt-text after medium
//! phrases ("a photo of") are masked out. Scores can be min-max normalized
//! and fused with CLIPScore, then the top fraction is selected under a
//! deterministic total order.

pub mod backends;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod hash;
pub mod pipeline;
pub mod pruning;
pub mod scoring;
pub mod synth;
pub mod textnorm;

pub use error::{ErrorClass, Result, SieveError};
