//! Caption generation and sentence embedding behind one trait.
//!
//! Three implementations share the contract: a deterministic mock, a
//! precomputed-file backend, and an HTTP client for the inference service.

mod file;
pub mod mock;
#[cfg(feature = "service")]
mod service;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SieveError};

pub use file::FileBackend;
pub use mock::MockBackend;
#[cfg(feature = "service")]
pub use service::ServiceBackend;

/// Nucleus-sampling parameters shared by every caption request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptionParams {
    pub r: u32,
    pub top_p: f64,
    pub min_len: u32,
    pub max_len: u32,
}

impl CaptionParams {
    pub const DEFAULT_R: u32 = 8;
    pub const DEFAULT_TOP_P: f64 = 0.9;
    pub const DEFAULT_MIN_LEN: u32 = 5;
    pub const DEFAULT_MAX_LEN: u32 = 20;

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(SieveError::Arity("r must be at least 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(SieveError::Domain(format!("top_p {} outside (0,1]", self.top_p)));
        }
        if self.min_len == 0 {
            return Err(SieveError::Domain("min_len must be positive".into()));
        }
        if self.max_len < self.min_len {
            return Err(SieveError::Domain(format!(
                "max_len {} below min_len {}",
                self.max_len, self.min_len
            )));
        }
        Ok(())
    }
}

impl Default for CaptionParams {
    fn default() -> Self {
        CaptionParams {
            r: Self::DEFAULT_R,
            top_p: Self::DEFAULT_TOP_P,
            min_len: Self::DEFAULT_MIN_LEN,
            max_len: Self::DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRequest {
    pub image_ref: String,
    pub params: CaptionParams,
    pub seed: u64,
}

impl CaptionRequest {
    pub fn new(image_ref: impl Into<String>, params: CaptionParams, seed: u64) -> Self {
        CaptionRequest {
            image_ref: image_ref.into(),
            params,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub dim: usize,
    pub encoder_id: String,
    pub captioner_id: String,
}

pub trait Backend: Send + Sync {
    fn info(&self) -> Result<BackendInfo>;

    /// Exactly `req.params.r` captions; identical requests give identical
    /// output.
    fn generate_captions(&self, req: &CaptionRequest) -> Result<Vec<String>>;

    /// One finite vector of `info().dim` components per input text.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn info(&self) -> Result<BackendInfo> {
        (**self).info()
    }
    fn generate_captions(&self, req: &CaptionRequest) -> Result<Vec<String>> {
        (**self).generate_captions(req)
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        (**self).embed_texts(texts)
    }
}

/// Checks a backend's embedding output against the request.
pub(crate) fn check_embeddings(dim: usize, texts: &[String], embs: &[Vec<f32>]) -> Result<()> {
    if embs.len() != texts.len() {
        return Err(SieveError::Protocol(format!(
            "asked for {} embeddings, got {}",
            texts.len(),
            embs.len()
        )));
    }
    for (t, v) in texts.iter().zip(embs) {
        if v.len() != dim {
            return Err(SieveError::Protocol(format!(
                "embedding of dim {} where {dim} was advertised",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(SieveError::Protocol(format!("non-finite embedding for text {t:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_match_reported_settings() {
        let p = CaptionParams::default();
        assert_eq!((p.r, p.top_p, p.min_len, p.max_len), (8, 0.9, 5, 20));
        assert!(p.validate().is_ok());
    }

    #[test]
    fn param_validation() {
        let bad = |f: fn(&mut CaptionParams)| {
            let mut p = CaptionParams::default();
            f(&mut p);
            p.validate().is_err()
        };
        assert!(bad(|p| p.r = 0));
        assert!(bad(|p| p.top_p = 0.0));
        assert!(bad(|p| p.top_p = 1.5));
        assert!(bad(|p| p.min_len = 0));
        assert!(bad(|p| p.max_len = 4));
    }
}
