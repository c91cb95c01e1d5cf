//! JSON bodies of the inference-service protocol.
//!
//! ```text
//! GET  /info     -> InfoResponse
//! POST /caption  CaptionBody -> CaptionResponse
//! POST /embed    EmbedBody   -> EmbedResponse
//! non-200        -> ErrorBody
//! ```

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub dim: usize,
    pub encoder_id: String,
    pub captioner_id: String,
    /// Services that cannot reproduce captions across calls say so here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionBody {
    /// Base64 image bytes or a URL.
    pub image: String,
    pub r: u32,
    pub top_p: f64,
    pub min_len: u32,
    pub max_len: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedBody {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
