use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use super::wire::{CaptionBody, CaptionResponse, EmbedBody, EmbedResponse, ErrorBody, InfoResponse};
use super::{check_embeddings, Backend, BackendInfo, CaptionRequest};
use crate::error::{Result, SieveError};

pub const BACKEND_URL_ENV: &str = "SIEVE_BACKEND_URL";

/// HTTP client for the inference service.
pub struct ServiceBackend {
    base: String,
    agent: Agent,
    info: OnceLock<BackendInfo>,
}

impl ServiceBackend {
    pub fn new(url: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        ServiceBackend {
            base: url.trim_end_matches('/').to_owned(),
            agent,
            info: OnceLock::new(),
        }
    }

    /// Uses `SIEVE_BACKEND_URL` when set, else `url`.
    pub fn from_env_or(url: &str) -> Self {
        match std::env::var(BACKEND_URL_ENV) {
            Ok(u) if !u.is_empty() => Self::new(&u),
            _ => Self::new(url),
        }
    }

    pub fn url(&self) -> &str {
        &self.base
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self
            .agent
            .get(format!("{}{path}", self.base))
            .call()
            .map_err(|e| SieveError::Transport(e.to_string()))?;
        decode(path, resp)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(body)
            .map_err(|e| SieveError::Transport(e.to_string()))?;
        decode(path, resp)
    }
}

fn decode<T: DeserializeOwned>(path: &str, mut resp: ureq::http::Response<ureq::Body>) -> Result<T> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .with_config()
        .limit(1 << 30)
        .read_to_string()
        .map_err(|e| SieveError::Transport(e.to_string()))?;
    if status != 200 {
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .map_err(|_| SieveError::Protocol(format!("{path}: status {status} without an error body")))?;
        return Err(match status {
            404 => SieveError::NotFound(message),
            _ => SieveError::Protocol(format!("{path}: status {status}: {message}")),
        });
    }
    serde_json::from_str(&text).map_err(|e| SieveError::Protocol(format!("{path}: {e}")))
}

/// URLs and data already in base64 pass through; local files are encoded.
fn image_payload(image_ref: &str) -> Result<String> {
    if image_ref.starts_with("http://") || image_ref.starts_with("https://") || image_ref.starts_with("data:") {
        return Ok(image_ref.to_owned());
    }
    let path = image_ref.strip_prefix("file://").unwrap_or(image_ref);
    match std::fs::read(path) {
        Ok(bytes) => Ok(base64::engine::general_purpose::STANDARD.encode(bytes)),
        Err(_) if !image_ref.starts_with("file://") => Ok(image_ref.to_owned()),
        Err(_) => Err(SieveError::NotFound(image_ref.to_owned())),
    }
}

impl Backend for ServiceBackend {
    fn info(&self) -> Result<BackendInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let resp: InfoResponse = self.get("/info")?;
        if resp.dim == 0 {
            return Err(SieveError::Protocol("/info advertised dim 0".into()));
        }
        if resp.deterministic == Some(false) {
            log::warn!("backend at {} declares non-deterministic captions", self.base);
        }
        let info = BackendInfo {
            dim: resp.dim,
            encoder_id: resp.encoder_id,
            captioner_id: resp.captioner_id,
        };
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn generate_captions(&self, req: &CaptionRequest) -> Result<Vec<String>> {
        req.params.validate()?;
        let body = CaptionBody {
            image: image_payload(&req.image_ref)?,
            r: req.params.r,
            top_p: req.params.top_p,
            min_len: req.params.min_len,
            max_len: req.params.max_len,
            seed: req.seed,
        };
        let resp: CaptionResponse = self.post("/caption", &body)?;
        if resp.captions.len() != req.params.r as usize {
            return Err(SieveError::Protocol(format!(
                "/caption returned {} captions, {} requested",
                resp.captions.len(),
                req.params.r
            )));
        }
        Ok(resp.captions)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let dim = self.info()?.dim;
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedBody {
                texts: texts.to_vec(),
            },
        )?;
        check_embeddings(dim, texts, &resp.embeddings)?;
        Ok(resp.embeddings)
    }
}
