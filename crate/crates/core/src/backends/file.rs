use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{check_embeddings, Backend, BackendInfo, CaptionRequest};
use crate::corpus_io::ShardReader;
use crate::error::{Result, SieveError};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionLine {
    image_ref: String,
    captions: Vec<String>,
}

/// Serves precomputed captions and/or embeddings.
///
/// Captions come from a JSONL file of `{"image_ref", "captions"}` lines and
/// ignore the sampling parameters. Embeddings come from a shard whose row
/// keys are the exact (already masked) texts. Whatever is not precomputed is
/// delegated to an inner backend.
pub struct FileBackend {
    captions: Option<HashMap<String, Vec<String>>>,
    embeddings: Option<(usize, String, HashMap<String, Vec<f32>>)>,
    fallback: Option<Box<dyn Backend>>,
}

impl FileBackend {
    pub fn new() -> Self {
        FileBackend {
            captions: None,
            embeddings: None,
            fallback: None,
        }
    }

    pub fn with_captions(mut self, captions: HashMap<String, Vec<String>>) -> Self {
        self.captions = Some(captions);
        self
    }

    pub fn with_captions_file(self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| SieveError::io(path, e))?;
        let mut map = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| SieveError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CaptionLine = serde_json::from_str(&line).map_err(|e| SieveError::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
            map.insert(parsed.image_ref, parsed.captions);
        }
        Ok(self.with_captions(map))
    }

    pub fn with_embeddings_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = ShardReader::open(path)?;
        let mut map = HashMap::new();
        for row in reader.by_ref() {
            let (text, v) = row?;
            map.insert(text, v);
        }
        self.embeddings = Some((reader.dim(), reader.encoder_id().to_owned(), map));
        Ok(self)
    }

    pub fn with_fallback(mut self, backend: Box<dyn Backend>) -> Self {
        self.fallback = Some(backend);
        self
    }

    fn fallback(&self, what: &str) -> Result<&dyn Backend> {
        self.fallback
            .as_deref()
            .ok_or_else(|| SieveError::NotFound(format!("no precomputed {what} and no fallback backend")))
    }
}

impl Default for FileBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for FileBackend {
    fn info(&self) -> Result<BackendInfo> {
        let inner = match &self.fallback {
            Some(b) => Some(b.info()?),
            None => None,
        };
        let (dim, encoder_id) = match (&self.embeddings, &inner) {
            (Some((dim, id, _)), _) => (*dim, id.clone()),
            (None, Some(i)) => (i.dim, i.encoder_id.clone()),
            (None, None) => return Err(SieveError::NotFound("embedding dimension".into())),
        };
        let captioner_id = match (&self.captions, &inner) {
            (Some(_), _) => "precomputed".to_owned(),
            (None, Some(i)) => i.captioner_id.clone(),
            (None, None) => "none".to_owned(),
        };
        Ok(BackendInfo {
            dim,
            encoder_id,
            captioner_id,
        })
    }

    fn generate_captions(&self, req: &CaptionRequest) -> Result<Vec<String>> {
        let Some(map) = &self.captions else {
            return self.fallback("captions")?.generate_captions(req);
        };
        let r = req.params.r as usize;
        if r == 0 {
            return Err(SieveError::Arity("r must be at least 1".into()));
        }
        let stored = map
            .get(&req.image_ref)
            .ok_or_else(|| SieveError::NotFound(req.image_ref.clone()))?;
        if stored.len() < r {
            return Err(SieveError::Arity(format!(
                "{:?} has {} precomputed captions, {r} requested",
                req.image_ref,
                stored.len()
            )));
        }
        Ok(stored[..r].to_vec())
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let Some((dim, _, map)) = &self.embeddings else {
            return self.fallback("embeddings")?.embed_texts(texts);
        };
        let out = texts
            .iter()
            .map(|t| map.get(t).cloned().ok_or_else(|| SieveError::NotFound(format!("embedding for {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        check_embeddings(*dim, texts, &out)?;
        Ok(out)
    }
}
