use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Backend, BackendInfo, CaptionRequest};
use crate::error::{Result, SieveError};
use crate::hash::{hash64, mix64};

pub const MOCK_DIM: usize = 64;
pub const MOCK_ENCODER_ID: &str = "mock-bow-v1";
pub const MOCK_CAPTIONER_ID: &str = "mock-nucleus-v1";

/// Medium prefixes the mock captioner likes to open with.
pub const CAPTION_PREFIXES: [&str; 4] = ["a photo of", "a picture of", "an image of", "a photograph of"];
/// Function words sprinkled into mock captions and synthetic alt-text.
pub const STOPWORDS: [&str; 8] = ["a", "the", "on", "with", "in", "and", "near", "of"];

const TOKEN_KEY: u64 = 0x746f_6b65_6e76_6563;
const CAPTION_KEY: u64 = 0x6361_7074_696f_6e73;
const CACHE_LIMIT: usize = 1 << 16;
const TAIL_VOCAB: u64 = 1000;
const PREFIX_PROB: f64 = 0.5;
const STOPWORD_PROB: f64 = 0.2;

/// Deterministic stand-in for a captioner and a sentence encoder.
///
/// Embeddings are bag-of-tokens: each lowercased whitespace token maps to a
/// fixed pseudo-random unit vector, and a text embeds to the l2-normalized
/// sum of its token vectors. Token overlap is therefore an independent oracle
/// for similarity. Empty text embeds to the zero vector.
///
/// Captions are drawn from the scene vocabulary encoded in the image
/// locator, `<scheme>:<tok>+<tok>+...`. The scene plays the nucleus: each
/// content token comes from a random focus subset of the scene with
/// probability `top_p` and from a generic tail otherwise.
#[derive(Debug, Default)]
pub struct MockBackend {
    cache: DashMap<String, Arc<[f32]>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn token_vector(&self, token: &str) -> Arc<[f32]> {
        if let Some(v) = self.cache.get(token) {
            return v.clone();
        }
        let v = token_vector(token);
        if self.cache.len() < CACHE_LIMIT {
            self.cache.insert(token.to_owned(), v.clone());
        }
        v
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut sum = [0.0f64; MOCK_DIM];
        let mut any = false;
        for token in text.split_whitespace() {
            let v = self.token_vector(&token.to_lowercase());
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += f64::from(*x);
            }
            any = true;
        }
        let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !any || norm == 0.0 {
            return vec![0.0; MOCK_DIM];
        }
        sum.iter().map(|x| (x / norm) as f32).collect()
    }
}

fn token_vector(token: &str) -> Arc<[f32]> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(TOKEN_KEY, token.as_bytes()));
    let raw: Vec<f64> = (0..MOCK_DIM).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.iter().map(|x| (x / norm) as f32).collect()
}

/// Scene tokens encoded in a mock image locator `scheme:t1+t2+...`. A
/// locator without a scheme has no scene.
pub fn scene_tokens(image_ref: &str) -> Vec<&str> {
    let Some((_, body)) = image_ref.rsplit_once(':') else {
        return Vec::new();
    };
    body.split(['+', ','])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect()
}

impl Backend for MockBackend {
    fn info(&self) -> Result<BackendInfo> {
        Ok(BackendInfo {
            dim: MOCK_DIM,
            encoder_id: MOCK_ENCODER_ID.into(),
            captioner_id: MOCK_CAPTIONER_ID.into(),
        })
    }

    fn generate_captions(&self, req: &CaptionRequest) -> Result<Vec<String>> {
        req.params.validate()?;
        let scene = scene_tokens(&req.image_ref);
        if scene.is_empty() {
            return Err(SieveError::NotFound(req.image_ref.clone()));
        }
        let p = req.params;
        let captions = (0..p.r)
            .map(|index| {
                let key = req.seed ^ mix64(CAPTION_KEY ^ u64::from(index));
                let mut rng = ChaCha8Rng::seed_from_u64(hash64(key, req.image_ref.as_bytes()));
                mock_caption(&mut rng, &scene, p.top_p, p.min_len as usize, p.max_len as usize)
            })
            .collect();
        Ok(captions)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

fn mock_caption(rng: &mut ChaCha8Rng, scene: &[&str], top_p: f64, min_len: usize, max_len: usize) -> String {
    let len = rng.random_range(min_len..=max_len);
    let focus_size = ((scene.len() as f64 * rng.random_range(0.4..=1.0)).ceil() as usize).clamp(1, scene.len());
    let mut focus: Vec<&str> = scene.to_vec();
    // Partial Fisher-Yates: the first focus_size entries become the focus.
    for i in 0..focus_size {
        let j = rng.random_range(i..focus.len());
        focus.swap(i, j);
    }
    focus.truncate(focus_size);

    let mut tokens: Vec<String> = Vec::with_capacity(len);
    if rng.random_bool(PREFIX_PROB) {
        let prefix = CAPTION_PREFIXES[rng.random_range(0..CAPTION_PREFIXES.len())];
        if prefix.split(' ').count() < len {
            tokens.extend(prefix.split(' ').map(str::to_owned));
        }
    }
    while tokens.len() < len {
        let token = if rng.random_bool(STOPWORD_PROB) {
            STOPWORDS[rng.random_range(0..STOPWORDS.len())].to_owned()
        } else if rng.random_bool(top_p) {
            focus[rng.random_range(0..focus.len())].to_owned()
        } else {
            format!("t{:03}", rng.random_range(0..TAIL_VOCAB))
        };
        tokens.push(token);
    }
    tokens.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::CaptionParams;
    use crate::scoring::cosine;

    fn req(image: &str, r: u32, seed: u64) -> CaptionRequest {
        CaptionRequest::new(
            image,
            CaptionParams {
                r,
                ..CaptionParams::default()
            },
            seed,
        )
    }

    #[test]
    fn info_is_fixed() {
        let info = MockBackend::new().info().unwrap();
        assert_eq!(info.dim, 64);
        assert_eq!(info.encoder_id, "mock-bow-v1");
    }

    #[test]
    fn captions_are_deterministic() {
        let b = MockBackend::new();
        let a = b.generate_captions(&req("img:cat", 2, 7)).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, MockBackend::new().generate_captions(&req("img:cat", 2, 7)).unwrap());
        assert_ne!(a, b.generate_captions(&req("img:cat", 2, 8)).unwrap());
    }

    #[test]
    fn caption_lengths_within_bounds() {
        let b = MockBackend::new();
        for seed in 0..50 {
            for c in b.generate_captions(&req("mock:red+cat+mat+sofa", 8, seed)).unwrap() {
                let n = c.split(' ').count();
                assert!((5..=20).contains(&n), "{c:?}");
            }
        }
    }

    #[test]
    fn zero_r_is_arity_error() {
        let err = MockBackend::new().generate_captions(&req("img:cat", 0, 1)).unwrap_err();
        assert!(matches!(err, SieveError::Arity(_)));
    }

    #[test]
    fn unresolvable_image() {
        let err = MockBackend::new().generate_captions(&req("img:", 1, 1)).unwrap_err();
        assert!(matches!(err, SieveError::NotFound(_)));
    }

    #[test]
    fn embedding_conventions() {
        let b = MockBackend::new();
        let e = b.embed_texts(&["a".into(), "a".into(), "".into()]).unwrap();
        assert_eq!(e[0], e[1]);
        assert_eq!(e[2], vec![0.0; 64]);
        // Identical token multisets, any order or case.
        assert_eq!(b.embed("Red cat red"), b.embed("red red CAT"));
        let norm: f32 = e[0].iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn overlap_orders_similarity() {
        let b = MockBackend::new();
        let base = b.embed("red cat");
        let near = cosine(&base, &b.embed("red cat dog")).unwrap();
        let far = cosine(&base, &b.embed("blue sky plane")).unwrap();
        // Two of three tokens shared: the expected cosine is 2/sqrt(6).
        assert!(near > far);
        assert!(near > 0.6, "{near}");
    }

    #[test]
    fn disjoint_vocabulary_is_near_orthogonal() {
        let b = MockBackend::new();
        let vocab = ["cat", "dog", "sky", "tree", "car", "boat", "snow", "beach", "city", "bird"];
        for (i, x) in vocab.iter().enumerate() {
            for y in &vocab[i + 1..] {
                let c = cosine(&b.embed(x), &b.embed(y)).unwrap();
                assert!(c.abs() < 0.5, "{x} {y} {c}");
            }
        }
    }

    #[test]
    fn scene_parsing() {
        assert_eq!(scene_tokens("img:cat"), ["cat"]);
        assert_eq!(scene_tokens("mock:red+cat,mat"), ["red", "cat", "mat"]);
        assert!(scene_tokens("img:").is_empty());
        assert!(scene_tokens("cat").is_empty());
    }
}
