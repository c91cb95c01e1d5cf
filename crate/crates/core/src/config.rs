//! Pipeline configuration: flat `key = value` lines, `#` comments.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Command-line overrides go through [`PipelineConfig::set`] as well, so
//! they get the same parsing and range checks as the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bytesize::ByteSize;

use crate::backends::CaptionParams;
use crate::corpus_io::TieBreak;
use crate::error::{Result, SieveError};
use crate::pruning::{DEFAULT_COVERAGE_KEEP, DEFAULT_K, MIN_MEMORY_BUDGET};
use crate::scoring::FusionWeights;
use crate::textnorm::PhraseList;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Mock,
    File,
    Service,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::File => "file",
            BackendKind::Service => "service",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "file" => Ok(BackendKind::File),
            "service" => Ok(BackendKind::Service),
            _ => Err(format!("expected mock, file or service, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub k: f64,
    pub r: u32,
    pub top_p: f64,
    pub min_len: u32,
    pub max_len: u32,
    /// `None` selects the built-in phrase list.
    pub phrases_path: Option<PathBuf>,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    /// JSONL of `{"image_ref", "captions"}` for the file backend.
    pub captions_file: Option<PathBuf>,
    /// Text-keyed embedding shard for the file backend.
    pub embeddings_file: Option<PathBuf>,
    pub memory_budget: u64,
    pub global_seed: u64,
    pub tie_break: TieBreak,
    /// Texts per embedding request.
    pub batch_size: usize,
    pub coverage_keep: f64,
}

pub const DEFAULT_MEMORY_BUDGET: u64 = 512 * 1024 * 1024;
pub const DEFAULT_BATCH_SIZE: usize = 256;

pub const KEYS: [&str; 16] = [
    "alpha",
    "k",
    "r",
    "top_p",
    "min_len",
    "max_len",
    "phrases_path",
    "backend",
    "backend_url",
    "captions_file",
    "embeddings_file",
    "memory_budget",
    "global_seed",
    "tie_break",
    "batch_size",
    "coverage_keep",
];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: FusionWeights::DEFAULT_ALPHA,
            k: DEFAULT_K,
            r: CaptionParams::DEFAULT_R,
            top_p: CaptionParams::DEFAULT_TOP_P,
            min_len: CaptionParams::DEFAULT_MIN_LEN,
            max_len: CaptionParams::DEFAULT_MAX_LEN,
            phrases_path: None,
            backend: BackendKind::Mock,
            backend_url: None,
            captions_file: None,
            embeddings_file: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            global_seed: 0,
            tie_break: TieBreak::UidAscending,
            batch_size: DEFAULT_BATCH_SIZE,
            coverage_keep: DEFAULT_COVERAGE_KEEP,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| SieveError::config(key, format!("cannot parse {value:?}: {e}")))
}

fn in_range(key: &str, v: f64, lo_open: bool, lo: f64, hi: f64) -> Result<f64> {
    let ok = if lo_open { v > lo && v <= hi } else { v >= lo && v <= hi };
    if ok {
        Ok(v)
    } else {
        let open = if lo_open { "(" } else { "[" };
        Err(SieveError::config(key, format!("{v} outside {open}{lo},{hi}]")))
    }
}

fn positive<T: PartialOrd + Default + std::fmt::Display>(key: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(SieveError::config(key, format!("must be positive, got {v}")))
    }
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_owned())
}

impl PipelineConfig {
    /// Parses and validates config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(SieveError::config(
                    line,
                    format!("line {}: expected key = value", i + 1),
                ));
            };
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(SieveError::config(key, format!("line {}: set twice", i + 1)));
            }
            config.set(key, value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SieveError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value, checking the key's own range.
    /// Cross-key constraints are checked by [`validate`](Self::validate).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = in_range(key, parse_num(key, value)?, false, 0.0, 1.0)?,
            "k" => self.k = in_range(key, parse_num(key, value)?, true, 0.0, 1.0)?,
            "r" => self.r = positive(key, parse_num(key, value)?)?,
            "top_p" => self.top_p = in_range(key, parse_num(key, value)?, true, 0.0, 1.0)?,
            "min_len" => self.min_len = positive(key, parse_num(key, value)?)?,
            "max_len" => self.max_len = positive(key, parse_num(key, value)?)?,
            "phrases_path" => self.phrases_path = optional(value).map(PathBuf::from),
            "backend" => self.backend = value.parse().map_err(|e: String| SieveError::config(key, e))?,
            "backend_url" => self.backend_url = optional(value),
            "captions_file" => self.captions_file = optional(value).map(PathBuf::from),
            "embeddings_file" => self.embeddings_file = optional(value).map(PathBuf::from),
            "memory_budget" => {
                let bytes = value
                    .parse::<ByteSize>()
                    .map_err(|e| SieveError::config(key, format!("cannot parse {value:?}: {e}")))?
                    .as_u64();
                if bytes < MIN_MEMORY_BUDGET {
                    return Err(SieveError::config(
                        key,
                        format!("{bytes} bytes is below the {MIN_MEMORY_BUDGET}-byte minimum"),
                    ));
                }
                self.memory_budget = bytes;
            }
            "global_seed" => self.global_seed = parse_num(key, value)?,
            "tie_break" => {
                self.tie_break = match value {
                    "uid_ascending" => TieBreak::UidAscending,
                    _ => return Err(SieveError::config(key, format!("expected uid_ascending, got {value:?}"))),
                }
            }
            "batch_size" => self.batch_size = positive(key, parse_num(key, value)?)?,
            "coverage_keep" => self.coverage_keep = in_range(key, parse_num(key, value)?, true, 0.0, 1.0)?,
            _ => return Err(SieveError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len < self.min_len {
            return Err(SieveError::config(
                "max_len",
                format!("{} is below min_len {}", self.max_len, self.min_len),
            ));
        }
        if self.backend == BackendKind::File && self.captions_file.is_none() && self.embeddings_file.is_none() {
            return Err(SieveError::config(
                "backend",
                "the file backend needs captions_file or embeddings_file",
            ));
        }
        Ok(())
    }

    /// Current value of a key in the same text form `set` accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "k" => self.k.to_string(),
            "r" => self.r.to_string(),
            "top_p" => self.top_p.to_string(),
            "min_len" => self.min_len.to_string(),
            "max_len" => self.max_len.to_string(),
            "phrases_path" => path(&self.phrases_path),
            "backend" => self.backend.name().to_owned(),
            "backend_url" => self.backend_url.clone().unwrap_or_default(),
            "captions_file" => path(&self.captions_file),
            "embeddings_file" => path(&self.embeddings_file),
            "memory_budget" => self.memory_budget.to_string(),
            "global_seed" => self.global_seed.to_string(),
            "tie_break" => self.tie_break.name().to_owned(),
            "batch_size" => self.batch_size.to_string(),
            "coverage_keep" => self.coverage_keep.to_string(),
            _ => return None,
        })
    }

    /// All keys with their values, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|k| (*k, self.get(k).expect("listed key"))).collect()
    }

    /// Renders the config in the file format; parsing it gives back `self`.
    pub fn render(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn caption_params(&self) -> CaptionParams {
        CaptionParams {
            r: self.r,
            top_p: self.top_p,
            min_len: self.min_len,
            max_len: self.max_len,
        }
    }

    pub fn fusion_weights(&self) -> FusionWeights {
        FusionWeights::new(self.alpha).expect("alpha checked on set")
    }

    pub fn phrase_list(&self) -> Result<PhraseList> {
        match &self.phrases_path {
            Some(p) => PhraseList::from_file(p),
            None => Ok(PhraseList::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: SieveError) -> String {
        match e {
            SieveError::Config { key, .. } => key,
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_defaults() {
        let c = PipelineConfig::parse("# nothing here\n\n").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!((c.alpha, c.k, c.r), (0.5, 0.2, 8));
        assert_eq!((c.top_p, c.min_len, c.max_len), (0.9, 5, 20));
        assert_eq!(c.coverage_keep, 0.8);
        assert_eq!(c.batch_size, 256);
    }

    #[test]
    fn parses_values_and_comments() {
        let c = PipelineConfig::parse("alpha = 0.25  # fusion\nk=0.1\nmemory_budget = 64MiB\nglobal_seed=7\n").unwrap();
        assert_eq!(c.alpha, 0.25);
        assert_eq!(c.k, 0.1);
        assert_eq!(c.memory_budget, 64 * 1024 * 1024);
        assert_eq!(c.global_seed, 7);
    }

    #[test]
    fn range_errors_name_the_key() {
        assert_eq!(key_of(PipelineConfig::parse("alpha=1.5").unwrap_err()), "alpha");
        assert_eq!(key_of(PipelineConfig::parse("k=0").unwrap_err()), "k");
        assert_eq!(key_of(PipelineConfig::parse("r=0").unwrap_err()), "r");
        assert_eq!(key_of(PipelineConfig::parse("top_p=abc").unwrap_err()), "top_p");
        assert_eq!(key_of(PipelineConfig::parse("memory_budget=1KiB").unwrap_err()), "memory_budget");
        assert_eq!(key_of(PipelineConfig::parse("min_len=8\nmax_len=6").unwrap_err()), "max_len");
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(matches!(
            PipelineConfig::parse("aplha=0.5"),
            Err(SieveError::UnknownKey(k)) if k == "aplha"
        ));
        assert_eq!(key_of(PipelineConfig::parse("k=0.1\nk=0.2").unwrap_err()), "k");
        assert!(PipelineConfig::parse("just words").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = PipelineConfig::default();
        c.set("alpha", "0.3").unwrap();
        c.set("phrases_path", "/tmp/p.txt").unwrap();
        c.set("backend", "service").unwrap();
        c.set("backend_url", "http://localhost:8000").unwrap();
        assert_eq!(PipelineConfig::parse(&c.render()).unwrap(), c);
        assert_eq!(PipelineConfig::parse(&PipelineConfig::default().render()).unwrap(), PipelineConfig::default());
    }

    #[test]
    fn file_backend_needs_inputs() {
        assert_eq!(key_of(PipelineConfig::parse("backend=file").unwrap_err()), "backend");
        assert!(PipelineConfig::parse("backend=file\ncaptions_file=c.jsonl").is_ok());
    }
}
