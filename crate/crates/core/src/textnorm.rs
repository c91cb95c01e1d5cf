//! Medium-phrase masking.
//!
//! Phrases such as "photo of" describe the medium rather than the content of
//! an image. They are deleted from both alt-text and generated captions
//! before embedding. Matching is case-insensitive and anchored at word
//! boundaries; at each position the longest listed phrase wins, and deletion
//! repeats until no listed phrase remains (so masking is idempotent).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Result, SieveError};

const BASE_PHRASES: [&str; 7] = [
    "image of",
    "picture of",
    "photo of",
    "photograph of",
    "picture showing",
    "photo showing",
    "image showing",
];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Deduplicated, lowercase medium phrases, longest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseList {
    phrases: Vec<String>,
    trie: Trie,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Trie {
    children: HashMap<String, Trie>,
    terminal: bool,
}

impl PhraseList {
    pub fn new<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut words: Vec<Vec<String>> = Vec::new();
        for p in phrases {
            let p = p.as_ref();
            let w: Vec<String> = p.split_whitespace().map(str::to_lowercase).collect();
            if w.is_empty() {
                return Err(SieveError::config("phrases", "empty phrase"));
            }
            if let Some(bad) = w.iter().find(|t| !t.chars().all(is_word_char)) {
                return Err(SieveError::config(
                    "phrases",
                    format!("phrase {p:?} contains non-word token {bad:?}"),
                ));
            }
            words.push(w);
        }
        words.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        words.dedup();

        let mut trie = Trie::default();
        for w in &words {
            let mut node = &mut trie;
            for t in w {
                node = node.children.entry(t.clone()).or_default();
            }
            node.terminal = true;
        }
        Ok(PhraseList {
            phrases: words.iter().map(|w| w.join(" ")).collect(),
            trie,
        })
    }

    /// A list that matches nothing; masking with it only normalizes
    /// whitespace.
    pub fn empty() -> Self {
        PhraseList {
            phrases: Vec::new(),
            trie: Trie::default(),
        }
    }

    /// Reads one phrase per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SieveError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn contains(&self, phrase: &str) -> bool {
        let key = phrase
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        self.phrases.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    fn max_words(&self) -> usize {
        self.phrases
            .first()
            .map_or(0, |p| p.split(' ').count())
    }
}

impl Default for PhraseList {
    fn default() -> Self {
        default_phrase_list()
    }
}

/// The shipped list: the bare medium phrases plus their article-prefixed
/// forms, so "a photo of a cat" masks to "a cat".
pub fn default_phrase_list() -> PhraseList {
    let mut all: Vec<String> = BASE_PHRASES.iter().map(|p| p.to_string()).collect();
    for article in ARTICLES {
        for p in BASE_PHRASES {
            all.push(format!("{article} {p}"));
        }
    }
    PhraseList::new(all).expect("built-in phrases are valid")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

#[derive(Debug)]
struct Piece<'a> {
    text: &'a str,
    /// Lowercased form; `None` for punctuation runs.
    word: Option<String>,
    space_before: bool,
}

fn lex(text: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut space = false;
    let mut start: Option<(usize, bool)> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if c.is_whitespace() {
            space = true;
            continue;
        }
        let word = is_word_char(c);
        if start.is_none() {
            start = Some((i, word));
        }
        let end_here = match iter.peek() {
            None => true,
            Some(&(_, n)) => n.is_whitespace() || is_word_char(n) != word,
        };
        if end_here {
            let (s, w) = start.take().unwrap();
            let end = i + c.len_utf8();
            let slice = &text[s..end];
            pieces.push(Piece {
                text: slice,
                word: w.then(|| slice.to_lowercase()),
                space_before: space && !pieces.is_empty(),
            });
            space = false;
        }
    }
    pieces
}

/// Length in pieces of the longest listed phrase starting at `at`.
fn longest_match(trie: &Trie, pieces: &[Piece<'_>], at: usize) -> usize {
    let mut node = trie;
    let mut best = 0;
    for (offset, piece) in pieces[at..].iter().enumerate() {
        if offset > 0 && !piece.space_before {
            break;
        }
        let Some(word) = &piece.word else { break };
        match node.children.get(word) {
            Some(next) => node = next,
            None => break,
        }
        if node.terminal {
            best = offset + 1;
        }
    }
    best
}

/// Deletes every listed phrase and canonicalizes whitespace.
pub fn mask_medium_phrases(text: &str, phrases: &PhraseList) -> String {
    let mut pieces = lex(text);
    let window = phrases.max_words();
    let mut i = 0;
    while window > 0 && i < pieces.len() {
        let n = longest_match(&phrases.trie, &pieces, i);
        if n == 0 {
            i += 1;
            continue;
        }
        let lead_space = pieces[i].space_before;
        pieces.drain(i..i + n);
        if let Some(next) = pieces.get_mut(i) {
            next.space_before = lead_space && next.space_before && i > 0;
        }
        // Deletion can join a new match that starts up to window-1 pieces
        // back.
        i = i.saturating_sub(window - 1);
    }
    render(&pieces)
}

fn render(pieces: &[Piece<'_>]) -> String {
    let mut out = String::with_capacity(pieces.iter().map(|p| p.text.len() + 1).sum());
    for (i, p) in pieces.iter().enumerate() {
        if i > 0 && p.space_before {
            out.push(' ');
        }
        out.push_str(p.text);
    }
    out
}

/// Collapses whitespace runs to one ASCII space and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
