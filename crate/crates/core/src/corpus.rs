//! Unlabelled text: loading, normalization, downsampling and held-out
//! deduplication, plus the word-level splitter every coverage metric counts
//! over.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};

/// Where a corpus came from and what has been done to it since.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub transforms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// An ordered list of normalized, nonempty sentences in one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    sentences: Vec<String>,
    language_tag: String,
    provenance: Provenance,
}

/// NFC, trimmed, with every internal whitespace run collapsed to one space.
pub fn normalize_sentence(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Corpus {
    /// Builds a corpus from raw lines, normalizing each and dropping the ones
    /// that end up empty.
    pub fn from_sentences<I, S>(language_tag: impl Into<String>, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences = lines
            .into_iter()
            .map(|s| normalize_sentence(s.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        Corpus {
            sentences,
            language_tag: language_tag.into(),
            provenance: Provenance::default(),
        }
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn language_tag(&self) -> &str {
        &self.language_tag
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn with_language_tag(mut self, tag: impl Into<String>) -> Self {
        self.language_tag = tag.into();
        self
    }

    pub(crate) fn push_transform(&mut self, entry: String) {
        self.provenance.transforms.push(entry);
    }

    /// Returns a corpus with every sentence rewritten by `f` (and renormalized),
    /// recording `label` in the transform log.
    pub fn map_sentences(&self, label: &str, mut f: impl FnMut(&str) -> String) -> Corpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| normalize_sentence(&f(s)))
            .filter(|s| !s.is_empty())
            .collect();
        let mut provenance = self.provenance.clone();
        provenance.transforms.push(label.to_string());
        Corpus {
            sentences,
            language_tag: self.language_tag.clone(),
            provenance,
        }
    }

    /// One sentence per line, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    /// Digest of the serialized text; provenance does not contribute.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn write_provenance(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.provenance)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Reads a one-sentence-per-line UTF-8 file.
pub fn load_corpus(path: &Path, language_tag: &str) -> Result<Corpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        offset: e.valid_up_to(),
    })?;
    let mut corpus = Corpus::from_sentences(language_tag, text.lines());
    corpus.provenance.source = Some(path.display().to_string());
    corpus.push_transform(format!("load sentences={}", corpus.len()));
    Ok(corpus)
}

/// Keeps `round(fraction * N)` sentences chosen uniformly without
/// replacement, in their original order.
pub fn downsample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param(format!(
            "downsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = corpus.len();
    let keep = ((fraction * n as f64).round() as usize).min(n);
    let mut out = corpus.clone();
    if keep < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, keep).into_vec();
        picked.sort_unstable();
        out.sentences = picked.into_iter().map(|i| corpus.sentences[i].clone()).collect();
    }
    out.push_transform(format!("downsample fraction={fraction} seed={seed} kept={keep}/{n}"));
    Ok(out)
}

/// Drops every sentence that also occurs in any held-out corpus.
pub fn dedup_against(corpus: &Corpus, held_out: &[&Corpus]) -> Corpus {
    // Both sides are already normalized, so byte equality is the match.
    let banned: HashSet<&str> = held_out
        .iter()
        .flat_map(|c| c.sentences.iter().map(String::as_str))
        .collect();
    let before = corpus.len();
    let mut out = corpus.clone();
    out.sentences.retain(|s| !banned.contains(s.as_str()));
    let removed = before - out.len();
    out.push_transform(format!("dedup held_out={} removed={removed}", held_out.len()));
    out
}

/// Word-level tokens of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
}

pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Splits on whitespace and isolates every punctuation code point.
pub fn basic_tokenize(sentence: &str) -> TokenizedSentence {
    let mut tokens = Vec::new();
    for chunk in sentence.split_whitespace() {
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if is_punctuation(c) {
                if start < i {
                    tokens.push(chunk[start..i].to_string());
                }
                let end = i + c.len_utf8();
                tokens.push(chunk[i..end].to_string());
                start = end;
            }
        }
        if start < chunk.len() {
            tokens.push(chunk[start..].to_string());
        }
    }
    TokenizedSentence { tokens }
}
