//! Wordpiece vocabularies: training by frequency-ranked pair merging, greedy
//! longest-match-first segmentation, and the one-piece-per-line file format.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::corpus::{basic_tokenize, Corpus};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const DEFAULT_UNK: &str = "[UNK]";
pub const CONTINUATION_PREFIX: &str = "##";

/// Words longer than this many characters map straight to UNK.
pub const MAX_WORD_CHARS: usize = 100;

/// Ordered, duplicate-free set of wordpieces; an entry's id is its position.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    unk_id: u32,
    prefix: String,
    max_entry_bytes: usize,
    metadata: BTreeMap<String, String>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.unk_id == other.unk_id && self.prefix == other.prefix
    }
}

impl Vocabulary {
    /// Validates and indexes `entries`. `unk` must be one of them.
    pub fn new(entries: Vec<String>, unk: &str, prefix: &str) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::invalid("continuation prefix must be nonempty"));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut max_entry_bytes = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::invalid(format!("entry {i} is empty")));
            }
            if e == prefix {
                return Err(Error::invalid(format!(
                    "entry {i} consists only of the continuation prefix"
                )));
            }
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate entry {e:?} at id {i}")));
            }
            max_entry_bytes = max_entry_bytes.max(e.len());
        }
        let unk_id = *index
            .get(unk)
            .ok_or_else(|| Error::invalid(format!("unknown piece {unk:?} is not in the vocabulary")))?;
        Ok(Vocabulary {
            entries,
            index,
            unk_id,
            prefix: prefix.to_string(),
            max_entry_bytes,
            metadata: BTreeMap::new(),
        })
    }

    /// Convenience constructor with the default UNK and `##` prefix; the UNK
    /// entry is prepended when absent.
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entries: Vec<String> = pieces.into_iter().map(Into::into).collect();
        if !entries.iter().any(|e| e == DEFAULT_UNK) {
            entries.insert(0, DEFAULT_UNK.to_string());
        }
        Vocabulary::new(entries, DEFAULT_UNK, CONTINUATION_PREFIX)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn id_of(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn unk(&self) -> &str {
        &self.entries[self.unk_id as usize]
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.prefix
    }

    /// Free-form notes about how the vocabulary was produced. Not part of the
    /// file format.
    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    /// Appends pieces after the existing entries, leaving every existing id
    /// untouched. Pieces already present (or repeated) are skipped and returned.
    pub fn extended<I, S>(&self, pieces: I) -> Result<(Vocabulary, Vec<String>)>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries = self.entries.clone();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut skipped = Vec::new();
        for p in pieces {
            let p = p.as_ref();
            if self.contains(p) || !seen.insert(p.to_string()) {
                skipped.push(p.to_string());
            } else {
                entries.push(p.to_string());
            }
        }
        let mut out = Vocabulary::new(entries, self.unk(), &self.prefix)?;
        out.metadata = self.metadata.clone();
        Ok((out, skipped))
    }

    /// The file body: one entry per line, each LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.entries.iter().map(|e| e.len() + 1).sum());
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parses the one-piece-per-line format. A final LF is optional.
    pub fn parse(text: &str, unk: &str, prefix: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let entries = if body.is_empty() && text.len() <= 1 {
            Vec::new()
        } else {
            body.split('\n').map(str::to_string).collect()
        };
        Vocabulary::new(entries, unk, prefix)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, DEFAULT_UNK, CONTINUATION_PREFIX)
    }

    pub fn load_with(path: &Path, unk: &str, prefix: &str) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            offset: e.valid_up_to(),
        })?;
        let mut v = Self::parse(text, unk, prefix)?;
        v.set_metadata("source", path.display().to_string());
        Ok(v)
    }

    /// Greedy longest-match-first segmentation into ids. Returns `true` when the
    /// word fell back to UNK.
    pub fn encode_word_into(&self, word: &str, out: &mut Vec<u32>) -> bool {
        if word.chars().count() > MAX_WORD_CHARS {
            out.push(self.unk_id);
            return true;
        }
        let mark = out.len();
        let mut start = 0;
        let mut key = String::with_capacity(word.len() + self.prefix.len());
        while start < word.len() {
            let rest = &word[start..];
            let mut limit = rest.len().min(self.max_entry_bytes);
            let mut found = None;
            while limit > 0 {
                if rest.is_char_boundary(limit) {
                    key.clear();
                    if start > 0 {
                        key.push_str(&self.prefix);
                    }
                    key.push_str(&rest[..limit]);
                    if let Some(&id) = self.index.get(key.as_str()) {
                        found = Some((id, limit));
                        break;
                    }
                }
                limit -= 1;
            }
            match found {
                Some((id, len)) => {
                    out.push(id);
                    start += len;
                }
                None => {
                    out.truncate(mark);
                    out.push(self.unk_id);
                    return true;
                }
            }
        }
        out[mark..].contains(&self.unk_id)
    }
}

/// The pieces one word splits into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub pieces: Vec<String>,
    pub contains_unk: bool,
}

impl Segmentation {
    /// Strips continuation prefixes and concatenates the pieces.
    pub fn joined(&self, prefix: &str) -> String {
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, p)| if i > 0 { p.strip_prefix(prefix).unwrap_or(p) } else { p })
            .collect()
    }
}

pub fn tokenize_word(vocab: &Vocabulary, word: &str) -> Result<Segmentation> {
    if word.is_empty() {
        return Err(Error::param("cannot segment an empty word"));
    }
    let mut ids = Vec::new();
    vocab.encode_word_into(word, &mut ids);
    let contains_unk = ids.contains(&vocab.unk_id());
    let pieces = ids.into_iter().map(|id| vocab.entries[id as usize].clone()).collect();
    Ok(Segmentation { pieces, contains_unk })
}

/// Per-sentence, per-word segmentations of a corpus.
pub fn tokenize_corpus(vocab: &Vocabulary, corpus: &Corpus) -> Vec<Vec<Segmentation>> {
    corpus
        .sentences()
        .iter()
        .map(|s| {
            basic_tokenize(s)
                .tokens
                .iter()
                .map(|w| tokenize_word(vocab, w).expect("basic_tokenize never yields empty words"))
                .collect()
        })
        .collect()
}

/// Word-token frequencies over a corpus.
pub fn word_counts(corpus: &Corpus) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for s in corpus.sentences() {
        for w in basic_tokenize(s).tokens {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

struct MergeState {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    // Symbols that may take part in merges (present in the vocabulary).
    usable: Vec<bool>,
    words: Vec<(Vec<u32>, u64)>,
    pair_counts: HashMap<(u32, u32), u64>,
    pair_words: HashMap<(u32, u32), BTreeSet<usize>>,
}

impl MergeState {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.symbol_ids.insert(s.to_string(), id);
        self.usable.push(false);
        id
    }

    fn pairs_of(&self, syms: &[u32]) -> Vec<(u32, u32)> {
        syms.windows(2)
            .filter(|w| self.usable[w[0] as usize] && self.usable[w[1] as usize])
            .map(|w| (w[0], w[1]))
            .collect()
    }

    fn count_word(&mut self, idx: usize, sign_add: bool) {
        let (syms, freq) = {
            let (s, f) = &self.words[idx];
            (s.clone(), *f)
        };
        for pair in self.pairs_of(&syms) {
            if sign_add {
                *self.pair_counts.entry(pair).or_insert(0) += freq;
                self.pair_words.entry(pair).or_default().insert(idx);
            } else if let Some(c) = self.pair_counts.get_mut(&pair) {
                *c -= freq;
                if *c == 0 {
                    self.pair_counts.remove(&pair);
                }
            }
        }
    }

    fn best_pair(&self, min_frequency: u64) -> Option<(u32, u32)> {
        let mut best: Option<((u32, u32), u64)> = None;
        for (&pair, &count) in &self.pair_counts {
            if count < min_frequency {
                continue;
            }
            best = match best {
                None => Some((pair, count)),
                Some((bp, bc)) => {
                    let better = count > bc
                        || (count == bc
                            && (
                                self.symbols[pair.0 as usize].as_str(),
                                self.symbols[pair.1 as usize].as_str(),
                            ) < (
                                self.symbols[bp.0 as usize].as_str(),
                                self.symbols[bp.1 as usize].as_str(),
                            ));
                    if better {
                        Some((pair, count))
                    } else {
                        Some((bp, bc))
                    }
                }
            };
        }
        best.map(|(p, _)| p)
    }

    fn apply_merge(&mut self, pair: (u32, u32), merged: u32) {
        let affected: Vec<usize> = self
            .pair_words
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        for idx in affected {
            let syms = &self.words[idx].0;
            if !syms.windows(2).any(|w| (w[0], w[1]) == pair) {
                continue;
            }
            self.count_word(idx, false);
            let old = std::mem::take(&mut self.words[idx].0);
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    new.push(merged);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            self.words[idx].0 = new;
            self.count_word(idx, true);
        }
        self.pair_counts.remove(&pair);
    }
}

/// Trains a vocabulary of at most `target_size` entries: UNK, then every
/// character seen at least `min_frequency` times in both its word-initial and
/// continuation forms, then merged pairs in order of descending corpus count
/// (ties broken by the lexicographic order of the pair).
pub fn train_vocabulary(corpus: &Corpus, target_size: usize, min_frequency: u64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::param("cannot train a vocabulary on an empty corpus"));
    }
    if target_size < 2 {
        return Err(Error::param(format!(
            "target_size {target_size} cannot hold the UNK entry plus one character"
        )));
    }
    if min_frequency == 0 {
        return Err(Error::param("min_frequency must be positive"));
    }
    let prefix = CONTINUATION_PREFIX;
    let counts = word_counts(corpus);

    let mut char_counts: BTreeMap<char, u64> = BTreeMap::new();
    for (w, &f) in &counts {
        if w.chars().count() > MAX_WORD_CHARS {
            continue;
        }
        for c in w.chars() {
            *char_counts.entry(c).or_insert(0) += f;
        }
    }
    let mut alphabet: Vec<(char, u64)> = char_counts.into_iter().filter(|&(_, n)| n >= min_frequency).collect();
    // When the alphabet does not fit, keep the most frequent characters.
    let room = target_size - 1;
    if alphabet.len() * 2 > room {
        alphabet.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    }
    let mut initial = Vec::new();
    let mut continuation = Vec::new();
    let mut used = 0;
    for &(c, _) in &alphabet {
        if used + 2 <= room {
            initial.push(c.to_string());
            continuation.push(format!("{prefix}{c}"));
            used += 2;
        } else if used < room {
            initial.push(c.to_string());
            used += 1;
        }
    }
    initial.sort();
    continuation.sort();

    let mut entries = vec![DEFAULT_UNK.to_string()];
    entries.extend(initial);
    entries.extend(continuation);

    let mut state = MergeState {
        symbols: Vec::new(),
        symbol_ids: HashMap::new(),
        usable: Vec::new(),
        words: Vec::new(),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
    };
    let mut in_vocab: BTreeSet<String> = entries.iter().cloned().collect();
    for e in &entries[1..] {
        let id = state.intern(e);
        state.usable[id as usize] = true;
    }
    for (w, &f) in &counts {
        if w.chars().count() > MAX_WORD_CHARS {
            continue;
        }
        let syms: Vec<u32> = w
            .chars()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    state.intern(&c.to_string())
                } else {
                    state.intern(&format!("{prefix}{c}"))
                }
            })
            .collect();
        state.words.push((syms, f));
    }
    for idx in 0..state.words.len() {
        state.count_word(idx, true);
    }

    let mut merges = 0usize;
    while entries.len() < target_size {
        let Some(pair) = state.best_pair(min_frequency) else {
            break;
        };
        let left = state.symbols[pair.0 as usize].clone();
        let right = state.symbols[pair.1 as usize].clone();
        let merged_text = format!("{left}{}", right.strip_prefix(prefix).unwrap_or(&right));
        if merged_text == prefix {
            // Would produce a prefix-only piece; retire the pair instead.
            state.pair_counts.remove(&pair);
            continue;
        }
        let merged = state.intern(&merged_text);
        state.usable[merged as usize] = true;
        state.apply_merge(pair, merged);
        merges += 1;
        if in_vocab.insert(merged_text.clone()) {
            entries.push(merged_text);
        }
    }

    let mut vocab = Vocabulary::new(entries, DEFAULT_UNK, prefix)?;
    vocab.set_metadata("algorithm", "frequency-pair-merge");
    vocab.set_metadata("target_size", target_size.to_string());
    vocab.set_metadata("min_frequency", min_frequency.to_string());
    vocab.set_metadata("merges", merges.to_string());
    vocab.set_metadata("corpus_digest", corpus.digest());
    Ok(vocab)
}
