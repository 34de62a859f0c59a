//! Reference implementations written independently of the library, plus
//! random fixture generators. Fixture corpora use single-space separated
//! words of letters only, so whitespace splitting is the word tokenizer.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use vocab_mixin::corpus::Corpus;
use vocab_mixin::wordpiece::Vocabulary;

pub const UNK: &str = "[UNK]";

/// Greedy longest-match-first, by trying every end position from the right.
pub fn greedy(vocab: &HashSet<String>, word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > 100 {
        return vec![UNK.to_string()];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut matched = None;
        for end in (start + 1..=chars.len()).rev() {
            let body: String = chars[start..end].iter().collect();
            let piece = if start == 0 { body } else { format!("##{body}") };
            if vocab.contains(&piece) {
                matched = Some((piece, end));
                break;
            }
        }
        match matched {
            Some((piece, end)) => {
                out.push(piece);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    out
}

pub fn piece_set(vocab: &Vocabulary) -> HashSet<String> {
    vocab.entries().iter().cloned().collect()
}

pub fn words(sentences: &[String]) -> Vec<&str> {
    sentences
        .iter()
        .flat_map(|s| s.split(' '))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Occurrences of each candidate-only piece inside candidate segmentations
/// of word tokens whose base segmentation contains UNK.
pub fn rescue_brute(base: &HashSet<String>, cand: &HashSet<String>, sentences: &[String]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for w in words(sentences) {
        if !greedy(base, w).iter().any(|p| p == UNK) {
            continue;
        }
        for p in greedy(cand, w) {
            if !base.contains(&p) {
                *counts.entry(p).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Top `n` by count, ties by piece, found by repeatedly scanning for the
/// best remaining entry.
pub fn top_n(counts: &BTreeMap<String, u64>, n: usize) -> Vec<(String, u64)> {
    let mut left: Vec<(String, u64)> = counts.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let mut out = Vec::new();
    while out.len() < n && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (ref p, c) = left[i];
            let (ref bp, bc) = left[best];
            if c > bc || (c == bc && p < bp) {
                best = i;
            }
        }
        out.push(left.remove(best));
    }
    out
}

/// Largest total count achievable by any `k`-subset, by enumeration.
pub fn best_subset_total(counts: &[u64], k: usize) -> u64 {
    let m = counts.len();
    assert!(m <= 20);
    let mut best = 0;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let total: u64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| counts[i]).sum();
        best = best.max(total);
    }
    best
}

pub fn unk_pct_recount(vocab: &HashSet<String>, sentences: &[String]) -> f64 {
    let ws = words(sentences);
    let unk = ws.iter().filter(|w| greedy(vocab, w).iter().any(|p| p == UNK)).count();
    100.0 * unk as f64 / ws.len() as f64
}

pub fn fertility_recount(vocab: &HashSet<String>, sentences: &[String]) -> f64 {
    let ws = words(sentences);
    let pieces: usize = ws.iter().map(|w| greedy(vocab, w).len()).sum();
    pieces as f64 / ws.len() as f64
}

/// Spearman's rho as the Pearson correlation of average ranks, with ranks
/// counted pairwise.
pub fn rank_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let ranks = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..rx.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

const LETTERS: &[&str] = &["a", "b", "c", "d", "e", "é", "ж"];

pub fn random_string(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect()
}

/// A random vocabulary over a small alphabet, initial and continuation
/// pieces mixed.
pub fn random_vocab(rng: &mut impl Rng, size: usize) -> Vocabulary {
    let mut pieces = BTreeSet::new();
    while pieces.len() < size {
        let body = random_string(rng, 1, 4);
        pieces.insert(if rng.random_bool(0.5) {
            format!("##{body}")
        } else {
            body
        });
    }
    Vocabulary::from_pieces(pieces).unwrap()
}

pub fn random_sentences(rng: &mut impl Rng, sentences: usize, max_words: usize, max_len: usize) -> Vec<String> {
    (0..sentences)
        .map(|_| {
            let n = rng.random_range(1..=max_words);
            (0..n)
                .map(|_| random_string(rng, 1, max_len))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn corpus(sentences: &[String]) -> Corpus {
    Corpus::from_sentences("fx", sentences.iter().cloned())
}

/// Extends `vocab` with random extra pieces.
pub fn superset(rng: &mut impl Rng, vocab: &Vocabulary, extra: usize) -> Vocabulary {
    let mut pieces: BTreeSet<String> = vocab.entries().iter().cloned().collect();
    let target = pieces.len() + extra;
    while pieces.len() < target {
        let body = random_string(rng, 1, 4);
        pieces.insert(if rng.random_bool(0.5) {
            format!("##{body}")
        } else {
            body
        });
    }
    Vocabulary::from_pieces(pieces).unwrap()
}
