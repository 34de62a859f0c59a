//! Tokenizer coverage metrics: UNK token percentage, fertility, vocabulary
//! deltas, grouped averages and rank correlation between coverage change and
//! task change.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{basic_tokenize, Corpus};
use crate::error::{Error, Result};
use crate::wordpiece::Vocabulary;

/// Additive tallies behind every coverage figure. Shards merge by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub tokens: u64,
    pub unk_tokens: u64,
    pub pieces: u64,
}

impl Add for CoverageCounts {
    type Output = CoverageCounts;

    fn add(self, o: CoverageCounts) -> CoverageCounts {
        CoverageCounts {
            tokens: self.tokens + o.tokens,
            unk_tokens: self.unk_tokens + o.unk_tokens,
            pieces: self.pieces + o.pieces,
        }
    }
}

impl CoverageCounts {
    pub fn of_sentence(vocab: &Vocabulary, sentence: &str) -> Self {
        let mut counts = CoverageCounts::default();
        let mut ids = Vec::new();
        for word in basic_tokenize(sentence).tokens {
            ids.clear();
            // A token counts once however many UNK pieces it yields.
            if vocab.encode_word_into(&word, &mut ids) {
                counts.unk_tokens += 1;
            }
            counts.tokens += 1;
            counts.pieces += ids.len() as u64;
        }
        counts
    }

    pub fn of_corpus(vocab: &Vocabulary, corpus: &Corpus) -> Self {
        corpus
            .sentences()
            .par_iter()
            .map(|s| Self::of_sentence(vocab, s))
            .reduce(CoverageCounts::default, Add::add)
    }

    pub fn unk_token_pct(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            100.0 * self.unk_tokens as f64 / self.tokens as f64
        }
    }
}

/// Percentage of word tokens whose segmentation contains UNK; 0 for an empty
/// corpus.
pub fn unk_token_percentage(vocab: &Vocabulary, corpus: &Corpus) -> f64 {
    CoverageCounts::of_corpus(vocab, corpus).unk_token_pct()
}

/// Mean wordpieces per word token. An UNK-mapped word contributes one piece.
pub fn fertility(vocab: &Vocabulary, corpus: &Corpus) -> Result<f64> {
    let counts = CoverageCounts::of_corpus(vocab, corpus);
    if counts.tokens == 0 {
        return Err(Error::param("fertility is undefined on an empty corpus"));
    }
    Ok(counts.pieces as f64 / counts.tokens as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub language: String,
    pub unk_token_pct: f64,
    /// Zero when the corpus has no tokens.
    pub fertility: f64,
    pub token_count: u64,
    pub unk_token_count: u64,
    pub piece_count: u64,
    pub vocab_size: usize,
    pub vocab_digest: String,
    pub corpus_digest: String,
}

pub fn coverage_report(vocab: &Vocabulary, corpus: &Corpus) -> CoverageReport {
    let counts = CoverageCounts::of_corpus(vocab, corpus);
    CoverageReport {
        language: corpus.language_tag().to_string(),
        unk_token_pct: counts.unk_token_pct(),
        fertility: if counts.tokens == 0 {
            0.0
        } else {
            counts.pieces as f64 / counts.tokens as f64
        },
        token_count: counts.tokens,
        unk_token_count: counts.unk_tokens,
        piece_count: counts.pieces,
        vocab_size: vocab.len(),
        vocab_digest: vocab.digest(),
        corpus_digest: corpus.digest(),
    }
}

impl CoverageReport {
    pub fn to_text(&self) -> String {
        let rows = [
            ("language", self.language.clone()),
            ("unk_token_pct", format!("{:.4}", self.unk_token_pct)),
            ("fertility", format!("{:.4}", self.fertility)),
            ("tokens", self.token_count.to_string()),
            ("unk_tokens", self.unk_token_count.to_string()),
            ("pieces", self.piece_count.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("vocab_digest", self.vocab_digest.clone()),
            ("corpus_digest", self.corpus_digest.clone()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<14} {v}");
        }
        out
    }
}

/// Per-language change in coverage and task scores between two setups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaRecord {
    pub language: String,
    /// UNK token percentage under the "before" vocabulary, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unk_before: Option<f64>,
    /// Percentage points, after minus before.
    pub unk_delta: f64,
    #[serde(default)]
    pub task_deltas: BTreeMap<String, f64>,
}

pub fn coverage_delta(before: &Vocabulary, after: &Vocabulary, corpus: &Corpus) -> DeltaRecord {
    let b = unk_token_percentage(before, corpus);
    let a = unk_token_percentage(after, corpus);
    DeltaRecord {
        language: corpus.language_tag().to_string(),
        unk_before: Some(b),
        unk_delta: a - b,
        task_deltas: BTreeMap::new(),
    }
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share rank mean((i+1)..=j).
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

/// Spearman's rho with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::param(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::param("spearman needs at least two pairs"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("spearman inputs must be finite"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unk_before: Option<f64>,
    pub unk_delta: f64,
    pub task_deltas: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub rows: Vec<GroupRow>,
    pub overall: GroupRow,
}

fn mean_row(group: &str, records: &[&DeltaRecord]) -> GroupRow {
    let size = records.len();
    let unk_delta = records.iter().map(|r| r.unk_delta).sum::<f64>() / size as f64;
    let befores: Vec<f64> = records.iter().filter_map(|r| r.unk_before).collect();
    let unk_before = (!befores.is_empty()).then(|| befores.iter().sum::<f64>() / befores.len() as f64);
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        for (task, d) in &r.task_deltas {
            let e = sums.entry(task.clone()).or_insert((0.0, 0));
            e.0 += d;
            e.1 += 1;
        }
    }
    GroupRow {
        group: group.to_string(),
        size,
        unk_before,
        unk_delta,
        task_deltas: sums.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect(),
    }
}

/// Arithmetic means per group (groups sorted by label) plus an overall row.
/// Task means average over the records that report that task.
pub fn group_summary(records: &[DeltaRecord], grouping: &BTreeMap<String, String>) -> Result<GroupSummary> {
    if records.is_empty() {
        return Err(Error::param("group summary needs at least one record"));
    }
    let mut groups: BTreeMap<&str, Vec<&DeltaRecord>> = BTreeMap::new();
    for r in records {
        let g = grouping
            .get(&r.language)
            .ok_or_else(|| Error::invalid(format!("language {:?} has no group", r.language)))?;
        groups.entry(g.as_str()).or_default().push(r);
    }
    let rows = groups.iter().map(|(g, rs)| mean_row(g, rs)).collect();
    let all: Vec<&DeltaRecord> = records.iter().collect();
    Ok(GroupSummary {
        rows,
        overall: mean_row("All", &all),
    })
}

impl GroupSummary {
    /// Aligned-column rendering, one row per group then the overall row.
    pub fn to_text(&self) -> String {
        let tasks: Vec<&String> = self.overall.task_deltas.keys().collect();
        let mut header = format!("{:<12} {:>4} {:>10} {:>10}", "group", "n", "unk%", "unk_delta");
        for t in &tasks {
            let _ = write!(header, " {:>10}", format!("{t}_delta"));
        }
        let mut out = header;
        out.push('\n');
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let before = row.unk_before.map_or("-".to_string(), |b| format!("{b:.2}"));
            let _ = write!(
                out,
                "{:<12} {:>4} {:>10} {:>+10.2}",
                row.group, row.size, before, row.unk_delta
            );
            for t in &tasks {
                let cell = row.task_deltas.get(*t).map_or("-".to_string(), |d| format!("{d:+.2}"));
                let _ = write!(out, " {cell:>10}");
            }
            out.push('\n');
        }
        out
    }
}

pub const FIG1_HEADER: &str = "language,unk_delta,task,task_delta,type,script";

/// One scatter point: a language's coverage change against one task's change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub language: String,
    pub unk_delta: f64,
    pub task: String,
    pub task_delta: f64,
    #[serde(rename = "type")]
    pub language_type: String,
    pub script: String,
}

pub fn scatter_rows(
    records: &[DeltaRecord],
    types: &BTreeMap<String, String>,
    scripts: &BTreeMap<String, String>,
) -> Result<Vec<ScatterRow>> {
    let mut rows = Vec::new();
    for r in records {
        let lookup = |m: &BTreeMap<String, String>, what: &str| {
            m.get(&r.language)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("language {:?} has no {what}", r.language)))
        };
        let language_type = lookup(types, "type")?;
        let script = lookup(scripts, "script")?;
        for (task, d) in &r.task_deltas {
            rows.push(ScatterRow {
                language: r.language.clone(),
                unk_delta: r.unk_delta,
                task: task.clone(),
                task_delta: *d,
                language_type: language_type.clone(),
                script: script.clone(),
            });
        }
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from(FIG1_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.language),
            r.unk_delta,
            csv_field(&r.task),
            r.task_delta,
            csv_field(&r.language_type),
            csv_field(&r.script)
        );
    }
    out
}
