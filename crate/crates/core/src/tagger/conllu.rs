//! Reader and writer for ten-column token annotation files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::translit::TransliterationScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TagColumn {
    Upos,
    Xpos,
}

impl FromStr for TagColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UPOS" => Ok(TagColumn::Upos),
            "XPOS" => Ok(TagColumn::Xpos),
            _ => Err(Error::param(format!(
                "unknown tag column {s:?} (expected UPOS or XPOS)"
            ))),
        }
    }
}

impl fmt::Display for TagColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagColumn::Upos => "UPOS",
            TagColumn::Xpos => "XPOS",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagDataset {
    pub sentences: Vec<TaggedSentence>,
    /// Sorted, unique.
    pub tagset: Vec<String>,
    pub source: String,
    /// The column actually read.
    pub column: TagColumn,
    /// Set when XPOS was requested but UPOS had to be used.
    pub fell_back_to_upos: bool,
}

impl TagDataset {
    /// Builds a dataset from in-memory sentences. The tagset is derived.
    pub fn from_sentences(source: impl Into<String>, sentences: Vec<TaggedSentence>) -> Result<Self> {
        for (i, s) in sentences.iter().enumerate() {
            if s.tokens.len() != s.tags.len() {
                return Err(Error::invalid(format!(
                    "sentence {i} has {} tokens but {} tags",
                    s.tokens.len(),
                    s.tags.len()
                )));
            }
        }
        let tagset: BTreeSet<&String> = sentences.iter().flat_map(|s| &s.tags).collect();
        let tagset = tagset.into_iter().cloned().collect();
        Ok(TagDataset {
            sentences,
            tagset,
            source: source.into(),
            column: TagColumn::Upos,
            fell_back_to_upos: false,
        })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// Rewrites every token form; tags are untouched.
    pub fn transliterated(&self, scheme: &TransliterationScheme) -> TagDataset {
        let mut out = self.clone();
        for s in &mut out.sentences {
            for t in &mut s.tokens {
                *t = scheme.transliterate(t);
            }
        }
        out.source = format!("{} [{}]", self.source, scheme.name());
        out
    }

    /// Serialises with the tag in both UPOS and XPOS columns.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for (i, (tok, tag)) in s.tokens.iter().zip(&s.tags).enumerate() {
                out.push_str(&format!("{}\t{tok}\t_\t{tag}\t{tag}\t_\t_\t_\t_\t_\n", i + 1));
            }
            out.push('\n');
        }
        out
    }
}

struct Row {
    form: String,
    upos: String,
    xpos: String,
}

pub fn parse_conllu(text: &str, source_name: &str, column: TagColumn) -> Result<TagDataset> {
    let mut blocks: Vec<Vec<Row>> = Vec::new();
    let mut current: Vec<Row> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message,
        };
        if fields.len() != 10 {
            return Err(parse_err(format!(
                "expected 10 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        if id.parse::<u32>().is_err() {
            return Err(parse_err(format!("bad token id {id:?}")));
        }
        if fields[1].is_empty() {
            return Err(parse_err("empty FORM".into()));
        }
        current.push(Row {
            form: fields[1].to_string(),
            upos: fields[3].to_string(),
            xpos: fields[4].to_string(),
        });
    }
    if !current.is_empty() {
        blocks.push(current);
    }

    let mut effective = column;
    let mut fell_back = false;
    if column == TagColumn::Xpos && blocks.iter().flatten().any(|r| r.xpos == "_") {
        effective = TagColumn::Upos;
        fell_back = true;
        log::warn!("{source_name}: XPOS missing, using UPOS for the whole dataset");
    }
    let sentences = blocks
        .into_iter()
        .map(|rows| TaggedSentence {
            tokens: rows.iter().map(|r| r.form.clone()).collect(),
            tags: rows
                .into_iter()
                .map(|r| match effective {
                    TagColumn::Upos => r.upos,
                    TagColumn::Xpos => r.xpos,
                })
                .collect(),
        })
        .collect();
    let mut ds = TagDataset::from_sentences(format!("{source_name}:{effective}"), sentences)?;
    ds.column = effective;
    ds.fell_back_to_upos = fell_back;
    Ok(ds)
}

pub fn load_conllu(path: &Path, column: TagColumn) -> Result<TagDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, &path.display().to_string(), column)
}
