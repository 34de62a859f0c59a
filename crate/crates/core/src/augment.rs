//! Vocabulary augmentation: given a candidate vocabulary trained on target
//! language text, pick the `n` candidate pieces that most often stand in for
//! UNK-bearing words under the base vocabulary, and append them to the base.
//! The learning-rate multiplier `a` rides along in the plan and is consumed by
//! continued pretraining.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{basic_tokenize, Corpus};
use crate::error::{Error, Result};
use crate::wordpiece::Vocabulary;

/// What a candidate piece is ranked by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Occurrences of the piece inside candidate segmentations of UNK-bearing
    /// word tokens.
    #[default]
    PieceOccurrences,
    /// Number of UNK-bearing word tokens whose candidate segmentation uses the
    /// piece at least once.
    TokensRescued,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescuedPiece {
    pub piece: String,
    pub rescue_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSource {
    pub base_digest: String,
    pub candidate_digest: String,
    pub corpus_digest: String,
}

/// Pieces chosen for addition, best first, with the parameters that chose them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub selected: Vec<RescuedPiece>,
    pub n: usize,
    pub a: f64,
    #[serde(default)]
    pub ranking: Ranking,
    pub source: PlanSource,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AugmentationPlan {
    pub fn empty(a: f64) -> Self {
        AugmentationPlan {
            selected: Vec::new(),
            n: 0,
            a,
            ranking: Ranking::default(),
            source: PlanSource::default(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn pieces(&self) -> impl Iterator<Item = &str> {
        self.selected.iter().map(|r| r.piece.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: AugmentationPlan = serde_json::from_str(&text)?;
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if self.selected.len() > self.n {
            return Err(Error::invalid(format!(
                "plan selects {} pieces but n = {}",
                self.selected.len(),
                self.n
            )));
        }
        if !(self.a >= 0.0) {
            return Err(Error::invalid(format!("multiplier a = {} must be >= 0", self.a)));
        }
        if self.selected.windows(2).any(|w| w[0].rescue_count < w[1].rescue_count) {
            return Err(Error::invalid("rescue counts must be non-increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOptions {
    pub n: usize,
    pub a: f64,
    pub ranking: Ranking,
    /// Also add candidate pieces that rescue nothing, after all rescuers.
    pub include_unrescuing: bool,
}

impl SelectionOptions {
    pub fn top(n: usize) -> Self {
        SelectionOptions {
            n,
            a: 1.0,
            ranking: Ranking::PieceOccurrences,
            include_unrescuing: false,
        }
    }
}

/// Counts, per candidate piece absent from `base`, how often it appears in
/// candidate segmentations of words that hit UNK under `base`.
pub fn rescue_counts(
    base: &Vocabulary,
    candidate: &Vocabulary,
    corpus: &Corpus,
    ranking: Ranking,
) -> HashMap<String, u64> {
    let per_sentence = |sentence: &String| {
        let mut counts: HashMap<u32, u64> = HashMap::new();
        let mut base_ids = Vec::new();
        let mut cand_ids = Vec::new();
        for word in basic_tokenize(sentence).tokens {
            base_ids.clear();
            if !base.encode_word_into(&word, &mut base_ids) {
                continue;
            }
            cand_ids.clear();
            candidate.encode_word_into(&word, &mut cand_ids);
            if ranking == Ranking::TokensRescued {
                cand_ids.sort_unstable();
                cand_ids.dedup();
            }
            for &id in &cand_ids {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        counts
    };
    let merged = corpus
        .sentences()
        .par_iter()
        .map(per_sentence)
        .reduce(HashMap::new, |mut acc, part| {
            for (k, v) in part {
                *acc.entry(k).or_insert(0) += v;
            }
            acc
        });
    merged
        .into_iter()
        .filter_map(|(id, count)| {
            let piece = candidate.piece(id).expect("id from candidate");
            (!base.contains(piece)).then(|| (piece.to_string(), count))
        })
        .collect()
}

/// Selects the top `options.n` rescuing pieces (count descending, ties by
/// piece string).
pub fn select_augmentation(
    base: &Vocabulary,
    candidate: &Vocabulary,
    corpus: &Corpus,
    options: SelectionOptions,
) -> AugmentationPlan {
    let counts = rescue_counts(base, candidate, corpus, options.ranking);
    let mut ranked: Vec<RescuedPiece> = counts
        .into_iter()
        .map(|(piece, rescue_count)| RescuedPiece { piece, rescue_count })
        .collect();
    ranked.sort_by(|x, y| y.rescue_count.cmp(&x.rescue_count).then_with(|| x.piece.cmp(&y.piece)));

    if options.include_unrescuing {
        let rescuing: HashSet<&str> = ranked.iter().map(|r| r.piece.as_str()).collect();
        let mut idle: Vec<&String> = candidate
            .entries()
            .iter()
            .filter(|p| !base.contains(p) && !rescuing.contains(p.as_str()))
            .collect();
        idle.sort();
        ranked.extend(idle.into_iter().map(|p| RescuedPiece {
            piece: p.clone(),
            rescue_count: 0,
        }));
    }

    let available = ranked.len();
    ranked.truncate(options.n);
    let mut warnings = Vec::new();
    if available < options.n {
        let msg = format!("requested {} pieces but only {available} candidates qualify", options.n);
        warn!("{msg}");
        warnings.push(msg);
    }
    AugmentationPlan {
        selected: ranked,
        n: options.n,
        a: options.a,
        ranking: options.ranking,
        source: PlanSource {
            base_digest: base.digest(),
            candidate_digest: candidate.digest(),
            corpus_digest: corpus.digest(),
        },
        warnings,
    }
}

/// Appends the plan's pieces to `base` in plan order. Pieces already in `base`
/// are skipped and reported.
pub fn apply_augmentation(base: &Vocabulary, plan: &AugmentationPlan) -> Result<(Vocabulary, Vec<String>)> {
    let (mut vocab, skipped) = base.extended(plan.pieces())?;
    for p in &skipped {
        warn!("plan piece {p:?} already present in base vocabulary; skipped");
    }
    vocab.set_metadata(
        "augmented_by",
        format!("{} pieces, a={}", plan.len() - skipped.len(), plan.a),
    );
    Ok((vocab, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "VA")]
    Va,
    #[serde(rename = "TVA")]
    Tva,
    #[serde(rename = "EMBERT")]
    Embert,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VA" => Ok(Preset::Va),
            "TVA" => Ok(Preset::Tva),
            "EMBERT" | "E-MBERT" => Ok(Preset::Embert),
            _ => Err(Error::param(format!(
                "unknown preset {s:?} (expected VA, TVA or EMBERT)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Va => "VA",
            Preset::Tva => "TVA",
            Preset::Embert => "EMBERT",
        })
    }
}

pub const PRESET_PIECES: usize = 99;
pub const PRESET_CANDIDATE_SIZE: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub n: usize,
    pub a: f64,
    pub candidate_size: usize,
    pub include_unrescuing: bool,
}

impl PresetParams {
    pub fn selection(&self, ranking: Ranking) -> SelectionOptions {
        SelectionOptions {
            n: self.n,
            a: self.a,
            ranking,
            include_unrescuing: self.include_unrescuing,
        }
    }
}

/// Resolves a named instantiation of the augmentation framework.
///
/// VA adds 99 pieces at the base learning rate, TVA adds 99 pieces with a
/// caller-chosen multiplier, EMBERT adds the whole candidate vocabulary.
/// `candidate_size` defaults to 5000.
pub fn preset(name: Preset, candidate_size: Option<usize>, a_override: Option<f64>) -> Result<PresetParams> {
    if let Some(a) = a_override {
        if name != Preset::Tva {
            return Err(Error::param(format!(
                "{name} has a fixed multiplier; a is only tunable for TVA"
            )));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::param(format!("multiplier a = {a} must be positive")));
        }
    }
    let candidate_size = candidate_size.unwrap_or(PRESET_CANDIDATE_SIZE);
    if candidate_size == 0 {
        return Err(Error::param("candidate_size must be positive"));
    }
    Ok(match name {
        Preset::Va => PresetParams {
            n: PRESET_PIECES,
            a: 1.0,
            candidate_size,
            include_unrescuing: false,
        },
        Preset::Tva => PresetParams {
            n: PRESET_PIECES,
            a: a_override.ok_or_else(|| Error::param("TVA needs an explicit multiplier a"))?,
            candidate_size,
            include_unrescuing: false,
        },
        Preset::Embert => PresetParams {
            n: candidate_size,
            a: 1.0,
            candidate_size,
            include_unrescuing: true,
        },
    })
}
