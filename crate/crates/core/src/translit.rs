//! Rule-based script transliteration and the mix-in pipeline that runs
//! transliteration and vocabulary augmentation in succession.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::augment::{
    apply_augmentation, preset, select_augmentation, AugmentationPlan, Preset, PresetParams, Ranking,
};
use crate::corpus::Corpus;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::wordpiece::{train_vocabulary, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub source: String,
    pub target: String,
}

/// Longest-match grapheme rewrite table. Unmatched characters pass through.
#[derive(Debug, Clone)]
pub struct TransliterationScheme {
    name: String,
    rules: Vec<Rule>,
    lookup: HashMap<String, usize>,
    max_source_chars: usize,
    idempotent: bool,
}

impl TransliterationScheme {
    pub fn new(name: impl Into<String>, rules: Vec<Rule>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(rules.len());
        let mut max_source_chars = 0;
        for (i, r) in rules.iter().enumerate() {
            if r.source.is_empty() {
                return Err(Error::invalid(format!("rule {} has an empty source grapheme", i + 1)));
            }
            if lookup.insert(r.source.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate source grapheme {:?}", r.source)));
            }
            max_source_chars = max_source_chars.max(r.source.chars().count());
        }
        let idempotent = !rules
            .iter()
            .any(|r| rules.iter().any(|s| r.target.contains(s.source.as_str())));
        Ok(TransliterationScheme {
            name: name.into(),
            rules,
            lookup,
            max_source_chars,
            idempotent,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// False when some target contains a source grapheme, so a second pass
    /// could rewrite the output again.
    pub fn is_idempotent(&self) -> bool {
        self.idempotent
    }

    /// Unmatched characters are always copied through.
    pub fn passthrough(&self) -> bool {
        true
    }

    /// Digest of the rule table in file order.
    pub fn digest(&self) -> String {
        let mut text = String::new();
        for r in &self.rules {
            text.push_str(&r.source);
            text.push('\t');
            text.push_str(&r.target);
            text.push('\n');
        }
        sha256_hex(text.as_bytes())
    }

    /// Parses the two-column TSV format. `#` starts a comment line; the
    /// directives `#!name=<id>` and `#!passthrough=<bool>` are recognised.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut name = source_name.to_string();
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(directive) = line.strip_prefix("#!") {
                let (key, value) = directive.split_once('=').ok_or_else(|| Error::Parse {
                    source_name: source_name.to_string(),
                    line: lineno,
                    message: format!("malformed directive {line:?}"),
                })?;
                match (key.trim(), value.trim()) {
                    ("name", v) => name = v.to_string(),
                    ("passthrough", "true") => {}
                    ("passthrough", _) => {
                        return Err(Error::invalid(
                            "schemes must pass unmatched characters through (passthrough=true)",
                        ))
                    }
                    (k, _) => {
                        return Err(Error::Parse {
                            source_name: source_name.to_string(),
                            line: lineno,
                            message: format!("unknown directive {k:?}"),
                        })
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: lineno,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            rules.push(Rule {
                source: fields[0].to_string(),
                target: fields[1].to_string(),
            });
        }
        Self::new(name, rules)
    }

    pub fn transliterate(&self, text: &str) -> String {
        self.transliterate_counting(text).0
    }

    /// Transliterates and reports how many non-ASCII characters matched no rule.
    pub fn transliterate_counting(&self, text: &str) -> (String, usize) {
        let mut out = String::with_capacity(text.len());
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let chars = bounds.len() - 1;
        let mut unmatched = 0;
        let mut pos = 0;
        while pos < chars {
            let longest = self.max_source_chars.min(chars - pos);
            let hit = (1..=longest).rev().find_map(|len| {
                self.lookup
                    .get(&text[bounds[pos]..bounds[pos + len]])
                    .map(|&rule| (rule, len))
            });
            match hit {
                Some((rule, len)) => {
                    out.push_str(&self.rules[rule].target);
                    pos += len;
                }
                None => {
                    let ch = &text[bounds[pos]..bounds[pos + 1]];
                    if !ch.is_ascii() {
                        unmatched += 1;
                    }
                    out.push_str(ch);
                    pos += 1;
                }
            }
        }
        (out, unmatched)
    }

    pub fn transliterate_corpus(&self, corpus: &Corpus) -> Corpus {
        corpus.map_sentences(
            &format!("transliterate scheme={} digest={}", self.name, self.digest()),
            |s| self.transliterate(s),
        )
    }
}

pub fn load_scheme(path: &Path) -> Result<TransliterationScheme> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    TransliterationScheme::parse(&text, &stem).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

/// One step of a pipeline descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSpec {
    Transliterate {
        scheme: PathBuf,
    },
    Augment {
        preset: Preset,
        #[serde(default)]
        candidate_size: Option<usize>,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        min_frequency: Option<u64>,
        #[serde(default)]
        ranking: Option<Ranking>,
    },
}

#[derive(Debug, Clone)]
pub struct AugmentStep {
    pub preset: Preset,
    pub params: PresetParams,
    pub min_frequency: u64,
    pub ranking: Ranking,
}

impl AugmentStep {
    pub fn from_preset(name: Preset, candidate_size: Option<usize>, a: Option<f64>) -> Result<Self> {
        Ok(AugmentStep {
            preset: name,
            params: preset(name, candidate_size, a)?,
            min_frequency: DEFAULT_MIN_FREQUENCY,
            ranking: Ranking::default(),
        })
    }
}

pub const DEFAULT_MIN_FREQUENCY: u64 = 2;

#[derive(Debug, Clone)]
pub enum MixinStep {
    Transliterate(Arc<TransliterationScheme>),
    Augment(AugmentStep),
}

/// Ordered mix-ins. At most one transliteration, and it comes first.
#[derive(Debug, Clone, Default)]
pub struct MixinPipeline {
    steps: Vec<MixinStep>,
}

impl MixinPipeline {
    pub fn new(steps: Vec<MixinStep>) -> Result<Self> {
        let translits: Vec<usize> = steps
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, MixinStep::Transliterate(_)))
            .map(|(i, _)| i)
            .collect();
        if translits.len() > 1 {
            return Err(Error::invalid(
                "a pipeline may contain at most one transliteration step",
            ));
        }
        if let Some(&i) = translits.first() {
            if steps[..i].iter().any(|s| matches!(s, MixinStep::Augment(_))) {
                return Err(Error::invalid("transliteration must precede every augmentation step"));
            }
        }
        Ok(MixinPipeline { steps })
    }

    pub fn steps(&self) -> &[MixinStep] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn scheme(&self) -> Option<&TransliterationScheme> {
        self.steps.iter().find_map(|s| match s {
            MixinStep::Transliterate(t) => Some(t.as_ref()),
            MixinStep::Augment(_) => None,
        })
    }

    /// Resolves a JSON descriptor (array of step objects); scheme paths are
    /// relative to `base_dir`.
    pub fn from_descriptor(json: &str, base_dir: &Path) -> Result<Self> {
        let specs: Vec<StepSpec> = serde_json::from_str(json)?;
        Self::from_specs(&specs, base_dir)
    }

    pub fn from_specs(specs: &[StepSpec], base_dir: &Path) -> Result<Self> {
        let mut steps = Vec::with_capacity(specs.len());
        for spec in specs {
            steps.push(match spec {
                StepSpec::Transliterate { scheme } => {
                    MixinStep::Transliterate(Arc::new(load_scheme(&base_dir.join(scheme))?))
                }
                StepSpec::Augment {
                    preset: name,
                    candidate_size,
                    a,
                    n,
                    min_frequency,
                    ranking,
                } => {
                    let mut step = AugmentStep::from_preset(*name, *candidate_size, *a)?;
                    if let Some(n) = n {
                        step.params.n = *n;
                    }
                    if let Some(m) = min_frequency {
                        step.min_frequency = *m;
                    }
                    if let Some(r) = ranking {
                        step.ranking = *r;
                    }
                    MixinStep::Augment(step)
                }
            });
        }
        Self::new(steps)
    }
}

/// What a step did, for the run record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: String,
    pub details: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub plan: Option<AugmentationPlan>,
    pub candidate: Option<Vocabulary>,
    pub records: Vec<StepRecord>,
}

/// Runs the steps in order. Augmentation trains its candidate vocabulary on
/// the corpus as it stands at that point, so after a transliteration step the
/// candidate (and the plan) live in the target script.
pub fn run_pipeline(corpus: &Corpus, base: &Vocabulary, pipeline: &MixinPipeline) -> Result<PipelineOutput> {
    let mut corpus = corpus.clone();
    let mut vocab = base.clone();
    let mut plan = None;
    let mut candidate = None;
    let mut records = Vec::new();
    for step in pipeline.steps() {
        match step {
            MixinStep::Transliterate(scheme) => {
                corpus = scheme.transliterate_corpus(&corpus);
                records.push(StepRecord {
                    kind: "transliterate".into(),
                    details: BTreeMap::from([
                        ("scheme".to_string(), scheme.name().to_string()),
                        ("scheme_digest".to_string(), scheme.digest()),
                        ("corpus_digest".to_string(), corpus.digest()),
                    ]),
                });
            }
            MixinStep::Augment(aug) => {
                let cand = train_vocabulary(&corpus, aug.params.candidate_size, aug.min_frequency)?;
                let p = select_augmentation(&vocab, &cand, &corpus, aug.params.selection(aug.ranking));
                let (next, _skipped) = apply_augmentation(&vocab, &p)?;
                records.push(StepRecord {
                    kind: "augment".into(),
                    details: BTreeMap::from([
                        ("preset".to_string(), aug.preset.to_string()),
                        ("n".to_string(), aug.params.n.to_string()),
                        ("a".to_string(), aug.params.a.to_string()),
                        ("candidate_size".to_string(), aug.params.candidate_size.to_string()),
                        ("candidate_digest".to_string(), cand.digest()),
                        ("selected".to_string(), p.len().to_string()),
                        ("vocab_digest".to_string(), next.digest()),
                    ]),
                });
                vocab = next;
                plan = Some(p);
                candidate = Some(cand);
            }
        }
    }
    Ok(PipelineOutput {
        corpus,
        vocab,
        plan,
        candidate,
        records,
    })
}
