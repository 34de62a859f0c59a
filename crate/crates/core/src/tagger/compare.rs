//! Runs named configurations over several seeds and tabulates tagging
//! accuracy.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_accuracy, train_tagger, TagDataset, TaggerConfig};
use crate::augment::apply_augmentation;
use crate::corpus::Corpus;
use crate::coverage::{unk_token_percentage, DeltaRecord};
use crate::digest::{derive_seed, sha256_hex};
use crate::error::{Error, Result};
use crate::mlm::{init_extended, train, with_reserved, InitPolicy, MlmConfig, MlmState};
use crate::translit::{run_pipeline, AugmentStep, MixinPipeline, MixinStep, TransliterationScheme};
use crate::wordpiece::Vocabulary;

/// A named setup: the mix-ins to apply, then optionally continued
/// pretraining on the (possibly transliterated) target corpus.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub pipeline: MixinPipeline,
    pub continued_pretraining: bool,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, pipeline: MixinPipeline, continued_pretraining: bool) -> Self {
        ExperimentConfig {
            name: name.into(),
            pipeline,
            continued_pretraining,
        }
    }
}

/// BASE, LAPT and the given augmentation step, plus their transliterated
/// variants when a scheme is supplied.
pub fn standard_configs(
    augment: &AugmentStep,
    scheme: Option<Arc<TransliterationScheme>>,
) -> Result<Vec<ExperimentConfig>> {
    let aug_name = augment.preset.to_string();
    let mut out = vec![
        ExperimentConfig::new("BASE", MixinPipeline::default(), false),
        ExperimentConfig::new("LAPT", MixinPipeline::default(), true),
        ExperimentConfig::new(
            &aug_name,
            MixinPipeline::new(vec![MixinStep::Augment(augment.clone())])?,
            true,
        ),
    ];
    if let Some(s) = scheme {
        out.push(ExperimentConfig::new(
            "LAPT+translit",
            MixinPipeline::new(vec![MixinStep::Transliterate(s.clone())])?,
            true,
        ));
        out.push(ExperimentConfig::new(
            format!("{aug_name}+translit"),
            MixinPipeline::new(vec![MixinStep::Transliterate(s), MixinStep::Augment(augment.clone())])?,
            true,
        ));
    }
    Ok(out)
}

/// Shared inputs. `base_state` must be bound to `with_reserved(base_vocab)`.
#[derive(Debug, Clone)]
pub struct ComparisonInputs {
    pub base_vocab: Vocabulary,
    pub base_state: MlmState,
    pub train_corpus: Corpus,
    pub valid_corpus: Corpus,
    pub tag_train: TagDataset,
    pub tag_test: TagDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSettings {
    pub mlm: MlmConfig,
    pub tagger: TaggerConfig,
    pub init_policy: InitPolicy,
    pub noise_scale: f64,
    pub jobs: usize,
}

impl Default for ComparisonSettings {
    fn default() -> Self {
        ComparisonSettings {
            mlm: MlmConfig::default(),
            tagger: TaggerConfig::default(),
            init_policy: InitPolicy::MeanPlusNoise,
            noise_scale: 0.02,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: String,
    pub seed: u64,
    /// Token accuracy in percent.
    pub accuracy: f64,
    /// UNK token percentage of the target corpus under the run's vocabulary.
    pub unk_pct: f64,
    pub vocab_size: usize,
    pub plan_size: usize,
    pub selected_epoch: Option<usize>,
    pub encoder_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over sqrt(n); 0 for a single seed.
    pub std_error: f64,
    pub unk_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub before: String,
    pub after: String,
    pub before_mean: f64,
    pub after_mean: f64,
    pub delta: f64,
}

impl PairDelta {
    /// `before → after (delta)` with two decimals.
    pub fn arrow(&self) -> String {
        format!("{:.2} → {:.2} ({:+.2})", self.before_mean, self.after_mean, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub task: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub summaries: Vec<ConfigSummary>,
    pub deltas: Vec<PairDelta>,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Pairs worth reporting among `names`: BASE→LAPT, LAPT→each augmentation,
/// and X→X+translit.
pub fn default_pairs(names: &[String]) -> Vec<(String, String)> {
    let has = |n: &str| names.iter().any(|x| x == n);
    let mut out = Vec::new();
    if has("BASE") && has("LAPT") {
        out.push(("BASE".to_string(), "LAPT".to_string()));
    }
    if has("LAPT") {
        for n in names {
            if n != "LAPT" && n != "BASE" && !n.contains('+') {
                out.push(("LAPT".to_string(), n.clone()));
            }
        }
    }
    for n in names {
        let t = format!("{n}+translit");
        if has(&t) {
            out.push((n.clone(), t));
        }
    }
    out
}

impl ComparisonTable {
    /// Assembles summaries and deltas from per-run results, keeping the
    /// order in which configurations first appear.
    pub fn from_runs(task: &str, seeds: &[u64], runs: Vec<RunResult>, pairs: &[(String, String)]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for r in &runs {
            if !names.contains(&r.config) {
                names.push(r.config.clone());
            }
        }
        let summaries: Vec<ConfigSummary> = names
            .iter()
            .map(|name| {
                let mine: Vec<&RunResult> = runs.iter().filter(|r| &r.config == name).collect();
                let scores: Vec<f64> = mine.iter().map(|r| r.accuracy).collect();
                let (mean, std_error) = mean_and_se(&scores);
                let unk_pct = mine.iter().map(|r| r.unk_pct).sum::<f64>() / mine.len() as f64;
                ConfigSummary {
                    config: name.clone(),
                    scores,
                    mean,
                    std_error,
                    unk_pct,
                }
            })
            .collect();
        let find = |n: &str| summaries.iter().find(|s| s.config == n);
        let mut deltas = Vec::new();
        for (b, a) in pairs {
            let (Some(sb), Some(sa)) = (find(b), find(a)) else {
                return Err(Error::param(format!(
                    "delta pair {b} → {a} names an unknown configuration"
                )));
            };
            deltas.push(PairDelta {
                before: b.clone(),
                after: a.clone(),
                before_mean: sb.mean,
                after_mean: sa.mean,
                delta: sa.mean - sb.mean,
            });
        }
        Ok(ComparisonTable {
            task: task.to_string(),
            seeds: seeds.to_vec(),
            runs,
            summaries,
            deltas,
        })
    }

    pub fn summary(&self, config: &str) -> Option<&ConfigSummary> {
        self.summaries.iter().find(|s| s.config == config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("table serializes").as_bytes())
    }

    /// Coverage and task change between two configurations, for the
    /// per-language reports.
    pub fn delta_record(&self, language: &str, before: &str, after: &str) -> Result<DeltaRecord> {
        let get = |n: &str| {
            self.summary(n)
                .ok_or_else(|| Error::param(format!("unknown configuration {n}")))
        };
        let (b, a) = (get(before)?, get(after)?);
        Ok(DeltaRecord {
            language: language.to_string(),
            unk_before: Some(b.unk_pct),
            unk_delta: a.unk_pct - b.unk_pct,
            task_deltas: BTreeMap::from([(self.task.clone(), a.mean - b.mean)]),
        })
    }

    /// Aligned text: one row per configuration, then the arrow deltas.
    pub fn to_text(&self) -> String {
        let w = self.summaries.iter().map(|s| s.config.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<w$}  {:>14}  {:>6}  {:>7}\n", "config", self.task, "n", "unk%");
        for s in &self.summaries {
            let cell = format!("{:.2} ± {:.2}", s.mean, s.std_error);
            out.push_str(&format!(
                "{:<w$}  {:>14}  {:>6}  {:>7.2}\n",
                s.config,
                cell,
                s.scores.len(),
                s.unk_pct
            ));
        }
        if !self.deltas.is_empty() {
            out.push('\n');
            let pw = self
                .deltas
                .iter()
                .map(|d| d.before.chars().count() + d.after.chars().count() + 3)
                .max()
                .unwrap_or(0);
            for d in &self.deltas {
                let label = format!("{} → {}", d.before, d.after);
                let pad = pw.saturating_sub(label.chars().count());
                out.push_str(&format!("{label}{}  {}\n", " ".repeat(pad), d.arrow()));
            }
        }
        out
    }
}

fn run_one(
    inputs: &ComparisonInputs,
    config: &ExperimentConfig,
    seed: u64,
    settings: &ComparisonSettings,
) -> Result<RunResult> {
    let out = run_pipeline(&inputs.train_corpus, &inputs.base_vocab, &config.pipeline)?;
    let scheme = config.pipeline.scheme();
    let valid = scheme.map_or_else(
        || inputs.valid_corpus.clone(),
        |s| s.transliterate_corpus(&inputs.valid_corpus),
    );
    let tag_train = scheme.map_or_else(|| inputs.tag_train.clone(), |s| inputs.tag_train.transliterated(s));
    let tag_test = scheme.map_or_else(|| inputs.tag_test.clone(), |s| inputs.tag_test.transliterated(s));

    let reserved = with_reserved(&inputs.base_vocab)?;
    inputs.base_state.check_vocab(&reserved)?;
    let (vocab, mut state, a) = match &out.plan {
        Some(plan) => {
            let (ext, _) = apply_augmentation(&reserved, plan)?;
            let state = init_extended(
                &inputs.base_state,
                &ext,
                plan,
                settings.init_policy,
                settings.noise_scale,
                derive_seed(seed, "compare/init"),
            )?;
            (ext, state, plan.a)
        }
        None => (reserved, inputs.base_state.clone(), 1.0),
    };

    let mut selected_epoch = None;
    if config.continued_pretraining {
        let mlm = MlmConfig {
            seed: derive_seed(seed, "compare/mlm"),
            a,
            ..settings.mlm
        };
        let (best, report) = train(&state, &out.corpus, &valid, &vocab, &mlm)?;
        state = best;
        selected_epoch = Some(report.selected_epoch);
    }

    let tagger_config = TaggerConfig {
        seed: derive_seed(seed, "compare/tagger"),
        ..settings.tagger
    };
    let trained = train_tagger(&state, &vocab, &tag_train, &tagger_config)?;
    let encoder = trained.encoder.as_ref().unwrap_or(&state);
    let accuracy = 100.0 * evaluate_accuracy(encoder, &vocab, &trained.params, &tag_test)?;
    log::info!("{} seed {seed}: accuracy {accuracy:.2}", config.name);
    Ok(RunResult {
        config: config.name.clone(),
        seed,
        accuracy,
        unk_pct: unk_token_percentage(&out.vocab, &out.corpus),
        vocab_size: vocab.len(),
        plan_size: out.plan.as_ref().map_or(0, |p| p.len()),
        selected_epoch,
        encoder_digest: encoder.digest(),
    })
}

/// Every (config, seed) pair runs independently, up to `settings.jobs` at a
/// time; the table is assembled in config-then-seed order.
pub fn run_comparison(
    inputs: &ComparisonInputs,
    configs: &[ExperimentConfig],
    seeds: &[u64],
    settings: &ComparisonSettings,
) -> Result<ComparisonTable> {
    if seeds.is_empty() {
        return Err(Error::param("at least one seed is required"));
    }
    if configs.is_empty() {
        return Err(Error::param("at least one configuration is required"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in configs {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::param(format!("duplicate configuration name {}", c.name)));
        }
    }
    let tasks: Vec<(&ExperimentConfig, u64)> = configs
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let runs: Vec<RunResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(c, s)| run_one(inputs, c, *s, settings))
            .collect::<Result<Vec<_>>>()
    })?;
    let names: Vec<String> = configs.iter().map(|c| c.name.clone()).collect();
    ComparisonTable::from_runs("pos", seeds, runs, &default_pairs(&names))
}
