use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use vocab_mixin::augment::{apply_augmentation, preset, select_augmentation, AugmentationPlan, Preset, Ranking};
use vocab_mixin::corpus::{downsample, Corpus};
use vocab_mixin::coverage::{coverage_delta, coverage_report};
use vocab_mixin::digest::derive_seed;
use vocab_mixin::mlm::{
    init_extended, train, with_reserved, Architecture, InitPolicy, MlmConfig, MlmState, OptimizerKind,
};
use vocab_mixin::synth::{cyrillic_latin_scheme, unseen_script_inputs, FixtureSizes};
use vocab_mixin::tagger::{
    evaluate_accuracy, load_conllu, run_comparison, standard_configs, ComparisonInputs, ComparisonSettings, Pooling,
    TagColumn, TaggerConfig,
};
use vocab_mixin::translit::{load_scheme, AugmentStep, TransliterationScheme, DEFAULT_MIN_FREQUENCY};
use vocab_mixin::wordpiece::{train_vocabulary, Vocabulary};
use vocab_mixin::{Error, Result};

use crate::args::*;
use crate::config::Resolver;
use crate::manifest::{read_bytes, Run};
use crate::report::{default_format, emit_report};

/// Shared state of one invocation.
struct Ctx {
    run: Run,
    cfg: Resolver,
    out: Option<PathBuf>,
    seed: u64,
}

impl Ctx {
    fn new(command: &str, common: &Common) -> Result<Self> {
        let mut cfg = Resolver::new(common.config.as_deref())?;
        let seed = cfg.get("seed", common.seed, 0)?;
        let out = cfg.optional("out", common.out.clone())?;
        Ok(Ctx {
            run: Run::new(command),
            cfg,
            out,
            seed,
        })
    }

    fn format(&mut self, flag: Option<Format>, default: Format, allowed: &[Format]) -> Result<Format> {
        let name = |f: Format| format!("{f:?}").to_lowercase();
        let s: String = self.cfg.get("format", flag.map(name), name(default))?;
        let f = match s.as_str() {
            "json" => Format::Json,
            "text" => Format::Text,
            "csv" => Format::Csv,
            _ => return Err(Error::Parameter(format!("unknown format {s:?}"))),
        };
        if !allowed.contains(&f) {
            return Err(Error::Parameter(format!(
                "{} does not support --format {s}",
                self.run.command
            )));
        }
        Ok(f)
    }

    fn jobs(&mut self, flag: Option<usize>) -> Result<usize> {
        let jobs = self.cfg.get("jobs", flag, 1)?;
        if jobs == 0 {
            return Err(Error::Parameter("--jobs must be at least 1".into()));
        }
        Ok(jobs)
    }

    fn corpus(&mut self, path: &Path, downsample_fraction: Option<f64>) -> Result<Corpus> {
        self.run.input(path)?;
        let tag = path
            .file_stem()
            .map_or_else(|| "und".to_string(), |s| s.to_string_lossy().into_owned());
        let corpus = vocab_mixin::corpus::load_corpus(path, &tag)?;
        match downsample_fraction {
            Some(f) => downsample(&corpus, f, derive_seed(self.seed, "cli/downsample")),
            None => Ok(corpus),
        }
    }

    fn vocab(&mut self, path: &Path) -> Result<Vocabulary> {
        self.run.input(path)?;
        Vocabulary::load(path)
    }

    fn scheme(&mut self, path: &Path) -> Result<TransliterationScheme> {
        self.run.input(path)?;
        load_scheme(path)
    }

    /// Writes the main document to `--out`, or to standard output.
    fn emit(&mut self, contents: &str) -> Result<()> {
        match self.out.clone() {
            Some(p) => self.run.write(&p, contents.as_bytes()),
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<()> {
        self.cfg.finish()?;
        let path = self.run.finish(self.out.as_deref(), self.cfg.resolved)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// A checkpoint's vocabulary: the file as given, or with the reserved pieces
/// appended when that is what the checkpoint was trained with.
fn bind_vocab(state: &MlmState, vocab: Vocabulary) -> Result<Vocabulary> {
    if state.check_vocab(&vocab).is_ok() {
        return Ok(vocab);
    }
    let reserved = with_reserved(&vocab)?;
    state.check_vocab(&reserved)?;
    Ok(reserved)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainVocab(a) => train_vocab(a),
        Command::Augment(a) => augment(a),
        Command::Translit(a) => translit(a),
        Command::Coverage(a) => coverage(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Probe(a) => probe(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
    }
}

fn train_vocab(a: TrainVocabArgs) -> Result<()> {
    let mut ctx = Ctx::new("train-vocab", &a.common)?;
    ctx.format(a.common.format, Format::Text, &[Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
    let size = ctx.cfg.get("size", a.size, 5000)?;
    let min_frequency = ctx.cfg.get("min_frequency", a.min_frequency, DEFAULT_MIN_FREQUENCY)?;
    let fraction = ctx.cfg.optional("downsample", a.downsample)?;
    let corpus = ctx.corpus(&path, fraction)?;
    let vocab = train_vocabulary(&corpus, size, min_frequency)?;
    log::info!("trained {} entries from {} sentences", vocab.len(), corpus.len());
    ctx.emit(&vocab.to_text())?;
    ctx.finish()
}

fn augment(a: AugmentArgs) -> Result<()> {
    let mut ctx = Ctx::new("augment", &a.common)?;
    let format = ctx.format(a.common.format, Format::Json, &[Format::Json, Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let name: Preset = ctx.cfg.get("preset", a.preset, Preset::Va)?;
    let base_path: PathBuf = ctx.cfg.required("base", a.base)?;
    let corpus_path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
    let candidate_path: Option<PathBuf> = ctx.cfg.optional("vocab", a.vocab)?;
    let scheme_path: Option<PathBuf> = ctx.cfg.optional("scheme", a.scheme)?;
    let candidate_size = ctx.cfg.optional("candidate_size", a.candidate_size)?;
    let mult = ctx.cfg.optional("a", a.a)?;
    let n = ctx.cfg.optional("n", a.n)?;
    let min_frequency = ctx.cfg.get("min_frequency", a.min_frequency, DEFAULT_MIN_FREQUENCY)?;
    let ranking: Ranking = ctx.cfg.get("ranking", a.ranking, Ranking::default())?;
    let fraction = ctx.cfg.optional("downsample", a.downsample)?;
    let vocab_out: Option<PathBuf> = ctx.cfg.optional("vocab_out", a.vocab_out)?;

    let mut params = preset(name, candidate_size, mult)?;
    if let Some(n) = n {
        params.n = n;
    }
    let base = ctx.vocab(&base_path)?;
    let mut corpus = ctx.corpus(&corpus_path, fraction)?;
    if let Some(p) = scheme_path {
        corpus = ctx.scheme(&p)?.transliterate_corpus(&corpus);
    }
    let candidate = match candidate_path {
        Some(p) => ctx.vocab(&p)?,
        None => train_vocabulary(&corpus, params.candidate_size, min_frequency)?,
    };
    let plan = select_augmentation(&base, &candidate, &corpus, params.selection(ranking));
    log::info!("{name}: selected {} of at most {} pieces", plan.len(), params.n);
    if let Some(p) = vocab_out {
        let (vocab, _) = apply_augmentation(&base, &plan)?;
        ctx.run.write(&p, vocab.to_text().as_bytes())?;
    }
    let doc = match format {
        Format::Text => plan
            .selected
            .iter()
            .map(|r| format!("{}\t{}\n", r.piece, r.rescue_count))
            .collect(),
        _ => plan.to_json()? + "\n",
    };
    ctx.emit(&doc)?;
    ctx.finish()
}

fn translit(a: TranslitArgs) -> Result<()> {
    let mut ctx = Ctx::new("translit", &a.common)?;
    ctx.format(a.common.format, Format::Text, &[Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let scheme_path: PathBuf = ctx.cfg.required("scheme", a.scheme)?;
    let corpus_path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
    let scheme = ctx.scheme(&scheme_path)?;
    let corpus = ctx.corpus(&corpus_path, None)?;
    let unmatched: usize = corpus
        .sentences()
        .iter()
        .map(|s| scheme.transliterate_counting(s).1)
        .sum();
    if unmatched > 0 {
        log::warn!("{unmatched} non-ASCII characters had no rule and were passed through");
    }
    ctx.emit(&scheme.transliterate_corpus(&corpus).to_text())?;
    ctx.finish()
}

fn coverage(a: CoverageArgs) -> Result<()> {
    let mut ctx = Ctx::new("coverage", &a.common)?;
    let format = ctx.format(a.common.format, Format::Json, &[Format::Json, Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let vocab_path: PathBuf = ctx.cfg.required("vocab", a.vocab)?;
    let corpus_path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
    let base_path: Option<PathBuf> = ctx.cfg.optional("base", a.base)?;
    let language: Option<String> = ctx.cfg.optional("language", a.language)?;
    let fraction = ctx.cfg.optional("downsample", a.downsample)?;
    let vocab = ctx.vocab(&vocab_path)?;
    let mut corpus = ctx.corpus(&corpus_path, fraction)?;
    if let Some(l) = language {
        corpus = corpus.with_language_tag(l);
    }
    let doc = match base_path {
        Some(p) => {
            let base = ctx.vocab(&p)?;
            let delta = coverage_delta(&base, &vocab, &corpus);
            match format {
                Format::Text => format!(
                    "language\t{}\nunk_before\t{:.4}\nunk_delta\t{:+.4}\n",
                    delta.language,
                    delta.unk_before.unwrap_or(f64::NAN),
                    delta.unk_delta
                ),
                _ => to_json(&delta)?,
            }
        }
        None => {
            let report = coverage_report(&vocab, &corpus);
            match format {
                Format::Text => report.to_text(),
                _ => to_json(&report)?,
            }
        }
    };
    ctx.emit(&doc)?;
    ctx.finish()
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    let mut ctx = Ctx::new("pretrain", &a.common)?;
    let format = ctx.format(a.common.format, Format::Text, &[Format::Json, Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let vocab_path: PathBuf = ctx.cfg.required("vocab", a.vocab)?;
    let corpus_path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
    let valid_path: PathBuf = ctx.cfg.required("valid", a.valid)?;
    let checkpoint: Option<PathBuf> = ctx.cfg.optional("checkpoint", a.checkpoint)?;
    let plan_path: Option<PathBuf> = ctx.cfg.optional("plan", a.plan)?;
    let mult = ctx.cfg.optional("a", a.a)?;
    let fraction = ctx.cfg.optional("downsample", a.downsample)?;
    let defaults = MlmConfig::default();
    let mut config = MlmConfig {
        max_epochs: ctx.cfg.get("epochs", a.epochs, defaults.max_epochs)?,
        peak_lr: ctx.cfg.get("lr", a.lr, defaults.peak_lr)?,
        warmup_steps: ctx.cfg.get("warmup", a.warmup, defaults.warmup_steps)?,
        batch_size: ctx.cfg.get("batch_size", a.batch_size, defaults.batch_size)?,
        optimizer: ctx.cfg.parsed::<OptimizerKind>("optimizer", a.optimizer, "sgd")?,
        mask_probability: ctx.cfg.get("mask_probability", None, defaults.mask_probability)?,
        seed: derive_seed(ctx.seed, "cli/mlm"),
        ..defaults
    };
    let arch_default = Architecture::default();
    let arch = Architecture {
        width: ctx.cfg.get("width", None, arch_default.width)?,
        ffn_width: ctx.cfg.get("ffn_width", None, arch_default.ffn_width)?,
        blocks: ctx.cfg.get("blocks", None, arch_default.blocks)?,
        max_len: ctx.cfg.get("max_len", None, arch_default.max_len)?,
    };
    let policy: InitPolicy = ctx.cfg.parsed("init_policy", None, "mean_plus_noise")?;
    let noise_scale = ctx.cfg.get("noise_scale", None, 0.02)?;
    let out: PathBuf = ctx
        .out
        .clone()
        .ok_or_else(|| Error::Parameter("--out is required for the checkpoint".into()))?;

    let vocab = ctx.vocab(&vocab_path)?;
    let train_corpus = ctx.corpus(&corpus_path, fraction)?;
    let valid_corpus = ctx.corpus(&valid_path, None)?;
    let (mut state, mut bound) = match checkpoint {
        Some(p) => {
            ctx.run.input(&p)?;
            let state = MlmState::load(&p)?;
            let bound = bind_vocab(&state, vocab)?;
            (state, bound)
        }
        None => MlmState::fresh(&vocab, arch, derive_seed(ctx.seed, "cli/init"))?,
    };
    config.a = mult.unwrap_or(1.0);
    if let Some(p) = plan_path {
        ctx.run.input(&p)?;
        let plan = AugmentationPlan::load(&p)?;
        let (extended, skipped) = apply_augmentation(&bound, &plan)?;
        if !skipped.is_empty() {
            return Err(Error::Validation(format!(
                "plan pieces already in the model vocabulary: {}",
                skipped.join(" ")
            )));
        }
        state = init_extended(
            &state,
            &extended,
            &plan,
            policy,
            noise_scale,
            derive_seed(ctx.seed, "cli/extend"),
        )?;
        bound = extended;
        config.a = mult.unwrap_or(plan.a);
    }
    let (best, report) = train(&state, &train_corpus, &valid_corpus, &bound, &config)?;
    ctx.run.write(&out, &best.to_bytes())?;
    ctx.run
        .write(&sibling(&out, ".vocab.txt"), bound.to_text().as_bytes())?;
    let report_json = to_json(&report)?;
    ctx.run.write(&sibling(&out, ".report.json"), report_json.as_bytes())?;
    match format {
        Format::Json => print!("{report_json}"),
        _ => println!(
            "selected epoch {} of {} (valid loss {:.4})",
            report.selected_epoch,
            report.epochs.len(),
            report.valid_losses()[report.selected_epoch - 1]
        ),
    }
    ctx.finish()
}

fn probe(a: ProbeArgs) -> Result<()> {
    let mut ctx = Ctx::new("probe", &a.common)?;
    let format = ctx.format(a.common.format, Format::Json, &[Format::Json, Format::Text])?;
    ctx.jobs(a.common.jobs)?;
    let checkpoint: PathBuf = ctx.cfg.required("checkpoint", a.checkpoint)?;
    let vocab_path: PathBuf = ctx.cfg.required("vocab", a.vocab)?;
    let train_path: PathBuf = ctx.cfg.required("train", a.train)?;
    let test_path: PathBuf = ctx.cfg.required("test", a.test)?;
    let column: TagColumn = ctx.cfg.parsed("column", a.column, "XPOS")?;
    let scheme_path: Option<PathBuf> = ctx.cfg.optional("scheme", a.scheme)?;
    let defaults = TaggerConfig::default();
    let config = TaggerConfig {
        epochs: ctx.cfg.get("epochs", a.epochs, defaults.epochs)?,
        lr: ctx.cfg.get("lr", a.lr, defaults.lr)?,
        finetune_encoder: !ctx.cfg.get("frozen", a.frozen.then_some(true), false)?,
        pooling: ctx.cfg.parsed::<Pooling>("pooling", a.pooling, "first_piece")?,
        seed: derive_seed(ctx.seed, "cli/tagger"),
    };

    ctx.run.input(&checkpoint)?;
    let state = MlmState::load(&checkpoint)?;
    let vocab = bind_vocab(&state, ctx.vocab(&vocab_path)?)?;
    ctx.run.input(&train_path)?;
    ctx.run.input(&test_path)?;
    let mut train_set = load_conllu(&train_path, column)?;
    let mut test_set = load_conllu(&test_path, column)?;
    if let Some(p) = scheme_path {
        let scheme = ctx.scheme(&p)?;
        train_set = train_set.transliterated(&scheme);
        test_set = test_set.transliterated(&scheme);
    }
    let trained = vocab_mixin::tagger::train_tagger(&state, &vocab, &train_set, &config)?;
    let encoder = trained.encoder.as_ref().unwrap_or(&state);
    let accuracy = evaluate_accuracy(encoder, &vocab, &trained.params, &test_set)?;
    let train_accuracy = evaluate_accuracy(encoder, &vocab, &trained.params, &train_set)?;
    let doc = match format {
        Format::Text => format!(
            "test accuracy {:.2}\ntrain accuracy {:.2}\n",
            100.0 * accuracy,
            100.0 * train_accuracy
        ),
        _ => to_json(&json!({
            "accuracy": accuracy,
            "train_accuracy": train_accuracy,
            "column": train_set.column,
            "fell_back_to_upos": train_set.fell_back_to_upos || test_set.fell_back_to_upos,
            "tagset": trained.params.tagset,
            "test_tokens": test_set.token_count(),
        }))?,
    };
    ctx.emit(&doc)?;
    ctx.finish()
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut ctx = Ctx::new("compare", &a.common)?;
    let format = ctx.format(a.common.format, Format::Json, &[Format::Json, Format::Text])?;
    let jobs = ctx.jobs(a.common.jobs)?;
    let synthetic = ctx.cfg.get("synthetic", a.synthetic.then_some(true), false)?;
    let name: Preset = ctx.cfg.get("preset", a.preset, Preset::Va)?;
    let candidate_size = ctx.cfg.optional("candidate_size", a.candidate_size)?;
    let mult = ctx.cfg.optional("a", a.a)?;
    let runs = ctx.cfg.get("runs", a.runs, 5usize)?;
    let scheme_path: Option<PathBuf> = ctx.cfg.optional("scheme", a.scheme)?;
    let mlm = MlmConfig {
        max_epochs: ctx.cfg.get("epochs", a.epochs, 3)?,
        peak_lr: ctx.cfg.get("lr", None, 0.05)?,
        warmup_steps: ctx.cfg.get("warmup", None, 100)?,
        batch_size: ctx.cfg.get("batch_size", None, 8)?,
        ..MlmConfig::default()
    };
    let tagger = TaggerConfig {
        epochs: ctx.cfg.get("tagger_epochs", a.tagger_epochs, 8)?,
        lr: ctx.cfg.get("tagger_lr", None, 0.05)?,
        ..TaggerConfig::default()
    };
    if runs == 0 {
        return Err(Error::Parameter("--runs must be at least 1".into()));
    }

    let mut scheme = match scheme_path {
        Some(p) => Some(ctx.scheme(&p)?),
        None => None,
    };
    let inputs = if synthetic {
        if scheme.is_none() {
            scheme = Some(cyrillic_latin_scheme());
        }
        unseen_script_inputs(
            FixtureSizes::default(),
            Architecture::default(),
            &mlm,
            derive_seed(ctx.seed, "compare/fixture"),
        )?
    } else {
        let base_path: PathBuf = ctx.cfg.required("base", a.base)?;
        let ckpt: PathBuf = ctx.cfg.required("checkpoint", a.checkpoint)?;
        let corpus_path: PathBuf = ctx.cfg.required("corpus", a.corpus)?;
        let valid_path: PathBuf = ctx.cfg.required("valid", a.valid)?;
        let train_path: PathBuf = ctx.cfg.required("train", a.train)?;
        let test_path: PathBuf = ctx.cfg.required("test", a.test)?;
        let column: TagColumn = ctx.cfg.parsed("column", a.column, "XPOS")?;
        let base_vocab = ctx.vocab(&base_path)?;
        ctx.run.input(&ckpt)?;
        let base_state = MlmState::load(&ckpt)?;
        base_state.check_vocab(&with_reserved(&base_vocab)?)?;
        ctx.run.input(&train_path)?;
        ctx.run.input(&test_path)?;
        ComparisonInputs {
            train_corpus: ctx.corpus(&corpus_path, None)?,
            valid_corpus: ctx.corpus(&valid_path, None)?,
            tag_train: load_conllu(&train_path, column)?,
            tag_test: load_conllu(&test_path, column)?,
            base_vocab,
            base_state,
        }
    };
    let step = AugmentStep::from_preset(name, candidate_size, mult)?;
    let configs = standard_configs(&step, scheme.map(Arc::new))?;
    let seeds: Vec<u64> = (0..runs)
        .map(|i| derive_seed(ctx.seed, &format!("compare/run/{i}")))
        .collect();
    let settings = ComparisonSettings {
        mlm,
        tagger,
        jobs,
        ..ComparisonSettings::default()
    };
    let table = run_comparison(&inputs, &configs, &seeds, &settings)?;
    let doc = match format {
        Format::Text => table.to_text(),
        _ => table.to_json()? + "\n",
    };
    ctx.emit(&doc)?;
    ctx.finish()
}

fn report(a: ReportArgs) -> Result<()> {
    let mut ctx = Ctx::new("report", &a.common)?;
    ctx.jobs(a.common.jobs)?;
    let kind = a
        .kind
        .ok_or_else(|| Error::Parameter("--kind is required (table2, fig1 or table4)".into()))?;
    ctx.cfg.record("kind", &format!("{kind:?}").to_lowercase());
    let format = ctx.format(
        a.common.format,
        default_format(kind),
        &[Format::Json, Format::Text, Format::Csv],
    )?;
    let records: PathBuf = ctx.cfg.required("records", a.records)?;
    let bytes = read_bytes(&records)?;
    ctx.run.input(&records)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Decode {
        path: records.clone(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let doc = emit_report(kind, &text, &records.display().to_string(), format)?;
    ctx.emit(&doc)?;
    ctx.finish()
}
