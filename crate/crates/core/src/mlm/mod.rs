//! Desk-scale continued pretraining with the masked-language-modelling loss.
//!
//! The embedding table can be grown by an augmentation plan; rows appended
//! that way form their own parameter group whose learning rate is `a` times
//! the scheduled rate. The schedule is a linear warmup to a constant plateau,
//! and the epoch with the lowest validation loss is the one returned.

mod checkpoint;
mod model;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::AugmentationPlan;
use crate::corpus::{basic_tokenize, Corpus};
use crate::digest::{derive_seed, sha256_hex};
use crate::error::{Error, Result};
use crate::wordpiece::Vocabulary;

pub use model::{Architecture, Block, ForwardCache, Params, TensorMut, TensorRef};

pub const MASK_PIECE: &str = "[MASK]";
pub const PAD_PIECE: &str = "[PAD]";

/// Appends the mask and pad pieces when absent.
pub fn with_reserved(vocab: &Vocabulary) -> Result<Vocabulary> {
    Ok(vocab.extended([MASK_PIECE, PAD_PIECE])?.0)
}

/// Model parameters plus the bookkeeping that ties them to a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmState {
    pub arch: Architecture,
    pub params: Params,
    /// First embedding row added by an augmentation plan; equals the row
    /// count when no rows were added.
    pub new_row_start: usize,
    pub mask_id: u32,
    pub pad_id: u32,
    pub vocab_digest: String,
}

impl MlmState {
    /// Randomly initialised state for `vocab` (with mask/pad appended if
    /// needed). Returns the vocabulary the state is bound to.
    pub fn fresh(vocab: &Vocabulary, arch: Architecture, seed: u64) -> Result<(MlmState, Vocabulary)> {
        if arch.width == 0 || arch.ffn_width == 0 || arch.max_len == 0 {
            return Err(Error::param("architecture dimensions must be positive"));
        }
        let vocab = with_reserved(vocab)?;
        let params = Params::init(&arch, vocab.len(), seed);
        let state = MlmState {
            arch,
            params,
            new_row_start: vocab.len(),
            mask_id: vocab.id_of(MASK_PIECE).expect("reserved"),
            pad_id: vocab.id_of(PAD_PIECE).expect("reserved"),
            vocab_digest: vocab.digest(),
        };
        Ok((state, vocab))
    }

    pub fn vocab_size(&self) -> usize {
        self.params.embeddings.nrows()
    }

    pub fn width(&self) -> usize {
        self.arch.width
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.vocab_size() || vocab.digest() != self.vocab_digest {
            return Err(Error::invalid(format!(
                "vocabulary ({} entries) does not match the model state ({} rows)",
                vocab.len(),
                self.vocab_size()
            )));
        }
        Ok(())
    }

    /// Pieces of one sentence, truncated to the model's maximum length.
    pub fn encode_sentence(&self, vocab: &Vocabulary, sentence: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for w in basic_tokenize(sentence).tokens {
            vocab.encode_word_into(&w, &mut ids);
        }
        ids.truncate(self.arch.max_len);
        ids
    }

    pub fn encode_corpus(&self, vocab: &Vocabulary, corpus: &Corpus) -> Vec<Vec<u32>> {
        corpus
            .sentences()
            .iter()
            .map(|s| self.encode_sentence(vocab, s))
            .filter(|ids| !ids.is_empty())
            .collect()
    }

    pub fn forward(&self, ids: &[u32]) -> ForwardCache {
        self.params.forward(ids)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Column mean of the existing rows plus Gaussian noise.
    #[default]
    MeanPlusNoise,
    /// Independent Gaussian entries.
    RandomNormal,
}

impl FromStr for InitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_plus_noise" => Ok(InitPolicy::MeanPlusNoise),
            "random_normal" => Ok(InitPolicy::RandomNormal),
            _ => Err(Error::param(format!("unknown init policy {s:?}"))),
        }
    }
}

/// Grows `state` to match `extended`, which must be the state's vocabulary
/// with exactly the plan's pieces appended.
pub fn init_extended(
    state: &MlmState,
    extended: &Vocabulary,
    plan: &AugmentationPlan,
    policy: InitPolicy,
    noise_scale: f64,
    seed: u64,
) -> Result<MlmState> {
    let rows = state.vocab_size();
    let added = extended.len().checked_sub(rows).unwrap_or(usize::MAX);
    let tail_matches = added == plan.len()
        && extended.entries()[rows..]
            .iter()
            .zip(plan.pieces())
            .all(|(e, p)| e == p);
    if !tail_matches {
        return Err(Error::invalid(format!(
            "plan/vocabulary size mismatch: state has {rows} rows, vocabulary {} entries, plan {} pieces",
            extended.len(),
            plan.len()
        )));
    }
    if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
        return Err(Error::param("noise_scale must be a finite non-negative number"));
    }
    let d = state.width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean_row = state
        .params
        .embeddings
        .mean_axis(ndarray::Axis(0))
        .expect("nonempty table");
    let mean_bias = state.params.output_bias.mean().unwrap_or(0.0);

    let mut embeddings = Array2::zeros((rows + added, d));
    embeddings
        .slice_mut(ndarray::s![..rows, ..])
        .assign(&state.params.embeddings);
    let mut bias = ndarray::Array1::zeros(rows + added);
    bias.slice_mut(ndarray::s![..rows]).assign(&state.params.output_bias);
    for r in rows..rows + added {
        for c in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            embeddings[[r, c]] = match policy {
                InitPolicy::MeanPlusNoise => mean_row[c] + noise_scale * z,
                InitPolicy::RandomNormal => noise_scale * z,
            };
        }
        bias[r] = match policy {
            InitPolicy::MeanPlusNoise => mean_bias,
            InitPolicy::RandomNormal => 0.0,
        };
    }
    let mut out = state.clone();
    out.params.embeddings = embeddings;
    out.params.output_bias = bias;
    if state.new_row_start == rows {
        out.new_row_start = rows;
    }
    out.vocab_digest = extended.digest();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    /// Adam with bias correction.
    Adaptive,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adaptive" | "adam" => Ok(OptimizerKind::Adaptive),
            _ => Err(Error::param(format!("unknown optimizer {s:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adaptive => "adaptive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub mask_probability: f64,
    /// Fractions of selected positions replaced by the mask piece, by a
    /// uniformly random piece, or kept unchanged.
    pub mask_split: (f64, f64, f64),
    pub peak_lr: f64,
    pub warmup_steps: usize,
    pub max_epochs: usize,
    /// Learning-rate multiplier for plan-appended embedding rows.
    pub a: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            mask_probability: 0.15,
            mask_split: (0.8, 0.1, 0.1),
            peak_lr: 0.1,
            warmup_steps: 1000,
            max_epochs: 20,
            a: 1.0,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            batch_size: 8,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        let (m, r, k) = self.mask_split;
        if [m, r, k].iter().any(|x| !(0.0..=1.0).contains(x)) || ((m + r + k) - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!(
                "mask_split {:?} must be fractions summing to 1",
                self.mask_split
            )));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::param("mask_probability must lie in [0, 1]"));
        }
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return Err(Error::param("peak_lr must be positive"));
        }
        if self.warmup_steps == 0 || self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::param("warmup_steps, max_epochs and batch_size must be positive"));
        }
        if !(self.a >= 0.0) || !self.a.is_finite() {
            return Err(Error::param("multiplier a must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Linear warmup to `peak_lr` over `warmup_steps`, constant afterwards.
/// Steps count from 1.
pub fn lr_at(step: usize, config: &MlmConfig) -> f64 {
    config.peak_lr * (step as f64 / config.warmup_steps as f64).min(1.0)
}

/// Model inputs and targets; `None` marks a position excluded from the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub inputs: Vec<Vec<u32>>,
    pub labels: Vec<Vec<Option<u32>>>,
}

impl MaskedBatch {
    pub fn labelled(&self) -> usize {
        self.labels.iter().flatten().filter(|l| l.is_some()).count()
    }
}

/// Selects each position independently with `mask_probability`; selected
/// positions keep their original id as label and have their input replaced
/// per `mask_split`.
pub fn mask_batch(
    token_ids: &[Vec<u32>],
    config: &MlmConfig,
    step_seed: u64,
    mask_id: u32,
    vocab_size: usize,
) -> MaskedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed);
    let (p_mask, p_random, _) = config.mask_split;
    let mut inputs = Vec::with_capacity(token_ids.len());
    let mut labels = Vec::with_capacity(token_ids.len());
    for seq in token_ids {
        let mut inp = seq.clone();
        let mut lab = vec![None; seq.len()];
        for (i, &id) in seq.iter().enumerate() {
            if rng.random::<f64>() >= config.mask_probability {
                continue;
            }
            lab[i] = Some(id);
            let u: f64 = rng.random();
            if u < p_mask {
                inp[i] = mask_id;
            } else if u < p_mask + p_random {
                inp[i] = rng.random_range(0..vocab_size as u32);
            }
        }
        inputs.push(inp);
        labels.push(lab);
    }
    MaskedBatch { inputs, labels }
}

fn log_softmax_at(logits: &ndarray::Array1<f64>, target: usize) -> (f64, ndarray::Array1<f64>) {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|x| (x - max).exp());
    let sum = exp.sum();
    let logp = logits[target] - max - sum.ln();
    (logp, exp / sum)
}

/// Mean cross-entropy over labelled positions, using the tied output
/// projection.
pub fn mlm_loss_value(state: &MlmState, batch: &MaskedBatch) -> Result<(f64, usize)> {
    let total = batch.labelled();
    if total == 0 {
        return Err(Error::NoLabels);
    }
    let mut loss = 0.0;
    for (inp, lab) in batch.inputs.iter().zip(&batch.labels) {
        if !lab.iter().any(Option::is_some) {
            continue;
        }
        let cache = state.forward(inp);
        for (t, l) in lab.iter().enumerate() {
            if let Some(target) = l {
                let logits = state.params.logits(cache.hidden().row(t));
                loss -= log_softmax_at(&logits, *target as usize).0;
            }
        }
    }
    Ok((loss / total as f64, total))
}

/// Loss and gradients for every parameter.
pub fn mlm_loss(state: &MlmState, batch: &MaskedBatch) -> Result<(f64, Params)> {
    let total = batch.labelled();
    if total == 0 {
        return Err(Error::NoLabels);
    }
    let norm = 1.0 / total as f64;
    let mut grads = state.params.zeros_like();
    let mut loss = 0.0;
    for (inp, lab) in batch.inputs.iter().zip(&batch.labels) {
        if !lab.iter().any(Option::is_some) {
            continue;
        }
        let cache = state.forward(inp);
        let mut d_hidden = Array2::zeros(cache.hidden().raw_dim());
        for (t, l) in lab.iter().enumerate() {
            let Some(target) = l else { continue };
            let h = cache.hidden().row(t);
            let logits = state.params.logits(h);
            let (logp, mut probs) = log_softmax_at(&logits, *target as usize);
            loss -= logp;
            probs[*target as usize] -= 1.0;
            probs *= norm;
            // d logits / d E_i = h, d logits / d h = E^T.
            for (i, &g) in probs.iter().enumerate() {
                if g != 0.0 {
                    grads.embeddings.row_mut(i).scaled_add(g, &h);
                }
            }
            grads.output_bias += &probs;
            d_hidden.row_mut(t).assign(&state.params.embeddings.t().dot(&probs));
        }
        state.params.backward(&cache, &d_hidden, &mut grads);
    }
    Ok((loss * norm, grads))
}

/// Applies updates with a per-row learning-rate multiplier on the embedding
/// rows from `new_row_start` onward.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Option<Params>,
    second: Option<Params>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            first: None,
            second: None,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64, a: f64, new_row_start: usize) {
        let width = params.embeddings.ncols();
        let split = new_row_start.min(params.embeddings.nrows()) * width;
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    let tiered = p.name == "embeddings";
                    for (i, (w, d)) in p.data.iter_mut().zip(g.data).enumerate() {
                        let rate = if tiered && i >= split { lr * a } else { lr };
                        *w -= rate * d;
                    }
                }
            }
            OptimizerKind::Adaptive => {
                let m = self.first.get_or_insert_with(|| params.zeros_like());
                let v = self.second.get_or_insert_with(|| params.zeros_like());
                let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                {
                    let tiered = p.name == "embeddings";
                    for i in 0..p.data.len() {
                        let gi = g.data[i];
                        m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * gi;
                        v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        let rate = if tiered && i >= split { lr * a } else { lr };
                        p.data[i] -= rate * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss (earliest on ties).
    pub selected_epoch: usize,
    pub initial_train_loss: f64,
    pub initial_valid_loss: f64,
    /// (step, learning rate) at logged steps.
    pub schedule: Vec<(usize, f64)>,
    pub skipped_batches: usize,
    pub config: MlmConfig,
}

impl TrainReport {
    pub fn valid_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.valid_loss).collect()
    }

    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

const SCHEDULE_LOG_EVERY: usize = 50;

fn batch_digest(batch: &MaskedBatch) -> String {
    let mut bytes = Vec::new();
    for seq in &batch.inputs {
        for id in seq {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn validation_loss(state: &MlmState, masked: &[MaskedBatch]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for batch in masked {
        match mlm_loss_value(state, batch) {
            Ok((loss, n)) => {
                sum += loss * n as f64;
                count += n;
            }
            Err(Error::NoLabels) => {}
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Err(Error::param("validation corpus produced no masked positions"));
    }
    Ok(sum / count as f64)
}

/// Runs continued pretraining and returns the state of the epoch with the
/// lowest validation loss together with the full trace.
pub fn train(
    state: &MlmState,
    train_corpus: &Corpus,
    valid_corpus: &Corpus,
    vocab: &Vocabulary,
    config: &MlmConfig,
) -> Result<(MlmState, TrainReport)> {
    config.validate()?;
    state.check_vocab(vocab)?;
    let train_ids = state.encode_corpus(vocab, train_corpus);
    let valid_ids = state.encode_corpus(vocab, valid_corpus);
    if train_ids.is_empty() || valid_ids.is_empty() {
        return Err(Error::param("training and validation corpora must be nonempty"));
    }
    let vocab_size = state.vocab_size();
    let valid_seed = derive_seed(config.seed, "mlm/valid-mask");
    let valid_batches: Vec<MaskedBatch> = valid_ids
        .chunks(config.batch_size)
        .enumerate()
        .map(|(i, chunk)| {
            mask_batch(
                chunk,
                config,
                valid_seed.wrapping_add(i as u64),
                state.mask_id,
                vocab_size,
            )
        })
        .collect();

    let mut current = state.clone();
    let mut optimizer = Optimizer::new(config.optimizer);
    let initial_valid_loss = validation_loss(&current, &valid_batches)?;
    let mut initial_train_loss = f64::NAN;
    let mut best: Option<(f64, usize, MlmState)> = None;
    let mut epochs = Vec::with_capacity(config.max_epochs);
    let mut schedule = Vec::new();
    let mut skipped = 0;
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_ids.len()).collect();
        let mut shuffler = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("mlm/epoch/{epoch}")));
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffler);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let seqs: Vec<Vec<u32>> = chunk.iter().map(|&i| train_ids[i].clone()).collect();
            let mask_seed = derive_seed(config.seed, &format!("mlm/mask/{}", step + 1));
            let batch = mask_batch(&seqs, config, mask_seed, current.mask_id, vocab_size);
            let (loss, grads) = match mlm_loss(&current, &batch) {
                Ok(v) => v,
                Err(Error::NoLabels) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            step += 1;
            let lr = lr_at(step, config);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    step,
                    lr,
                    batch_digest: batch_digest(&batch),
                });
            }
            if initial_train_loss.is_nan() {
                initial_train_loss = loss;
            }
            optimizer.step(&mut current.params, &grads, lr, config.a, current.new_row_start);
            if step == 1 || step.is_multiple_of(SCHEDULE_LOG_EVERY) {
                schedule.push((step, lr));
            }
            loss_sum += loss;
            batches += 1;
        }
        let valid_loss = validation_loss(&current, &valid_batches)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                lr: lr_at(step.max(1), config),
                batch_digest: "validation".into(),
            });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: if batches > 0 {
                loss_sum / batches as f64
            } else {
                f64::NAN
            },
            valid_loss,
            steps: step,
        });
        log::debug!(
            "epoch {epoch}: train {:.4} valid {valid_loss:.4}",
            loss_sum / batches.max(1) as f64
        );
        if best.as_ref().is_none_or(|(b, _, _)| valid_loss < *b) {
            best = Some((valid_loss, epoch, current.clone()));
        }
    }
    let (_, selected_epoch, best_state) = best.expect("max_epochs >= 1");
    Ok((
        best_state,
        TrainReport {
            epochs,
            selected_epoch,
            initial_train_loss,
            initial_valid_loss,
            schedule,
            skipped_batches: skipped,
            config: *config,
        },
    ))
}

#[cfg(test)]
mod tests;
