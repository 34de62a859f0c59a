//! Part-of-speech probe: a linear layer over encoder states, trained with
//! softmax cross-entropy, optionally finetuning the encoder underneath.

mod compare;
mod conllu;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::{MlmState, Optimizer, OptimizerKind};
use crate::wordpiece::Vocabulary;

pub use compare::{
    default_pairs, run_comparison, standard_configs, ComparisonInputs, ComparisonSettings, ComparisonTable,
    ConfigSummary, ExperimentConfig, PairDelta, RunResult,
};
pub use conllu::{load_conllu, parse_conllu, TagColumn, TagDataset, TaggedSentence};

/// How a multi-piece word is summarised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    FirstPiece,
    MeanPieces,
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_piece" | "first" => Ok(Pooling::FirstPiece),
            "mean_pieces" | "mean" => Ok(Pooling::MeanPieces),
            _ => Err(Error::param(format!(
                "unknown pooling {s:?} (expected first_piece or mean_pieces)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub finetune_encoder: bool,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            epochs: 10,
            lr: 0.05,
            finetune_encoder: true,
            seed: 0,
            pooling: Pooling::FirstPiece,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerParams {
    /// width x |tagset|
    pub projection: Array2<f64>,
    pub bias: Array1<f64>,
    pub tagset: Vec<String>,
    pub pooling: Pooling,
}

impl TaggerParams {
    pub fn new(width: usize, tagset: Vec<String>, pooling: Pooling, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("finite");
        let k = tagset.len();
        TaggerParams {
            projection: Array2::from_shape_simple_fn((width, k), || dist.sample(&mut rng)),
            bias: Array1::zeros(k),
            tagset,
            pooling,
        }
    }

    fn tag_index(&self, tag: &str) -> Option<usize> {
        self.tagset.iter().position(|t| t == tag)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTagger {
    pub params: TaggerParams,
    /// The finetuned encoder, when finetuning was on.
    pub encoder: Option<MlmState>,
}

/// A window of pieces and, for each word in it, its piece span.
struct Window {
    ids: Vec<u32>,
    spans: Vec<(usize, usize)>,
    first_word: usize,
}

fn windows(encoder: &MlmState, vocab: &Vocabulary, tokens: &[String]) -> Result<Vec<Window>> {
    let max_len = encoder.arch.max_len;
    let mut out = Vec::new();
    let mut cur = Window {
        ids: Vec::new(),
        spans: Vec::new(),
        first_word: 0,
    };
    let mut pieces = Vec::new();
    for (wi, word) in tokens.iter().enumerate() {
        pieces.clear();
        vocab.encode_word_into(word, &mut pieces);
        if pieces.is_empty() {
            return Err(Error::Internal(format!("word {word:?} produced no pieces")));
        }
        pieces.truncate(max_len);
        if cur.ids.len() + pieces.len() > max_len && !cur.ids.is_empty() {
            let next = Window {
                ids: Vec::new(),
                spans: Vec::new(),
                first_word: wi,
            };
            out.push(std::mem::replace(&mut cur, next));
        }
        cur.spans.push((cur.ids.len(), pieces.len()));
        cur.ids.extend_from_slice(&pieces);
    }
    if !cur.ids.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

fn word_vector(hidden: &Array2<f64>, span: (usize, usize), pooling: Pooling) -> Array1<f64> {
    match pooling {
        Pooling::FirstPiece => hidden.row(span.0).to_owned(),
        Pooling::MeanPieces => {
            let rows = hidden.slice(ndarray::s![span.0..span.0 + span.1, ..]);
            rows.mean_axis(ndarray::Axis(0)).expect("nonempty span")
        }
    }
}

fn argmax(scores: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Tag scores for every word of a sentence.
pub fn sentence_logits(
    encoder: &MlmState,
    vocab: &Vocabulary,
    params: &TaggerParams,
    tokens: &[String],
) -> Result<Vec<Array1<f64>>> {
    let mut out = Vec::with_capacity(tokens.len());
    for w in windows(encoder, vocab, tokens)? {
        let cache = encoder.forward(&w.ids);
        for &span in &w.spans {
            let rep = word_vector(cache.hidden(), span, params.pooling);
            out.push(rep.dot(&params.projection) + &params.bias);
        }
    }
    Ok(out)
}

/// Predicted tag indices (ties go to the lowest index).
pub fn predict(encoder: &MlmState, vocab: &Vocabulary, params: &TaggerParams, tokens: &[String]) -> Result<Vec<usize>> {
    Ok(sentence_logits(encoder, vocab, params, tokens)?
        .iter()
        .map(argmax)
        .collect())
}

pub fn train_tagger(
    encoder: &MlmState,
    vocab: &Vocabulary,
    data: &TagDataset,
    config: &TaggerConfig,
) -> Result<TrainedTagger> {
    if data.tagset.is_empty() {
        return Err(Error::param("tagset is empty"));
    }
    if !(config.lr > 0.0) {
        return Err(Error::param("tagger learning rate must be positive"));
    }
    encoder.check_vocab(vocab)?;
    let mut params = TaggerParams::new(encoder.width(), data.tagset.clone(), config.pooling, config.seed);
    let mut enc = encoder.clone();
    let mut enc_opt = Optimizer::new(OptimizerKind::Sgd);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_7a66);
    let mut order: Vec<usize> = (0..data.sentences.len()).collect();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &si in &order {
            let sent = &data.sentences[si];
            if sent.tokens.is_empty() {
                continue;
            }
            let gold: Vec<usize> = sent
                .tags
                .iter()
                .map(|t| params.tag_index(t).expect("tag in tagset"))
                .collect();
            let norm = 1.0 / sent.tokens.len() as f64;
            let mut d_proj = Array2::<f64>::zeros(params.projection.raw_dim());
            let mut d_bias = Array1::<f64>::zeros(params.bias.len());
            let mut enc_grads = config.finetune_encoder.then(|| enc.params.zeros_like());
            for w in windows(&enc, vocab, &sent.tokens)? {
                let cache = enc.forward(&w.ids);
                let mut d_hidden = Array2::<f64>::zeros(cache.hidden().raw_dim());
                for (k, &span) in w.spans.iter().enumerate() {
                    let rep = word_vector(cache.hidden(), span, params.pooling);
                    let logits = rep.dot(&params.projection) + &params.bias;
                    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut probs = logits.mapv(|x| (x - max).exp());
                    probs /= probs.sum();
                    probs[gold[w.first_word + k]] -= 1.0;
                    probs *= norm;
                    for (r, &x) in rep.iter().enumerate() {
                        d_proj.row_mut(r).scaled_add(x, &probs);
                    }
                    d_bias += &probs;
                    if enc_grads.is_some() {
                        let d_rep = params.projection.dot(&probs);
                        match params.pooling {
                            Pooling::FirstPiece => {
                                let mut row = d_hidden.row_mut(span.0);
                                row += &d_rep;
                            }
                            Pooling::MeanPieces => {
                                let share = 1.0 / span.1 as f64;
                                for r in span.0..span.0 + span.1 {
                                    d_hidden.row_mut(r).scaled_add(share, &d_rep);
                                }
                            }
                        }
                    }
                }
                if let Some(g) = enc_grads.as_mut() {
                    enc.params.backward(&cache, &d_hidden, g);
                }
            }
            params.projection.scaled_add(-config.lr, &d_proj);
            params.bias.scaled_add(-config.lr, &d_bias);
            if let Some(g) = enc_grads {
                let start = enc.new_row_start;
                enc_opt.step(&mut enc.params, &g, config.lr, 1.0, start);
            }
        }
    }
    Ok(TrainedTagger {
        params,
        encoder: config.finetune_encoder.then_some(enc),
    })
}

/// Token-level accuracy in [0, 1]. Gold tags outside the tagset count as
/// errors.
pub fn evaluate_accuracy(
    encoder: &MlmState,
    vocab: &Vocabulary,
    params: &TaggerParams,
    data: &TagDataset,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for sent in &data.sentences {
        let pred = predict(encoder, vocab, params, &sent.tokens)?;
        for (p, gold) in pred.iter().zip(&sent.tags) {
            total += 1;
            if params.tagset[*p] == *gold {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::param("cannot evaluate on an empty dataset"));
    }
    Ok(correct as f64 / total as f64)
}
