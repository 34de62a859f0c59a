use super::*;
use crate::augment::{apply_augmentation, RescuedPiece};

fn tiny_vocab(n: usize) -> Vocabulary {
    Vocabulary::from_pieces((0..n).map(|i| format!("w{i}"))).unwrap()
}

fn tiny_state(vocab_pieces: usize, arch: Architecture, seed: u64) -> (MlmState, Vocabulary) {
    MlmState::fresh(&tiny_vocab(vocab_pieces), arch, seed).unwrap()
}

fn small_arch() -> Architecture {
    Architecture {
        width: 8,
        ffn_width: 12,
        blocks: 2,
        max_len: 8,
    }
}

fn plan_of(pieces: &[&str]) -> AugmentationPlan {
    let mut plan = AugmentationPlan::empty(1.0);
    plan.n = pieces.len();
    plan.selected = pieces
        .iter()
        .map(|p| RescuedPiece {
            piece: p.to_string(),
            rescue_count: 1,
        })
        .collect();
    plan
}

fn fixed_batch(vocab_size: usize, mask_id: u32) -> MaskedBatch {
    let seqs = vec![vec![1, 4, 7, 2, 9], vec![3, 3, 5], vec![8, 6, 1, 1, 2, 4, 0]];
    let config = MlmConfig {
        mask_probability: 0.5,
        ..MlmConfig::default()
    };
    let mut b = mask_batch(&seqs, &config, 11, mask_id, vocab_size);
    // Guarantee at least one label per sequence.
    for (lab, seq) in b.labels.iter_mut().zip(&seqs) {
        lab[0] = Some(seq[0]);
    }
    b
}

#[test]
fn reserved_pieces_are_appended_once() {
    let v = tiny_vocab(3);
    let r = with_reserved(&v).unwrap();
    assert_eq!(&r.entries()[v.len()..], [MASK_PIECE, PAD_PIECE]);
    assert_eq!(with_reserved(&r).unwrap(), r);
}

#[test]
fn lr_schedule_points() {
    let c = MlmConfig {
        peak_lr: 0.4,
        warmup_steps: 1000,
        ..MlmConfig::default()
    };
    assert_eq!(lr_at(500, &c), 0.2);
    assert_eq!(lr_at(1000, &c), 0.4);
    assert_eq!(lr_at(5000, &c), 0.4);
    assert_eq!(lr_at(1, &c), 0.4 * (1.0 / 1000.0));
}

#[test]
fn config_validation() {
    assert!(MlmConfig::default().validate().is_ok());
    let bad_split = MlmConfig {
        mask_split: (0.8, 0.1, 0.2),
        ..MlmConfig::default()
    };
    assert!(bad_split.validate().is_err());
    let bad_a = MlmConfig {
        a: -1.0,
        ..MlmConfig::default()
    };
    assert!(bad_a.validate().is_err());
}

#[test]
fn zero_mask_probability_changes_nothing() {
    let seqs = vec![vec![1, 2, 3], vec![4]];
    let c = MlmConfig {
        mask_probability: 0.0,
        ..MlmConfig::default()
    };
    let b = mask_batch(&seqs, &c, 5, 99, 100);
    assert_eq!(b.inputs, seqs);
    assert_eq!(b.labelled(), 0);
}

#[test]
fn masking_is_seeded() {
    let seqs = vec![vec![1, 2, 3, 4, 5, 6, 7, 8]; 10];
    let c = MlmConfig::default();
    assert_eq!(mask_batch(&seqs, &c, 42, 0, 50), mask_batch(&seqs, &c, 42, 0, 50));
    assert_ne!(mask_batch(&seqs, &c, 42, 0, 50), mask_batch(&seqs, &c, 43, 0, 50));
}

#[test]
fn uniform_logits_give_log_vocab_loss() {
    let (mut state, _) = tiny_state(27, small_arch(), 1);
    state.params.embeddings.fill(0.0);
    state.params.output_bias.fill(0.0);
    let batch = fixed_batch(state.vocab_size(), state.mask_id);
    let (loss, _) = mlm_loss(&state, &batch).unwrap();
    assert!((loss - (state.vocab_size() as f64).ln()).abs() < 1e-12);
}

#[test]
fn single_label_loss_is_its_cross_entropy() {
    let (state, _) = tiny_state(27, small_arch(), 2);
    let batch = MaskedBatch {
        inputs: vec![vec![3, state.mask_id, 5]],
        labels: vec![vec![None, Some(7), None]],
    };
    let (loss, _) = mlm_loss(&state, &batch).unwrap();
    let cache = state.forward(&batch.inputs[0]);
    let logits = state.params.logits(cache.hidden().row(1));
    let lse = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
    assert!((loss - (lse - logits[7])).abs() < 1e-12);
}

#[test]
fn no_labels_is_signalled() {
    let (state, _) = tiny_state(5, small_arch(), 3);
    let batch = MaskedBatch {
        inputs: vec![vec![1, 2]],
        labels: vec![vec![None, None]],
    };
    assert!(matches!(mlm_loss(&state, &batch), Err(Error::NoLabels)));
}

#[test]
fn initial_loss_near_log_vocab() {
    let (state, _) = tiny_state(200, Architecture::default(), 4);
    let seqs: Vec<Vec<u32>> = (0..20)
        .map(|i| (0..10).map(|j| (i * 7 + j * 3) % 200).collect())
        .collect();
    let batch = mask_batch(&seqs, &MlmConfig::default(), 9, state.mask_id, state.vocab_size());
    let (loss, _) = mlm_loss(&state, &batch).unwrap();
    let ln_v = (state.vocab_size() as f64).ln();
    assert!((loss - ln_v).abs() / ln_v < 0.1, "loss {loss} vs ln|V| {ln_v}");
}

#[test]
fn gradients_match_finite_differences() {
    let (mut state, _) = tiny_state(27, small_arch(), 5);
    assert_eq!(state.vocab_size(), 30);
    // Larger embeddings give attention non-negligible gradients.
    state.params.embeddings *= 25.0;
    state.params.positions *= 25.0;
    let batch = fixed_batch(state.vocab_size(), state.mask_id);
    let (_, grads) = mlm_loss(&state, &batch).unwrap();
    let h = 1e-5;
    let mut probe = state.clone();
    let names: Vec<String> = grads.tensors().iter().map(|t| t.name.clone()).collect();
    for (ti, name) in names.iter().enumerate() {
        let analytic = grads.tensors()[ti].data.to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.params.tensors()[ti].data[i];
            probe.params.tensors_mut()[ti].data[i] = orig + h;
            let up = mlm_loss_value(&probe, &batch).unwrap().0;
            probe.params.tensors_mut()[ti].data[i] = orig - h;
            let down = mlm_loss_value(&probe, &batch).unwrap().0;
            probe.params.tensors_mut()[ti].data[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 =
            analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let a_norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        if a_norm < 1e-12 {
            // The key bias gradient is identically zero (softmax shift
            // invariance); only the difference quotient's roundoff remains.
            assert!(diff < 1e-8, "{name}: expected zero gradient, off by {diff}");
            continue;
        }
        let rel = diff / scale;
        assert!(rel < 1e-4, "{name}: relative error {rel}");
    }
}

#[test]
fn extension_grows_rows_and_uses_mean() {
    let (state, vocab) = tiny_state(10, small_arch(), 6);
    let plan = plan_of(&["x", "y", "z"]);
    let (ext, _) = apply_augmentation(&vocab, &plan).unwrap();
    let grown = init_extended(&state, &ext, &plan, InitPolicy::MeanPlusNoise, 0.0, 1).unwrap();
    assert_eq!(grown.vocab_size(), state.vocab_size() + 3);
    assert_eq!(grown.new_row_start, state.vocab_size());
    let mean = state.params.embeddings.mean_axis(ndarray::Axis(0)).unwrap();
    for r in state.vocab_size()..grown.vocab_size() {
        assert_eq!(grown.params.embeddings.row(r), mean);
    }
    let again = init_extended(&state, &ext, &plan, InitPolicy::MeanPlusNoise, 0.3, 1).unwrap();
    let twice = init_extended(&state, &ext, &plan, InitPolicy::MeanPlusNoise, 0.3, 1).unwrap();
    assert_eq!(again.to_bytes(), twice.to_bytes());
    grown.check_vocab(&ext).unwrap();
}

#[test]
fn extension_rejects_mismatch() {
    let (state, vocab) = tiny_state(10, small_arch(), 6);
    let plan = plan_of(&["x", "y"]);
    let (ext, _) = apply_augmentation(&vocab, &plan_of(&["x"])).unwrap();
    assert!(init_extended(&state, &ext, &plan, InitPolicy::RandomNormal, 0.1, 0).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (state, vocab) = tiny_state(10, small_arch(), 7);
    let plan = plan_of(&["x"]);
    let (ext, _) = apply_augmentation(&vocab, &plan).unwrap();
    let grown = init_extended(&state, &ext, &plan, InitPolicy::RandomNormal, 0.1, 3).unwrap();
    let bytes = grown.to_bytes();
    let back = MlmState::from_bytes(&bytes).unwrap();
    assert_eq!(back, grown);
    assert_eq!(back.to_bytes(), bytes);
    assert!(MlmState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn sgd_multiplier_scales_new_rows_only() {
    let (state, vocab) = tiny_state(12, small_arch(), 8);
    let plan = plan_of(&["p", "q"]);
    let (ext, _) = apply_augmentation(&vocab, &plan).unwrap();
    let grown = init_extended(&state, &ext, &plan, InitPolicy::MeanPlusNoise, 0.05, 2).unwrap();
    let batch = fixed_batch(grown.vocab_size(), grown.mask_id);
    let (_, grads) = mlm_loss(&grown, &batch).unwrap();
    let run = |a: f64| {
        let mut s = grown.clone();
        Optimizer::new(OptimizerKind::Sgd).step(&mut s.params, &grads, 0.05, a, s.new_row_start);
        s
    };
    let one = run(1.0);
    let three = run(3.0);
    let start = grown.new_row_start;
    for r in start..grown.vocab_size() {
        for c in 0..grown.width() {
            let d1 = one.params.embeddings[[r, c]] - grown.params.embeddings[[r, c]];
            let d3 = three.params.embeddings[[r, c]] - grown.params.embeddings[[r, c]];
            assert!((d3 - 3.0 * d1).abs() <= 1e-12);
        }
    }
    assert_eq!(
        one.params.embedding_rows(0).slice(ndarray::s![..start, ..]),
        three.params.embedding_rows(0).slice(ndarray::s![..start, ..])
    );
    assert_eq!(one.params.positions, three.params.positions);
    assert_eq!(one.params.blocks, three.params.blocks);
}

fn toy_corpus(n: usize) -> Corpus {
    let words = ["ka", "lo", "mi", "nu", "pe"];
    let lines: Vec<String> = (0..n)
        .map(|i| {
            let a = words[i % 5];
            let b = words[(i / 5) % 5];
            format!("{a} {b} {a} {b}")
        })
        .collect();
    Corpus::from_sentences("toy", &lines)
}

#[test]
fn multiplier_irrelevant_without_new_rows() {
    let corpus = toy_corpus(40);
    let vocab = crate::wordpiece::train_vocabulary(&corpus, 40, 1).unwrap();
    let (state, vocab) = MlmState::fresh(&vocab, small_arch(), 9).unwrap();
    let cfg = |a| MlmConfig {
        max_epochs: 2,
        warmup_steps: 5,
        a,
        seed: 4,
        ..MlmConfig::default()
    };
    let (s1, r1) = train(&state, &corpus, &corpus, &vocab, &cfg(1.0)).unwrap();
    let (s5, r5) = train(&state, &corpus, &corpus, &vocab, &cfg(5.0)).unwrap();
    assert_eq!(s1, s5);
    assert_eq!(r1.epochs, r5.epochs);
}

#[test]
fn training_reduces_loss_and_selects_argmin() {
    let corpus = toy_corpus(200);
    let vocab = crate::wordpiece::train_vocabulary(&corpus, 60, 1).unwrap();
    let (state, vocab) = MlmState::fresh(&vocab, Architecture::default(), 10).unwrap();
    let cfg = MlmConfig {
        max_epochs: 20,
        warmup_steps: 20,
        peak_lr: 0.5,
        mask_probability: 0.25,
        seed: 1,
        ..MlmConfig::default()
    };
    let (best, report) = train(&state, &corpus, &corpus, &vocab, &cfg).unwrap();
    assert!(
        report.final_train_loss() < 0.5 * report.initial_train_loss,
        "{} vs {}",
        report.final_train_loss(),
        report.initial_train_loss
    );
    let losses = report.valid_losses();
    let argmin = losses
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc })
        .0;
    assert_eq!(report.selected_epoch, argmin + 1);
    best.check_vocab(&vocab).unwrap();
}

#[test]
fn training_is_deterministic() {
    let corpus = toy_corpus(30);
    let vocab = crate::wordpiece::train_vocabulary(&corpus, 30, 1).unwrap();
    let (state, vocab) = MlmState::fresh(&vocab, small_arch(), 11).unwrap();
    let cfg = MlmConfig {
        max_epochs: 3,
        warmup_steps: 3,
        seed: 8,
        ..MlmConfig::default()
    };
    let (a, ra) = train(&state, &corpus, &corpus, &vocab, &cfg).unwrap();
    let (b, rb) = train(&state, &corpus, &corpus, &vocab, &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
}

#[test]
fn adaptive_optimizer_trains() {
    let corpus = toy_corpus(60);
    let vocab = crate::wordpiece::train_vocabulary(&corpus, 40, 1).unwrap();
    let (state, vocab) = MlmState::fresh(&vocab, small_arch(), 12).unwrap();
    let cfg = MlmConfig {
        max_epochs: 5,
        warmup_steps: 5,
        peak_lr: 0.01,
        optimizer: OptimizerKind::Adaptive,
        ..MlmConfig::default()
    };
    let (_, report) = train(&state, &corpus, &corpus, &vocab, &cfg).unwrap();
    assert!(report.epochs.iter().all(|e| e.train_loss.is_finite()));
}

#[test]
fn training_rejects_foreign_vocabulary() {
    let corpus = toy_corpus(10);
    let vocab = crate::wordpiece::train_vocabulary(&corpus, 30, 1).unwrap();
    let (state, _) = MlmState::fresh(&vocab, small_arch(), 13).unwrap();
    assert!(train(&state, &corpus, &corpus, &vocab, &MlmConfig::default()).is_err());
}
