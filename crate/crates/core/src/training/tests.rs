use super::*;
use crate::attention::AttentionVariant;
use crate::data::encode_all;
use crate::encoder::TokenVocab;
use crate::model::ModelConfig;
use crate::synthetic;

struct Fixture {
    schema: LabelSchema,
    vocab_size: usize,
    train: Vec<EncodedUtterance>,
    valid: Vec<EncodedUtterance>,
}

fn fixture(n: usize) -> Fixture {
    let train = synthetic::generate(n, 11);
    let valid = synthetic::generate(6, 12);
    let schema = LabelSchema::build(&[&train, &valid]);
    let vocab = TokenVocab::build(&train);
    Fixture {
        train: encode_all(&train, &vocab, &schema).unwrap(),
        valid: encode_all(&valid, &vocab, &schema).unwrap(),
        vocab_size: vocab.len(),
        schema,
    }
}

fn tiny_model(f: &Fixture, variant: AttentionVariant, seed: u64) -> JointModel {
    let mut cfg = ModelConfig::new(f.vocab_size, variant);
    cfg.encoder.d_model = 8;
    cfg.encoder.n_heads = 2;
    cfg.encoder.n_layers = 1;
    JointModel::new(cfg, &f.schema, seed).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-3,
        batch_size: 4,
        epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn adamw_first_step_moves_by_learning_rate() {
    let cfg = AdamWConfig {
        learning_rate: 0.1,
        betas: (0.9, 0.999),
        eps: 1e-8,
        weight_decay: 0.0,
    };
    let (mut p, mut m, mut v) = (vec![1.0], vec![0.0], vec![0.0]);
    adamw_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg).unwrap();
    assert!((p[0] - 0.9).abs() < 1e-6, "{}", p[0]);
}

#[test]
fn adamw_decay_without_gradient() {
    let cfg = AdamWConfig {
        learning_rate: 0.1,
        betas: (0.9, 0.999),
        eps: 1e-8,
        weight_decay: 0.1,
    };
    let (mut p, mut m, mut v) = (vec![1.0], vec![0.0], vec![0.0]);
    adamw_update(&mut p, &[0.0], &mut m, &mut v, 1, &cfg).unwrap();
    assert!((p[0] - 0.99).abs() < 1e-12);
}

#[test]
fn adamw_rejects_mismatched_state() {
    let cfg = AdamWConfig::from(&TrainConfig::default());
    let (mut p, mut m, mut v) = (vec![1.0, 2.0], vec![0.0], vec![0.0, 0.0]);
    assert!(matches!(
        adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &cfg),
        Err(Error::Contract(_))
    ));
}

#[test]
fn clipping_caps_global_norm() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::vector(vec![0.0, 0.0]));
    let b = store.add("b", Tensor::scalar(0.0));
    store.grad_mut(a).data_mut().copy_from_slice(&[3.0, 0.0]);
    store.grad_mut(b).data_mut()[0] = 4.0;
    let norm = clip_grad_norm(&mut store, 1.0);
    assert_eq!(norm, 5.0);
    assert!((store.grad(a).data()[0] - 0.6).abs() < 1e-9);
    assert!((store.grad(b).data()[0] - 0.8).abs() < 1e-9);
    // already within the bound: untouched
    let before = store.grad(a).clone();
    clip_grad_norm(&mut store, 10.0);
    assert_eq!(store.grad(a), &before);
}

#[test]
fn joint_loss_mixes_and_validates_lambda() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(2.0));
    let b = g.constant(Tensor::scalar(4.0));
    let l = joint_loss(&mut g, a, b, 0.25).unwrap();
    assert!((g.value(l).item() - 3.5).abs() < 1e-12);
    for bad in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(matches!(joint_loss(&mut g, a, b, bad), Err(Error::Config(_))));
    }
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = TrainConfig {
        lambda: 1.0,
        ..TrainConfig::default()
    };
    let err = bad.validate().unwrap_err().to_string();
    assert!(err.contains("lambda must be in (0,1)"), "{err}");
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn every_parameter_receives_gradient() {
    let f = fixture(6);
    for variant in AttentionVariant::ALL {
        let model = tiny_model(&f, variant, 1);
        let batch = &make_batches(&f.train, 6, 0)[0];
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = batch_loss(&model, &mut g, batch, 0.5, &mut rng).unwrap();
        g.backward(loss).unwrap();
        let mut store = model.store().clone();
        store.zero_grads();
        store.accumulate_grads(&g);
        for (id, name, _) in store.iter() {
            // transitions between tags never adjacent in this batch can stay
            // at zero, the rest of every tensor must move
            let nonzero = store.grad(id).data().iter().any(|&x| x != 0.0);
            assert!(nonzero, "{variant}: no gradient reached {name}");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let f = fixture(10);
    let cfg = quick_config();
    let run = || {
        let mut model = tiny_model(&f, AttentionVariant::Full, 3);
        let out = train(&mut model, &f.train, &f.valid, &f.schema, &cfg).unwrap();
        (out.log, model.store().snapshot())
    };
    let (log1, w1) = run();
    let (log2, w2) = run();
    assert_eq!(log1, log2);
    for (a, b) in w1.iter().zip(&w2) {
        let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn training_reduces_loss_and_restores_best() {
    let f = fixture(12);
    let cfg = TrainConfig {
        epochs: 8,
        ..quick_config()
    };
    let mut model = tiny_model(&f, AttentionVariant::Full, 4);
    let mut seen = Vec::new();
    let out = train_with(&mut model, &f.train, &f.valid, &f.schema, &cfg, |r| seen.push(r.epoch)).unwrap();
    assert_eq!(seen, (0..8).collect::<Vec<_>>());
    let first = out.log.first().unwrap().train_loss;
    let last = out.log.last().unwrap().train_loss;
    assert!(last < first, "loss {first} -> {last}");

    let max = out.log.iter().map(|r| r.avg_score).fold(f64::MIN, f64::max);
    let earliest = out.log.iter().position(|r| r.avg_score == max).unwrap();
    assert_eq!(out.best.epoch, earliest);

    let restored = evaluate(&model, &f.valid, &f.schema).unwrap();
    assert_eq!(restored.avg_score(), out.best.avg_score);
}

#[test]
fn empty_training_set_is_rejected() {
    let f = fixture(4);
    let mut model = tiny_model(&f, AttentionVariant::Baseline, 0);
    let err = train(&mut model, &[], &f.valid, &f.schema, &quick_config()).unwrap_err();
    assert!(matches!(err, Error::Data { .. }));
}

#[test]
fn default_grid_has_95_cells() {
    let grid = GridSpec::default();
    assert_eq!(grid.cells().len(), 95);
    assert!((grid.lambdas[0] - 0.05).abs() < 1e-12);
    assert!((grid.lambdas[18] - 0.95).abs() < 1e-12);
    assert!(grid.validate().is_ok());
    let bad = GridSpec {
        learning_rates: vec![1e-5],
        lambdas: vec![0.5, 1.0],
    };
    assert!(bad.validate().is_err());
}

#[test]
fn grid_search_ranks_descending() {
    let f = fixture(6);
    let grid = GridSpec {
        learning_rates: vec![1e-3, 5e-3],
        lambdas: vec![0.3, 0.7],
    };
    let base = TrainConfig {
        epochs: 2,
        ..quick_config()
    };
    let results = grid_search(
        |_| Ok(tiny_model(&f, AttentionVariant::Full, 2)),
        &grid,
        &base,
        &f.train,
        &f.valid,
        &f.schema,
    )
    .unwrap();
    assert_eq!(results.len(), 4);
    assert!(results.windows(2).all(|w| w[0].best_avg_score >= w[1].best_avg_score));
}

#[test]
fn seed_summary_uses_sample_std() {
    let m = |x: f64| MetricTriple {
        intent_accuracy: x,
        slot_f1: x / 2.0,
        sentence_accuracy: 0.5,
    };
    let s = summarize(vec![(1, m(0.9)), (2, m(0.8)), (3, m(0.7))]).unwrap();
    assert!((s.mean.intent_accuracy - 0.8).abs() < 1e-12);
    assert!((s.std.intent_accuracy - 0.1).abs() < 1e-12);
    assert!((s.std.slot_f1 - 0.05).abs() < 1e-12);
    assert_eq!(s.std.sentence_accuracy, 0.0);
    assert!(summarize(vec![(1, m(0.9))]).is_err());
}

#[test]
fn adamw_leaves_params_without_gradient_or_decay() {
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::from(&TrainConfig::default())
    };
    let (mut p, mut m, mut v) = (vec![0.3, -2.0], vec![0.0; 2], vec![0.0; 2]);
    adamw_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &cfg).unwrap();
    assert_eq!(p, vec![0.3, -2.0]);
}

#[test]
fn joint_loss_gradient_splits_by_lambda() {
    // L = λ·a² + (1−λ)·b³ at a = 1.5, b = −0.7
    let lambda = 0.3;
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::scalar(1.5));
    let b = store.add("b", Tensor::scalar(-0.7));
    let f = |g: &mut Graph, s: &ParamStore| -> Result<Var> {
        let va = g.param(s, a);
        let vb = g.param(s, b);
        let a2 = g.mul(va, va)?;
        let b2 = g.mul(vb, vb)?;
        let b3 = g.mul(b2, vb)?;
        joint_loss(g, a2, b3, lambda)
    };
    let mut g = Graph::new();
    let loss = f(&mut g, &store).unwrap();
    g.backward(loss).unwrap();
    store.zero_grads();
    store.accumulate_grads(&g);
    assert!((store.grad(a).item() - lambda * 3.0).abs() < 1e-12);
    assert!((store.grad(b).item() - (1.0 - lambda) * 3.0 * 0.49).abs() < 1e-12);
    let report = crate::autodiff::grad_check(&mut store, 1e-5, f).unwrap();
    assert!(report.max_rel_error < 1e-6, "{}", report.max_rel_error);
}

#[test]
fn single_cell_grid_matches_train() {
    let f = fixture(6);
    let base = TrainConfig {
        epochs: 2,
        ..quick_config()
    };
    let grid = GridSpec {
        learning_rates: vec![base.learning_rate],
        lambdas: vec![base.lambda],
    };
    let results = grid_search(
        |_| Ok(tiny_model(&f, AttentionVariant::Full, 2)),
        &grid,
        &base,
        &f.train,
        &f.valid,
        &f.schema,
    )
    .unwrap();
    let mut model = tiny_model(&f, AttentionVariant::Full, 2);
    let direct = train(&mut model, &f.train, &f.valid, &f.schema, &base).unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0].best_avg_score, direct.best.avg_score);
    assert_eq!(results[0].best_epoch, direct.best.epoch);
}

#[test]
fn seed_summary_arithmetic() {
    let m = |x: f64| MetricTriple {
        intent_accuracy: x,
        slot_f1: x,
        sentence_accuracy: x,
    };
    let s = summarize(vec![(1, m(0.9)), (2, m(1.0))]).unwrap();
    assert!((s.mean.intent_accuracy - 0.95).abs() < 1e-12);
    let same = summarize(vec![(4, m(0.7)), (4, m(0.7)), (4, m(0.7))]).unwrap();
    assert_eq!(same.std, MetricTriple::default());
    let runs = multi_seed(&[1, 2, 3, 4, 5], |seed| {
        Ok(EvalReport {
            utterances: 1,
            intent_accuracy: seed as f64 / 10.0,
            slot_precision: 0.0,
            slot_recall: 0.0,
            slot_f1: 0.0,
            sentence_accuracy: 0.0,
            error_counts: Default::default(),
        })
    })
    .unwrap();
    assert_eq!(runs.rows.len(), 5);
    assert!((runs.mean.intent_accuracy - 0.3).abs() < 1e-12);
    assert!(multi_seed(&[1], |_| unreachable!()).is_err());
}
