//! Runs every cargo example through its `run_example` entry point.

#[path = "../examples/ablation.rs"]
mod ablation;
#[path = "../examples/autodiff_gradcheck.rs"]
mod autodiff_gradcheck;
#[path = "../examples/crf_decode.rs"]
mod crf_decode;
#[path = "../examples/evaluate_errors.rs"]
mod evaluate_errors;
#[path = "../examples/grid_search.rs"]
mod grid_search;
#[path = "../examples/intent_slot_attention.rs"]
mod intent_slot_attention;
#[path = "../examples/load_corpus.rs"]
mod load_corpus;
#[path = "../examples/train_synthetic.rs"]
mod train_synthetic;

use intent_slot::attention::AttentionVariant;

#[test]
fn autodiff_example_gradients_agree() {
    assert!(autodiff_gradcheck::run_example().unwrap() < 1e-6);
}

#[test]
fn crf_example_repairs_orphan_inside_tag() {
    assert_eq!(crf_decode::run_example().unwrap(), vec![0, 1, 2]);
}

#[test]
fn attention_example_weights_are_a_distribution() {
    let alpha = intent_slot_attention::run_example().unwrap();
    assert_eq!(alpha.len(), 3);
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn evaluation_example_scores() {
    let r = evaluate_errors::run_example().unwrap();
    assert!((r.intent_accuracy - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.slot_f1, 0.75);
    assert_eq!(r.error_counts.wi, 1);
    assert_eq!(r.error_counts.wb, 1);
}

#[test]
fn corpus_example_round_trips() {
    let c = load_corpus::run_example().unwrap();
    assert_eq!((c.train.len(), c.valid.len(), c.test.len()), (50, 20, 20));
}

#[test]
fn training_example_learns() {
    assert!(train_synthetic::run_example(20).unwrap() > 0.5);
}

#[test]
fn ablation_example_counts_parameters() {
    let counts = ablation::run_example(1).unwrap();
    let get = |v| counts.iter().find(|(w, _)| *w == v).unwrap().1;
    assert!(get(AttentionVariant::Baseline) < get(AttentionVariant::ConcatCls));
    assert!(get(AttentionVariant::ConcatCls) < get(AttentionVariant::Full));
}

#[test]
fn grid_example_is_ranked() {
    let r = grid_search::run_example(2).unwrap();
    assert_eq!(r.len(), 4);
    assert!(r.windows(2).all(|w| w[0].best_avg_score >= w[1].best_avg_score));
}
