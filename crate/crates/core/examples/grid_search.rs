//! A 2 x 2 learning-rate / lambda grid on the synthetic corpus, ranked by
//! the best validation score of each cell.

use intent_slot::attention::AttentionVariant;
use intent_slot::data::{encode_all, LabelSchema};
use intent_slot::encoder::TokenVocab;
use intent_slot::evaluation::pct;
use intent_slot::model::{JointModel, ModelConfig};
use intent_slot::synthetic;
use intent_slot::training::{grid_search, GridResult, GridSpec, TrainConfig};
use intent_slot::Result;

pub fn run_example(epochs: usize) -> Result<Vec<GridResult>> {
    let corpus = synthetic::splits(2);
    let schema = LabelSchema::build(&[&corpus.train, &corpus.valid]);
    let vocab = TokenVocab::build(&corpus.train);
    let train_set = encode_all(&corpus.train, &vocab, &schema)?;
    let valid_set = encode_all(&corpus.valid, &vocab, &schema)?;

    let grid = GridSpec {
        learning_rates: vec![5e-4, 2e-3],
        lambdas: vec![0.25, 0.75],
    };
    let base = TrainConfig {
        batch_size: 10,
        epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    let factory = |cfg: &TrainConfig| {
        let mut mc = ModelConfig::new(vocab.len(), AttentionVariant::Full);
        mc.encoder.d_model = 16;
        mc.encoder.n_heads = 2;
        JointModel::new(mc, &schema, cfg.seed)
    };
    let results = grid_search(factory, &grid, &base, &train_set, &valid_set, &schema)?;
    println!("{:<10}{:<8}{:>6}{:>10}", "lr", "lambda", "epoch", "score");
    for r in &results {
        println!(
            "{:<10}{:<8}{:>6}{:>10}",
            r.learning_rate,
            r.lambda,
            r.best_epoch,
            pct(r.best_avg_score)
        );
    }
    Ok(results)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example(8).map(|_| ())
}
