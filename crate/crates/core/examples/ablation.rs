//! Trains every attention variant briefly on the synthetic corpus and
//! reports parameter counts and validation scores side by side.

use intent_slot::attention::AttentionVariant;
use intent_slot::data::{encode_all, LabelSchema};
use intent_slot::encoder::TokenVocab;
use intent_slot::evaluation::pct;
use intent_slot::model::{JointModel, ModelConfig};
use intent_slot::synthetic;
use intent_slot::training::{train, TrainConfig};
use intent_slot::Result;

pub fn run_example(epochs: usize) -> Result<Vec<(AttentionVariant, usize)>> {
    let corpus = synthetic::splits(5);
    let schema = LabelSchema::build(&[&corpus.train, &corpus.valid]);
    let vocab = TokenVocab::build(&corpus.train);
    let train_set = encode_all(&corpus.train, &vocab, &schema)?;
    let valid_set = encode_all(&corpus.valid, &vocab, &schema)?;
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 10,
        epochs,
        ..TrainConfig::default()
    };

    println!("{:<12}{:>10}{:>12}{:>10}", "variant", "params", "intent acc", "slot F1");
    let mut counts = Vec::new();
    for variant in AttentionVariant::ALL {
        let mut mc = ModelConfig::new(vocab.len(), variant);
        mc.encoder.d_model = 16;
        mc.encoder.n_heads = 2;
        let mut model = JointModel::new(mc, &schema, 1)?;
        let params = model.store().num_scalars();
        let best = train(&mut model, &train_set, &valid_set, &schema, &cfg)?.best;
        println!(
            "{:<12}{params:>10}{:>12}{:>10}",
            variant.as_str(),
            pct(best.valid_intent_accuracy),
            pct(best.valid_slot_f1)
        );
        counts.push((variant, params));
    }
    Ok(counts)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example(10).map(|_| ())
}
