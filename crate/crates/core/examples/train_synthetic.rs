//! End-to-end: generate the synthetic flight corpus, train the full model,
//! score it, save and reload the checkpoint, and tag a new sentence.

use intent_slot::archive::SavedModel;
use intent_slot::attention::AttentionVariant;
use intent_slot::data::{encode_all, LabelSchema};
use intent_slot::encoder::{tokenize_and_index, TokenVocab};
use intent_slot::model::{JointModel, ModelConfig};
use intent_slot::synthetic;
use intent_slot::training::{evaluate, ids_to_labels, train, TrainConfig};
use intent_slot::Result;

pub fn run_example(epochs: usize) -> Result<f64> {
    let corpus = synthetic::splits(3);
    let schema = LabelSchema::build(&[&corpus.train, &corpus.valid, &corpus.test]);
    let vocab = TokenVocab::build(&corpus.train);
    let train_set = encode_all(&corpus.train, &vocab, &schema)?;
    let valid_set = encode_all(&corpus.valid, &vocab, &schema)?;
    let test_set = encode_all(&corpus.test, &vocab, &schema)?;

    let mut config = ModelConfig::new(vocab.len(), AttentionVariant::Full);
    config.encoder.d_model = 32;
    let mut model = JointModel::new(config, &schema, 7)?;
    let train_config = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let outcome = train(&mut model, &train_set, &valid_set, &schema, &train_config)?;
    for r in &outcome.log {
        println!("{}", r.to_tsv());
    }
    println!("best epoch {}", outcome.best.epoch);
    let report = evaluate(&model, &test_set, &schema)?;
    print!("{}", report.to_text());

    let path = std::env::temp_dir().join(format!("intent-slot-example-{}.json", std::process::id()));
    SavedModel::new(model, vocab, schema).save(&path)?;
    let saved = SavedModel::load(&path)?;
    std::fs::remove_file(&path)?;

    let sentence = ["flights", "from", "hanoi", "to", "da", "lat", "on", "friday"];
    let ids = tokenize_and_index(&sentence, &saved.vocab)?;
    let p = saved.model.predict(&ids)?;
    let labels = ids_to_labels(&saved.schema, p.intent, &p.tags);
    println!(
        "{} -> {} | {}",
        sentence.join(" "),
        labels.intent,
        labels.tags.join(" ")
    );
    Ok(report.sentence_accuracy)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example(40).map(|_| ())
}
