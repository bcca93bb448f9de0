//! Writes a corpus in the `seq.in` / `seq.out` / `label` layout, loads it
//! back and prints split sizes, label inventory and vocabulary size.

use intent_slot::data::{validate_bio, CorpusSplits};
use intent_slot::encoder::TokenVocab;
use intent_slot::synthetic;
use intent_slot::Result;

pub fn run_example() -> Result<CorpusSplits> {
    let dir = std::env::temp_dir().join(format!("intent-slot-corpus-{}", std::process::id()));
    synthetic::splits(1).write(&dir)?;
    let corpus = CorpusSplits::load(&dir)?;
    std::fs::remove_dir_all(&dir)?;

    for (name, split) in [("train", &corpus.train), ("dev", &corpus.valid), ("test", &corpus.test)] {
        let stats = CorpusSplits::stats(split);
        println!("{name:<6}{:>5} utterances {:>5} slots", stats.utterances, stats.slots);
    }
    let schema = corpus.schema();
    println!("{} intents: {:?}", schema.num_intents(), schema.intents());
    println!(
        "{} slot types, {} BIO tags",
        schema.slot_types().len(),
        schema.num_tags()
    );
    println!("vocabulary: {} entries", TokenVocab::build(&corpus.train).len());
    let bad = corpus
        .train
        .iter()
        .filter(|u| !validate_bio(&u.tags).is_empty())
        .count();
    println!("utterances with BIO violations: {bad}");
    let u = &corpus.train[0];
    println!("first: {} | {} | {}", u.intent, u.tokens.join(" "), u.tags.join(" "));
    Ok(corpus)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
