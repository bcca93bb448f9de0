//! A small templated flight-domain corpus for smoke tests, examples and the
//! overfitting check. Three intents, five slot types, under 40 word types,
//! with multi-token city and airline names.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{CorpusSplits, Utterance};

pub const INTENTS: [&str; 3] = ["flight", "airfare", "ground_service"];

pub const SLOT_TYPES: [&str; 5] = [
    "fromloc.city_name",
    "toloc.city_name",
    "depart_date.day_name",
    "airline_name",
    "depart_time.period_of_day",
];

const CITIES: [&str; 5] = ["hanoi", "hue", "da lat", "vinh", "can tho"];
const AIRLINES: [&str; 2] = ["vietnam airlines", "bamboo airways"];
const DAYS: [&str; 3] = ["monday", "friday", "sunday"];
const PERIODS: [&str; 2] = ["morning", "evening"];

/// Template pieces: literal words, or a slot filled from a value list.
enum Piece {
    Word(&'static str),
    Slot(&'static str, &'static [&'static str]),
}

use Piece::{Slot, Word};

fn templates(intent: usize) -> Vec<Vec<Piece>> {
    let from = || Slot("fromloc.city_name", &CITIES);
    let to = || Slot("toloc.city_name", &CITIES);
    match intent {
        0 => vec![
            vec![
                Word("flights"),
                Word("from"),
                from(),
                Word("to"),
                to(),
                Word("on"),
                Slot("depart_date.day_name", &DAYS),
            ],
            vec![
                Word("show"),
                Word("me"),
                Slot("airline_name", &AIRLINES),
                Word("flights"),
                Word("from"),
                from(),
                Word("to"),
                to(),
            ],
            vec![
                Word("flights"),
                Word("to"),
                to(),
                Word("in"),
                Word("the"),
                Slot("depart_time.period_of_day", &PERIODS),
            ],
        ],
        1 => vec![
            vec![
                Word("how"),
                Word("much"),
                Word("is"),
                Word("a"),
                Slot("airline_name", &AIRLINES),
                Word("ticket"),
                Word("from"),
                from(),
                Word("to"),
                to(),
            ],
            vec![
                Word("fare"),
                Word("from"),
                from(),
                Word("to"),
                to(),
                Word("on"),
                Slot("depart_date.day_name", &DAYS),
            ],
        ],
        _ => vec![
            vec![
                Word("what"),
                Word("ground"),
                Word("transportation"),
                Word("is"),
                Word("available"),
                Word("in"),
                to(),
            ],
            vec![
                Word("ground"),
                Word("transportation"),
                Word("in"),
                to(),
                Word("on"),
                Slot("depart_date.day_name", &DAYS),
            ],
        ],
    }
}

fn realize<R: Rng + ?Sized>(rng: &mut R, intent: usize, template: &[Piece]) -> Utterance {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for piece in template {
        match piece {
            Word(w) => {
                tokens.push((*w).to_string());
                tags.push("O".to_string());
            }
            Slot(ty, values) => {
                let value = values.choose(rng).expect("non-empty value list");
                for (k, w) in value.split(' ').enumerate() {
                    tokens.push(w.to_string());
                    tags.push(format!("{}-{ty}", if k == 0 { 'B' } else { 'I' }));
                }
            }
        }
    }
    Utterance::new(tokens, INTENTS[intent], tags).expect("template yields aligned tags")
}

/// `n` utterances cycling through the intents so each appears.
pub fn generate(n: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let intent = i % INTENTS.len();
            let ts = templates(intent);
            let t = rng.random_range(0..ts.len());
            realize(&mut rng, intent, &ts[t])
        })
        .collect()
}

/// Train / validation / test splits of 50 / 20 / 20 utterances.
pub fn splits(seed: u64) -> CorpusSplits {
    CorpusSplits {
        train: generate(50, seed),
        valid: generate(20, seed.wrapping_add(1)),
        test: generate(20, seed.wrapping_add(2)),
    }
}
