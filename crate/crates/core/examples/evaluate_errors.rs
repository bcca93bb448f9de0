//! Span-level scoring and the error taxonomy on a pair of hand-written
//! prediction sets.

use intent_slot::evaluation::{categorize_errors, extract_spans, EvalReport, LabelSeq};
use intent_slot::Result;

fn seq(intent: &str, tags: &str) -> LabelSeq {
    LabelSeq {
        intent: intent.into(),
        tags: tags.split_whitespace().map(str::to_string).collect(),
    }
}

pub fn run_example() -> Result<EvalReport> {
    let gold = vec![
        seq("flight", "O B-fromloc O B-toloc I-toloc"),
        seq("airfare", "O O B-airline I-airline O"),
        seq("ground_service", "O O O B-city"),
    ];
    let pred = vec![
        seq("flight", "O B-fromloc O B-toloc O"),
        seq("flight", "O O B-airline I-airline O"),
        // an orphan I- opens a span, as conlleval does
        seq("ground_service", "O O O I-city"),
    ];
    println!("spans of {:?}: {:?}", pred[2].tags, extract_spans(&pred[2].tags));

    let report = EvalReport::compute(&gold, &pred)?;
    print!("{}", report.to_text());
    for d in categorize_errors(&gold, &pred)?.diagnostics {
        println!(
            "utterance {}: {:?} gold {:?} predicted {:?}",
            d.utterance, d.category, d.gold, d.predicted
        );
    }
    Ok(report)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
