//! Linear-chain CRF on hand-written scores: Viterbi path, partition
//! function, per-token marginals, and what the BIO constraint changes.

use intent_slot::autodiff::{ParamStore, Tensor};
use intent_slot::crf::{log_partition_value, marginals, sequence_score, viterbi_decode, Crf};
use intent_slot::Result;

pub fn run_example() -> Result<Vec<usize>> {
    let tags: Vec<String> = ["O", "B-city", "I-city"].iter().map(|s| s.to_string()).collect();
    // "to da lat": the emissions alone prefer I-city right after O
    let emissions = Tensor::from_rows(&[vec![2.0, 0.1, 0.0], vec![0.2, 0.5, 1.5], vec![0.1, 0.0, 1.2]])?;

    let mut store = ParamStore::new();
    let mut crf = Crf::new(&mut store, tags.len());
    let scores = crf.scores(&store);
    let (free, best) = viterbi_decode(&emissions, &scores)?;
    let log_z = log_partition_value(&emissions, &scores)?;
    let (unary, _) = marginals(&emissions, &scores)?;
    let label = |path: &[usize]| path.iter().map(|&t| tags[t].as_str()).collect::<Vec<_>>().join(" ");
    println!(
        "unconstrained: {}  (score {best:.3}, p = {:.3})",
        label(&free),
        (best - log_z).exp()
    );
    for i in 0..unary.rows() {
        println!("  token {i} marginals {:?}", unary.row(i));
    }
    assert_eq!(sequence_score(&emissions, &scores, &free)?, best);

    crf.constrain_bio(&tags);
    let (fixed, _) = crf.decode(&store, &emissions)?;
    println!("BIO-constrained: {}", label(&fixed));
    Ok(fixed)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
