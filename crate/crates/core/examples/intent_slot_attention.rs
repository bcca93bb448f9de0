//! The intent-slot attention on toy vectors: the soft label embedding
//! `w = W p`, attention weights over the tokens, and the slot-layer input
//! width of each ablation variant.

use intent_slot::attention::{attention_weights, compose_slot_inputs, soft_label_embedding, AttentionVariant};
use intent_slot::autodiff::{Graph, Tensor};
use intent_slot::Result;

pub fn run_example() -> Result<Vec<f64>> {
    let mut g = Graph::new();
    // two intents, d = 3
    let label_embedding = g.input(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, -0.5])?);
    let probs = g.input(Tensor::vector(vec![0.9, 0.1]));
    // [CLS] plus three tokens
    let context = g.input(Tensor::from_rows(&[
        vec![0.1, 0.1, 0.1],
        vec![1.0, 0.0, 0.2],
        vec![0.0, 1.0, 0.0],
        vec![0.3, 0.3, 0.3],
    ])?);

    let w = soft_label_embedding(&mut g, label_embedding, probs)?;
    println!("w = {:?}", g.value(w).data());
    let tokens = g.slice_rows(context, 1, 4)?;
    let alpha = attention_weights(&mut g, w, tokens, &[true, true, true])?;
    let weights = g.value(alpha).data().to_vec();
    println!("alpha = {weights:?} (sum {:.12})", weights.iter().sum::<f64>());

    for variant in AttentionVariant::ALL {
        let w_var = variant.uses_label_embedding().then_some(label_embedding);
        let v = compose_slot_inputs(&mut g, variant, context, probs, w_var, &[true, true, true])?;
        println!("{:<12} slot inputs {:?}", variant.as_str(), g.shape(v));
    }
    Ok(weights)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
