//! Builds a small two-layer classifier on the tape, backpropagates a
//! cross-entropy loss and compares the gradients with central differences.

use intent_slot::autodiff::{grad_check, Graph, ParamStore, Tensor};
use intent_slot::Result;

pub fn run_example() -> Result<f64> {
    let mut store = ParamStore::new();
    let w1 = store.add(
        "hidden.weight",
        Tensor::matrix(3, 2, vec![0.4, -0.3, 0.1, 0.8, -0.5, 0.2])?,
    );
    let b1 = store.add("hidden.bias", Tensor::vector(vec![0.0, 0.1, -0.1]));
    let w2 = store.add(
        "out.weight",
        Tensor::matrix(2, 3, vec![0.3, -0.2, 0.6, -0.7, 0.5, 0.1])?,
    );

    let loss_fn = |g: &mut Graph, s: &ParamStore| {
        let x = g.input(Tensor::vector(vec![1.0, -2.0]));
        let (w1, b1, w2) = (g.param(s, w1), g.param(s, b1), g.param(s, w2));
        let h = g.matmul(w1, x)?;
        let h = g.add(h, b1)?;
        let h = g.gelu(h);
        let logits = g.matmul(w2, h)?;
        let probs = g.softmax(logits, None)?;
        g.cross_entropy(probs, 1)
    };

    let mut g = Graph::new();
    let loss = loss_fn(&mut g, &store)?;
    g.backward(loss)?;
    println!("loss = {:.6}", g.value(loss).item());
    for (id, grad) in g.param_grads() {
        println!("d loss / d {:<14} = {:?}", store.name(id), grad.data());
    }

    let report = grad_check(&mut store, 1e-5, loss_fn)?;
    for (name, err) in &report.per_param {
        println!("{name:<14} max relative error {err:.2e}");
    }
    Ok(report.max_rel_error)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let err = run_example()?;
    assert!(err < 1e-6);
    Ok(())
}
