//! Intent detection: one affine map over the `[CLS]` vector followed by a
//! softmax over the intent labels.

use rand::Rng;

use crate::autodiff::{Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{dropout, Linear};

#[derive(Clone, Copy, Debug)]
pub struct IntentHead {
    pub ffnn: Linear,
}

impl IntentHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, d_model: usize, num_intents: usize) -> Self {
        Self {
            ffnn: Linear::new(store, rng, "intent_head", d_model, num_intents),
        }
    }

    pub fn num_intents(&self) -> usize {
        self.ffnn.out_dim
    }

    /// Pre-softmax scores for the `[CLS]` vector `c0`. Dropout at `rate` is
    /// applied to `c0` when `rng` is given.
    pub fn logits<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        c0: Var,
        rate: f64,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        if g.shape(c0) != [self.ffnn.in_dim] {
            return Err(Error::shape("intent_probs", g.shape(c0), &[self.ffnn.in_dim]));
        }
        let c0 = dropout(g, c0, rate, rng)?;
        self.ffnn.forward(g, store, c0)
    }

    /// Intent distribution `p` over the `k` labels.
    pub fn probs<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        c0: Var,
        rate: f64,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        let logits = self.logits(g, store, c0, rate, rng)?;
        g.softmax(logits, None)
    }
}

/// Cross-entropy of the gold intent under `probs`.
pub fn intent_loss(g: &mut Graph, probs: Var, gold: usize) -> Result<Var> {
    g.cross_entropy(probs, gold)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predict_intent(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    fn head(k: usize, d: usize, seed: u64) -> (ParamStore, IntentHead) {
        let mut store = ParamStore::new();
        let h = IntentHead::new(&mut store, &mut ChaCha8Rng::seed_from_u64(seed), d, k);
        (store, h)
    }

    fn probs_of(h: &IntentHead, store: &ParamStore, c0: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(c0.to_vec()));
        let p = h.probs(&mut g, store, c, 0.1, None::<&mut NoRng>).unwrap();
        g.value(p).data().to_vec()
    }

    #[test]
    fn zero_weights_give_uniform() {
        let (mut store, h) = head(4, 3, 0);
        store.value_mut(h.ffnn.weight).data_mut().fill(0.0);
        let p = probs_of(&h, &store, &[0.3, -2.0, 1.0]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn large_bias_saturates() {
        let (mut store, h) = head(3, 2, 0);
        store.value_mut(h.ffnn.weight).data_mut().fill(0.0);
        store.value_mut(h.ffnn.bias).data_mut()[2] = 100.0;
        let p = probs_of(&h, &store, &[1.0, 1.0]);
        assert!((p[2] - 1.0).abs() < 1e-12);
        assert_eq!(predict_intent(&p), 2);
    }

    #[test]
    fn matches_scalar_oracle() {
        let (mut store, h) = head(5, 4, 1);
        store
            .value_mut(h.ffnn.bias)
            .data_mut()
            .copy_from_slice(&[0.1, -0.2, 0.3, 0.0, 0.5]);
        let c0 = [0.5, -1.0, 0.25, 2.0];
        let p = probs_of(&h, &store, &c0);
        let (w, b) = (store.value(h.ffnn.weight), store.value(h.ffnn.bias));
        let logits: Vec<f64> = (0..5)
            .map(|i| b.data()[i] + (0..4).map(|j| w.at(i, j) * c0[j]).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for i in 0..5 {
            assert!((p[i] - (logits[i] - max).exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let (store, h) = head(3, 4, 0);
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![0.0; 5]));
        assert!(matches!(
            h.probs(&mut g, &store, c, 0.0, None::<&mut NoRng>),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let l = intent_loss(&mut g, p, 1).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let p = g.constant(Tensor::vector(vec![1.0 / 28.0; 28]));
        let l = intent_loss(&mut g, p, 5).unwrap();
        assert!((g.value(l).item() - 28f64.ln()).abs() < 1e-12);
        assert!((28f64.ln() - 3.3322).abs() < 1e-4);
    }

    #[test]
    fn loss_gradient_check() {
        let (mut store, h) = head(4, 3, 2);
        let c0 = store.add("c0", Tensor::vector(vec![0.2, -0.7, 1.1]));
        let r = grad_check(&mut store, 1e-5, |g, s| {
            let c = g.param(s, c0);
            let p = h.probs(g, s, c, 0.1, None::<&mut NoRng>)?;
            intent_loss(g, p, 3)
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(predict_intent(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predict_intent(&[0.5, 0.5]), 0);
    }

    #[test]
    fn argmax_invariant_to_logit_shift() {
        let (store, h) = head(6, 3, 4);
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![0.4, 0.1, -0.3]));
        let logits = h.logits(&mut g, &store, c, 0.0, None::<&mut NoRng>).unwrap();
        let p1 = g.softmax(logits, None).unwrap();
        let shift = g.constant(Tensor::filled(&[6], 37.5));
        let shifted = g.add(logits, shift).unwrap();
        let p2 = g.softmax(shifted, None).unwrap();
        assert_eq!(predict_intent(g.value(p1).data()), predict_intent(g.value(p2).data()));
    }
}
