//! Intent-slot attention.
//!
//! The intent distribution `p` selects a soft label embedding `w = W p`;
//! each token `i` then receives the attention-scaled copy `s_i = α_i w`,
//! where `α` is a softmax over the scores `wᵀ c_i` of the real tokens
//! (`[CLS]` excluded). The slot layer consumes `v_i = s_i ∘ c_i`.
//!
//! [`AttentionVariant`] switches between this composition and the ablated
//! forms; `Baseline` feeds `c_i` straight to the slot layer.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::glorot_uniform;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// `w = W p`, `s_i = α_i w`, `v_i = s_i ∘ c_i`.
    Full,
    /// `w = c_0` in place of the label embedding.
    ClsContext,
    /// `s_i = α_i c_i` in place of `α_i w`.
    ScaledSlot,
    /// `v_i = c_0 ∘ c_i`.
    ConcatCls,
    /// `v_i = c_i`; no attention.
    Baseline,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 5] = [
        AttentionVariant::Full,
        AttentionVariant::ClsContext,
        AttentionVariant::ScaledSlot,
        AttentionVariant::ConcatCls,
        AttentionVariant::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionVariant::Full => "full",
            AttentionVariant::ClsContext => "cls_context",
            AttentionVariant::ScaledSlot => "scaled_slot",
            AttentionVariant::ConcatCls => "concat_cls",
            AttentionVariant::Baseline => "baseline",
        }
    }

    /// Width of `v_i` for encoder width `d_model`.
    pub fn slot_input_dim(self, d_model: usize) -> usize {
        match self {
            AttentionVariant::Baseline => d_model,
            _ => 2 * d_model,
        }
    }

    /// Whether the variant owns a label embedding matrix `W`.
    pub fn uses_label_embedding(self) -> bool {
        matches!(self, AttentionVariant::Full | AttentionVariant::ScaledSlot)
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown attention variant {s:?} (expected one of full, cls_context, scaled_slot, concat_cls, baseline)"
                ))
            })
    }
}

/// Trainable `d_model × k` label embedding matrix `W`.
#[derive(Clone, Copy, Debug)]
pub struct LabelEmbedding {
    pub weight: ParamId,
}

impl LabelEmbedding {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, d_model: usize, num_intents: usize) -> Self {
        Self {
            weight: store.add("label_embedding", glorot_uniform(rng, d_model, num_intents)),
        }
    }
}

/// `w = W p`.
pub fn soft_label_embedding(g: &mut Graph, weight: Var, probs: Var) -> Result<Var> {
    let (ws, ps) = (g.shape(weight).to_vec(), g.shape(probs).to_vec());
    if ws.len() != 2 || ps.len() != 1 || ws[1] != ps[0] {
        return Err(Error::shape("soft_label_embedding", &ws, &ps));
    }
    g.matmul(weight, probs)
}

/// `α = softmax(c w)` over the rows of `c` whose mask entry is true; padded
/// rows get exactly 0.
pub fn attention_weights(g: &mut Graph, w: Var, c: Var, pad_mask: &[bool]) -> Result<Var> {
    let (ws, cs) = (g.shape(w).to_vec(), g.shape(c).to_vec());
    if ws.len() != 1 || cs.len() != 2 || cs[1] != ws[0] || cs[0] != pad_mask.len() {
        return Err(Error::shape("attention_weights", &cs, &ws));
    }
    let scores = g.matmul(c, w)?;
    g.softmax(scores, Some(pad_mask))
}

/// Row `i` is `α_i w`.
pub fn intent_specific_vectors(g: &mut Graph, alpha: Var, w: Var) -> Result<Var> {
    let n = g.shape(alpha)[0];
    let d = g.shape(w)[0];
    let a = g.reshape(alpha, &[n, 1])?;
    let wr = g.reshape(w, &[1, d])?;
    g.matmul(a, wr)
}

/// Row `i` is `α_i c_i`.
fn scale_rows(g: &mut Graph, alpha: Var, c: Var) -> Result<Var> {
    let (n, d) = (g.shape(c)[0], g.shape(c)[1]);
    let a = g.reshape(alpha, &[n, 1])?;
    let ones = g.constant(Tensor::filled(&[1, d], 1.0));
    let spread = g.matmul(a, ones)?;
    g.mul(spread, c)
}

/// `n` copies of vector `x` as rows.
fn repeat_rows(g: &mut Graph, x: Var, n: usize) -> Result<Var> {
    let d = g.shape(x)[0];
    let ones = g.constant(Tensor::filled(&[n, 1], 1.0));
    let xr = g.reshape(x, &[1, d])?;
    g.matmul(ones, xr)
}

/// Builds the slot-layer inputs `v_1..v_n` from the encoder output
/// `c` (`(n+1) × d`, row 0 is `[CLS]`) and the intent distribution.
///
/// `label_embedding` must be present for variants that use `W`.
pub fn compose_slot_inputs(
    g: &mut Graph,
    variant: AttentionVariant,
    c: Var,
    probs: Var,
    label_embedding: Option<Var>,
    pad_mask: &[bool],
) -> Result<Var> {
    let rows = g.shape(c)[0];
    if rows < 2 || rows - 1 != pad_mask.len() {
        return Err(Error::shape("compose_slot_inputs", g.shape(c), &[pad_mask.len() + 1]));
    }
    let tokens = g.slice_rows(c, 1, rows)?;
    let need_w = || Error::Contract(format!("variant {variant} needs a label embedding"));
    match variant {
        AttentionVariant::Baseline => Ok(tokens),
        AttentionVariant::ConcatCls => {
            let c0 = g.row(c, 0)?;
            let cls = repeat_rows(g, c0, rows - 1)?;
            g.concat(cls, tokens)
        }
        AttentionVariant::Full | AttentionVariant::ClsContext | AttentionVariant::ScaledSlot => {
            let w = match variant {
                AttentionVariant::ClsContext => g.row(c, 0)?,
                _ => soft_label_embedding(g, label_embedding.ok_or_else(need_w)?, probs)?,
            };
            let alpha = attention_weights(g, w, tokens, pad_mask)?;
            let s = match variant {
                AttentionVariant::ScaledSlot => scale_rows(g, alpha, tokens)?,
                _ => intent_specific_vectors(g, alpha, w)?,
            };
            g.concat(s, tokens)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in AttentionVariant::ALL {
            assert_eq!(v.as_str().parse::<AttentionVariant>().unwrap(), v);
        }
        assert!("attention".parse::<AttentionVariant>().is_err());
    }

    #[test]
    fn onehot_selects_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wm = rand_t(&mut rng, &[4, 3]);
        let mut g = Graph::new();
        let w = g.constant(wm.clone());
        let p = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let out = soft_label_embedding(&mut g, w, p).unwrap();
        let col: Vec<f64> = (0..4).map(|i| wm.at(i, 1)).collect();
        assert_eq!(g.value(out).data(), &col[..]);
    }

    #[test]
    fn uniform_p_gives_column_mean_and_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wm = rand_t(&mut rng, &[5, 4]);
        let mut g = Graph::new();
        let w = g.constant(wm.clone());
        let p = g.constant(Tensor::vector(vec![0.25; 4]));
        let out = soft_label_embedding(&mut g, w, p).unwrap();
        for i in 0..5 {
            let mean = wm.row(i).iter().sum::<f64>() / 4.0;
            assert!((g.value(out).data()[i] - mean).abs() < 1e-12);
        }
        let pv = [0.1, 0.2, 0.3, 0.4];
        let p = g.constant(Tensor::vector(pv.to_vec()));
        let out = soft_label_embedding(&mut g, w, p).unwrap();
        for i in 0..5 {
            let dot: f64 = (0..4).map(|j| wm.at(i, j) * pv[j]).sum();
            assert!((g.value(out).data()[i] - dot).abs() < 1e-12);
        }
        let bad = g.constant(Tensor::vector(vec![1.0; 3]));
        assert!(matches!(soft_label_embedding(&mut g, w, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn attention_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let w = g.constant(rand_t(&mut rng, &[4]));
        let c1 = g.constant(rand_t(&mut rng, &[1, 4]));
        let a = attention_weights(&mut g, w, c1, &[true]).unwrap();
        assert_eq!(g.value(a).data(), &[1.0]);

        let zero = g.constant(Tensor::zeros(&[4]));
        let c3 = g.constant(rand_t(&mut rng, &[3, 4]));
        let a = attention_weights(&mut g, zero, c3, &[true; 3]).unwrap();
        assert!(g.value(a).data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        assert!(matches!(
            attention_weights(&mut g, w, c3, &[false; 3]),
            Err(Error::InvalidMask)
        ));
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (wt, ct) = (rand_t(&mut rng, &[6]), rand_t(&mut rng, &[5, 6]));
        let mut g = Graph::new();
        let (w, c) = (g.constant(wt.clone()), g.constant(ct.clone()));
        let mask = [true, true, false, true, true];
        let a = attention_weights(&mut g, w, c, &mask).unwrap();
        let scores: Vec<f64> = (0..5)
            .map(|i| (0..6).map(|j| wt.data()[j] * ct.at(i, j)).sum())
            .collect();
        let z: f64 = (0..5).filter(|&i| mask[i]).map(|i| scores[i].exp()).sum();
        for i in 0..5 {
            let expected = if mask[i] { scores[i].exp() / z } else { 0.0 };
            assert!((g.value(a).data()[i] - expected).abs() < 1e-12);
        }
        assert_eq!(g.value(a).data()[2], 0.0);
    }

    #[test]
    fn intent_specific_vector_examples() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let a = g.constant(Tensor::vector(vec![1.0]));
        let s = intent_specific_vectors(&mut g, a, w).unwrap();
        assert_eq!(g.value(s).data(), &[1.0, -2.0, 0.5]);

        let a = g.constant(Tensor::vector(vec![0.25, 0.75, 0.0]));
        let s = intent_specific_vectors(&mut g, a, w).unwrap();
        assert_eq!(g.value(s).row(2), &[0.0, 0.0, 0.0]);
        for j in 0..3 {
            let col: f64 = (0..3).map(|i| g.value(s).at(i, j)).sum();
            assert!((col - [1.0, -2.0, 0.5][j]).abs() < 1e-15);
        }
    }

    fn setup(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> (Tensor, Tensor, Tensor) {
        let c = rand_t(rng, &[n + 1, d]);
        let wm = rand_t(rng, &[d, k]);
        let raw = rand_t(rng, &[k]);
        let z: f64 = raw.data().iter().map(|x| x.exp()).sum();
        let p = Tensor::vector(raw.data().iter().map(|x| x.exp() / z).collect());
        (c, wm, p)
    }

    #[test]
    fn compose_variants_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d, k) = (4, 3, 2);
        let (ct, wm, _) = setup(&mut rng, n, d, k);
        let mut g = Graph::new();
        let c = g.constant(ct.clone());
        let w = g.constant(wm.clone());
        let p = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let mask = [true; 4];

        let base = compose_slot_inputs(&mut g, AttentionVariant::Baseline, c, p, None, &mask).unwrap();
        for i in 0..n {
            assert_eq!(g.value(base).row(i), ct.row(i + 1));
        }

        let full = compose_slot_inputs(&mut g, AttentionVariant::Full, c, p, Some(w), &mask).unwrap();
        assert_eq!(g.value(full).shape(), &[n, 2 * d]);
        let col: Vec<f64> = (0..d).map(|i| wm.at(i, 1)).collect();
        let wv = g.constant(Tensor::vector(col.clone()));
        let toks = g.slice_rows(c, 1, n + 1).unwrap();
        let alpha = attention_weights(&mut g, wv, toks, &mask).unwrap();
        for i in 0..n {
            let row = g.value(full).row(i);
            for j in 0..d {
                assert_eq!(row[j], g.value(alpha).data()[i] * col[j]);
            }
            assert_eq!(&row[d..], ct.row(i + 1));
        }

        let cc = compose_slot_inputs(&mut g, AttentionVariant::ConcatCls, c, p, None, &mask).unwrap();
        for i in 0..n {
            assert_eq!(&g.value(cc).row(i)[..d], ct.row(0));
            assert_eq!(&g.value(cc).row(i)[d..], ct.row(i + 1));
        }

        let ss = compose_slot_inputs(&mut g, AttentionVariant::ScaledSlot, c, p, Some(w), &mask).unwrap();
        for i in 0..n {
            for j in 0..d {
                let expected = g.value(alpha).data()[i] * ct.at(i + 1, j);
                assert!((g.value(ss).at(i, j) - expected).abs() < 1e-15);
            }
        }

        let cls = compose_slot_inputs(&mut g, AttentionVariant::ClsContext, c, p, None, &mask).unwrap();
        let c0 = g.constant(Tensor::vector(ct.row(0).to_vec()));
        let alpha0 = attention_weights(&mut g, c0, toks, &mask).unwrap();
        for i in 0..n {
            for j in 0..d {
                let expected = g.value(alpha0).data()[i] * ct.at(0, j);
                assert!((g.value(cls).at(i, j) - expected).abs() < 1e-15);
            }
        }

        assert!(matches!(
            compose_slot_inputs(&mut g, AttentionVariant::Full, c, p, None, &mask),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn alpha_depends_only_on_scores() {
        // Two (w, c) pairs with the same score vector: rotate both by the
        // same orthogonal map.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wt = rand_t(&mut rng, &[2]);
        let ct = rand_t(&mut rng, &[4, 2]);
        let (cos, sin) = (0.6f64, 0.8f64);
        let rot = |x: f64, y: f64| (cos * x - sin * y, sin * x + cos * y);
        let (w0, w1) = rot(wt.data()[0], wt.data()[1]);
        let mut cr = Vec::new();
        for i in 0..4 {
            let (a, b) = rot(ct.at(i, 0), ct.at(i, 1));
            cr.extend([a, b]);
        }
        let mut g = Graph::new();
        let (w, c) = (g.constant(wt), g.constant(ct));
        let (w2, c2) = (
            g.constant(Tensor::vector(vec![w0, w1])),
            g.constant(Tensor::matrix(4, 2, cr).unwrap()),
        );
        let a1 = attention_weights(&mut g, w, c, &[true; 4]).unwrap();
        let a2 = attention_weights(&mut g, w2, c2, &[true; 4]).unwrap();
        for (x, y) in g.value(a1).data().iter().zip(g.value(a2).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn alpha_sums_to_one(seed in any::<u64>(), n in 1usize..8, d in 1usize..6, pads in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g = Graph::new();
            let w = g.constant(rand_t(&mut rng, &[d]));
            let c = g.constant(rand_t(&mut rng, &[n + pads, d]));
            let mut mask = vec![true; n];
            mask.extend(vec![false; pads]);
            let a = attention_weights(&mut g, w, c, &mask).unwrap();
            let total: f64 = g.value(a).data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(g.value(a).data()[n..].iter().all(|&v| v == 0.0));
        }
    }
}
