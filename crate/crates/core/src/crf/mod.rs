//! Slot filling layer: per-token emission scores followed by a linear-chain
//! CRF with explicit start and end scores.
//!
//! A tag sequence `y` over `n` tokens scores
//! `start[y0] + e[0][y0] + Σ (trans[y(i-1)][yi] + e[i][yi]) + end[y(n-1)]`,
//! accumulated left to right in exactly that order by every routine here.

use rand::Rng;

use crate::autodiff::{CustomOp, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Linear;

/// Score assigned to transitions forbidden by the BIO scheme when
/// constraints are enabled.
pub const BIO_FORBIDDEN: f64 = -1e4;

/// FFNN over the slot inputs `v_i`, one output per BIO tag.
#[derive(Clone, Copy, Debug)]
pub struct SlotHead {
    pub ffnn: Linear,
}

impl SlotHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, d_slot: usize, num_tags: usize) -> Self {
        Self {
            ffnn: Linear::new(store, rng, "slot_head", d_slot, num_tags),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.ffnn.out_dim
    }

    /// `n × d_slot` slot inputs to `n × T` unnormalized tag scores.
    pub fn emissions(&self, g: &mut Graph, store: &ParamStore, v: Var) -> Result<Var> {
        if g.shape(v).len() != 2 || g.shape(v)[0] == 0 {
            return Err(Error::shape("slot_emissions", g.shape(v), &[self.ffnn.in_dim]));
        }
        self.ffnn.forward(g, store, v)
    }
}

/// CRF transition parameters. All start at zero.
#[derive(Clone, Debug)]
pub struct Crf {
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
    num_tags: usize,
    /// Additive transition/start penalties for BIO constraints, if enabled.
    constraint: Option<(Tensor, Tensor)>,
}

/// Plain-value view of the CRF scores for decoding and oracles.
#[derive(Clone, Debug)]
pub struct CrfScores {
    pub transitions: Tensor,
    pub start: Tensor,
    pub end: Tensor,
}

impl CrfScores {
    pub fn zeros(num_tags: usize) -> Self {
        Self {
            transitions: Tensor::zeros(&[num_tags, num_tags]),
            start: Tensor::zeros(&[num_tags]),
            end: Tensor::zeros(&[num_tags]),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }
}

impl Crf {
    pub fn new(store: &mut ParamStore, num_tags: usize) -> Self {
        Self {
            transitions: store.add("crf.transitions", Tensor::zeros(&[num_tags, num_tags])),
            start: store.add("crf.start", Tensor::zeros(&[num_tags])),
            end: store.add("crf.end", Tensor::zeros(&[num_tags])),
            num_tags,
            constraint: None,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    /// Penalizes `O → I-x`, `B-x/I-x → I-y` (x ≠ y) and sequences opening with
    /// `I-x`, using the tag strings in id order.
    pub fn constrain_bio(&mut self, tags: &[String]) {
        assert_eq!(tags.len(), self.num_tags);
        let t = self.num_tags;
        let mut trans = Tensor::zeros(&[t, t]);
        let mut start = Tensor::zeros(&[t]);
        for (b, to) in tags.iter().enumerate() {
            let Some(inside) = to.strip_prefix("I-") else { continue };
            start.data_mut()[b] = BIO_FORBIDDEN;
            for (a, from) in tags.iter().enumerate() {
                let ok = from
                    .strip_prefix("B-")
                    .or_else(|| from.strip_prefix("I-"))
                    .is_some_and(|ty| ty == inside);
                if !ok {
                    trans.data_mut()[a * t + b] = BIO_FORBIDDEN;
                }
            }
        }
        self.constraint = Some((trans, start));
    }

    pub fn is_constrained(&self) -> bool {
        self.constraint.is_some()
    }

    fn vars(&self, g: &mut Graph, store: &ParamStore) -> Result<[Var; 3]> {
        let mut trans = g.param(store, self.transitions);
        let mut start = g.param(store, self.start);
        let end = g.param(store, self.end);
        if let Some((tc, sc)) = &self.constraint {
            let tc = g.constant(tc.clone());
            let sc = g.constant(sc.clone());
            trans = g.add(trans, tc)?;
            start = g.add(start, sc)?;
        }
        Ok([trans, start, end])
    }

    /// Effective scores (constraints applied) as plain tensors.
    pub fn scores(&self, store: &ParamStore) -> CrfScores {
        let mut transitions = store.value(self.transitions).clone();
        let mut start = store.value(self.start).clone();
        if let Some((tc, sc)) = &self.constraint {
            transitions.add_assign(tc);
            start.add_assign(sc);
        }
        CrfScores {
            transitions,
            start,
            end: store.value(self.end).clone(),
        }
    }

    pub fn log_partition(&self, g: &mut Graph, store: &ParamStore, emissions: Var) -> Result<Var> {
        let [t, s, e] = self.vars(g, store)?;
        crf_log_partition(g, emissions, t, s, e)
    }

    /// Sequence negative log-likelihood of `gold`.
    pub fn nll(&self, g: &mut Graph, store: &ParamStore, emissions: Var, gold: &[usize]) -> Result<Var> {
        let [t, s, e] = self.vars(g, store)?;
        crf_nll(g, emissions, t, s, e, gold)
    }

    pub fn decode(&self, store: &ParamStore, emissions: &Tensor) -> Result<(Vec<usize>, f64)> {
        viterbi_decode(emissions, &self.scores(store))
    }
}

fn check_shapes(em: &Tensor, trans: &Tensor, start: &Tensor, end: &Tensor) -> Result<(usize, usize)> {
    if em.rank() != 2 || em.rows() == 0 {
        return Err(Error::shape("crf emissions", em.shape(), &[]));
    }
    let t = em.cols();
    if trans.shape() != [t, t] {
        return Err(Error::shape("crf transitions", em.shape(), trans.shape()));
    }
    if start.shape() != [t] || end.shape() != [t] {
        return Err(Error::shape("crf start/end", start.shape(), end.shape()));
    }
    Ok((em.rows(), t))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward log-potentials `alpha[i][t]` (row-major `n × T`).
fn forward_alphas(em: &Tensor, trans: &Tensor, start: &Tensor) -> Vec<f64> {
    let (n, t) = (em.rows(), em.cols());
    let tr = trans.data();
    let mut alpha = vec![0.0; n * t];
    for j in 0..t {
        alpha[j] = start.data()[j] + em.at(0, j);
    }
    for i in 1..n {
        for j in 0..t {
            let prev = &alpha[(i - 1) * t..i * t];
            let lse = log_sum_exp((0..t).map(|p| prev[p] + tr[p * t + j]));
            alpha[i * t + j] = lse + em.at(i, j);
        }
    }
    alpha
}

/// Backward log-potentials `beta[i][t]`, including the end score.
fn backward_betas(em: &Tensor, trans: &Tensor, end: &Tensor) -> Vec<f64> {
    let (n, t) = (em.rows(), em.cols());
    let tr = trans.data();
    let mut beta = vec![0.0; n * t];
    beta[(n - 1) * t..].copy_from_slice(end.data());
    for i in (0..n - 1).rev() {
        for j in 0..t {
            let next = &beta[(i + 1) * t..(i + 2) * t];
            beta[i * t + j] = log_sum_exp((0..t).map(|u| tr[j * t + u] + em.at(i + 1, u) + next[u]));
        }
    }
    beta
}

fn log_z_from_alphas(alpha: &[f64], end: &Tensor, n: usize, t: usize) -> f64 {
    let last = &alpha[(n - 1) * t..];
    log_sum_exp((0..t).map(|j| last[j] + end.data()[j]))
}

/// Log of the sum of `exp(score)` over all `Tⁿ` tag sequences.
pub fn log_partition_value(em: &Tensor, scores: &CrfScores) -> Result<f64> {
    let (n, t) = check_shapes(em, &scores.transitions, &scores.start, &scores.end)?;
    let alpha = forward_alphas(em, &scores.transitions, &scores.start);
    Ok(log_z_from_alphas(&alpha, &scores.end, n, t))
}

/// Score of one tag sequence.
pub fn sequence_score(em: &Tensor, scores: &CrfScores, tags: &[usize]) -> Result<f64> {
    let (n, t) = check_shapes(em, &scores.transitions, &scores.start, &scores.end)?;
    check_tags(tags, n, t)?;
    Ok(path_score(em, &scores.transitions, &scores.start, &scores.end, tags))
}

fn path_score(em: &Tensor, trans: &Tensor, start: &Tensor, end: &Tensor, tags: &[usize]) -> f64 {
    let t = em.cols();
    let mut s = start.data()[tags[0]] + em.at(0, tags[0]);
    for i in 1..tags.len() {
        s = s + trans.data()[tags[i - 1] * t + tags[i]] + em.at(i, tags[i]);
    }
    s + end.data()[tags[tags.len() - 1]]
}

fn check_tags(tags: &[usize], n: usize, t: usize) -> Result<()> {
    if tags.len() != n {
        return Err(Error::shape("crf gold tags", &[n], &[tags.len()]));
    }
    if let Some(&bad) = tags.iter().find(|&&y| y >= t) {
        return Err(Error::Index {
            what: "tag",
            index: bad,
            size: t,
        });
    }
    Ok(())
}

/// Per-token marginals `P(y_i = t)` (`n × T`) and expected transition counts
/// (`T × T`).
pub fn marginals(em: &Tensor, scores: &CrfScores) -> Result<(Tensor, Tensor)> {
    let (n, t) = check_shapes(em, &scores.transitions, &scores.start, &scores.end)?;
    let (unary, pair) = marginals_raw(em, &scores.transitions, &scores.start, &scores.end, n, t);
    Ok((Tensor::matrix(n, t, unary)?, Tensor::matrix(t, t, pair)?))
}

fn marginals_raw(
    em: &Tensor,
    trans: &Tensor,
    start: &Tensor,
    end: &Tensor,
    n: usize,
    t: usize,
) -> (Vec<f64>, Vec<f64>) {
    let alpha = forward_alphas(em, trans, start);
    let beta = backward_betas(em, trans, end);
    let log_z = log_z_from_alphas(&alpha, end, n, t);
    let unary = alpha.iter().zip(&beta).map(|(a, b)| (a + b - log_z).exp()).collect();
    let tr = trans.data();
    let mut pair = vec![0.0; t * t];
    for i in 1..n {
        for a in 0..t {
            for b in 0..t {
                pair[a * t + b] +=
                    (alpha[(i - 1) * t + a] + tr[a * t + b] + em.at(i, b) + beta[i * t + b] - log_z).exp();
            }
        }
    }
    (unary, pair)
}

/// Maximum-scoring tag sequence and its score. Ties prefer the lower tag id
/// at every backtracking step.
pub fn viterbi_decode(em: &Tensor, scores: &CrfScores) -> Result<(Vec<usize>, f64)> {
    let (n, t) = check_shapes(em, &scores.transitions, &scores.start, &scores.end)?;
    let tr = scores.transitions.data();
    let mut best = vec![0.0; n * t];
    let mut back = vec![0usize; n * t];
    for j in 0..t {
        best[j] = scores.start.data()[j] + em.at(0, j);
    }
    for i in 1..n {
        for j in 0..t {
            let mut arg = 0;
            let mut val = f64::NEG_INFINITY;
            for p in 0..t {
                let s = best[(i - 1) * t + p] + tr[p * t + j];
                if s > val {
                    val = s;
                    arg = p;
                }
            }
            best[i * t + j] = val + em.at(i, j);
            back[i * t + j] = arg;
        }
    }
    let mut last = 0;
    let mut score = f64::NEG_INFINITY;
    for j in 0..t {
        let s = best[(n - 1) * t + j] + scores.end.data()[j];
        if s > score {
            score = s;
            last = j;
        }
    }
    let mut tags = vec![0; n];
    tags[n - 1] = last;
    for i in (1..n).rev() {
        tags[i - 1] = back[i * t + tags[i]];
    }
    Ok((tags, score))
}

#[derive(Debug)]
struct LogPartitionOp;

impl CustomOp for LogPartitionOp {
    fn name(&self) -> &'static str {
        "crf_log_partition"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let [em, trans, start, end] = inputs else {
            return Err(Error::Contract("crf_log_partition takes 4 inputs".into()));
        };
        let (n, t) = check_shapes(em, trans, start, end)?;
        let alpha = forward_alphas(em, trans, start);
        Ok(Tensor::scalar(log_z_from_alphas(&alpha, end, n, t)))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_output: &Tensor) -> Vec<Tensor> {
        let (em, trans, start, end) = (inputs[0], inputs[1], inputs[2], inputs[3]);
        let (n, t) = (em.rows(), em.cols());
        let go = grad_output.item();
        let (unary, pair) = marginals_raw(em, trans, start, end, n, t);
        let d_start = unary[..t].iter().map(|p| p * go).collect();
        let d_end = unary[(n - 1) * t..].iter().map(|p| p * go).collect();
        let d_em = unary.iter().map(|p| p * go).collect();
        let d_trans = pair.iter().map(|p| p * go).collect();
        vec![
            Tensor::matrix(n, t, d_em).expect("shape"),
            Tensor::matrix(t, t, d_trans).expect("shape"),
            Tensor::vector(d_start),
            Tensor::vector(d_end),
        ]
    }
}

#[derive(Debug)]
struct PathScoreOp {
    tags: Vec<usize>,
}

impl CustomOp for PathScoreOp {
    fn name(&self) -> &'static str {
        "crf_path_score"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let [em, trans, start, end] = inputs else {
            return Err(Error::Contract("crf_path_score takes 4 inputs".into()));
        };
        let (n, t) = check_shapes(em, trans, start, end)?;
        check_tags(&self.tags, n, t)?;
        Ok(Tensor::scalar(path_score(em, trans, start, end, &self.tags)))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_output: &Tensor) -> Vec<Tensor> {
        let (n, t) = (inputs[0].rows(), inputs[0].cols());
        let go = grad_output.item();
        let tags = &self.tags;
        let mut d_em = Tensor::zeros(&[n, t]);
        let mut d_trans = Tensor::zeros(&[t, t]);
        let mut d_start = Tensor::zeros(&[t]);
        let mut d_end = Tensor::zeros(&[t]);
        d_start.data_mut()[tags[0]] += go;
        d_end.data_mut()[tags[n - 1]] += go;
        for (i, &y) in tags.iter().enumerate() {
            d_em.data_mut()[i * t + y] += go;
            if i > 0 {
                d_trans.data_mut()[tags[i - 1] * t + y] += go;
            }
        }
        vec![d_em, d_trans, d_start, d_end]
    }
}

/// Differentiable log-partition.
pub fn crf_log_partition(g: &mut Graph, em: Var, trans: Var, start: Var, end: Var) -> Result<Var> {
    g.custom(Box::new(LogPartitionOp), &[em, trans, start, end])
}

/// Differentiable score of a fixed tag sequence.
pub fn crf_path_score(g: &mut Graph, em: Var, trans: Var, start: Var, end: Var, tags: &[usize]) -> Result<Var> {
    g.custom(Box::new(PathScoreOp { tags: tags.to_vec() }), &[em, trans, start, end])
}

/// `log_partition − score(gold)`.
pub fn crf_nll(g: &mut Graph, em: Var, trans: Var, start: Var, end: Var, gold: &[usize]) -> Result<Var> {
    let gold_score = crf_path_score(g, em, trans, start, end, gold)?;
    let log_z = crf_log_partition(g, em, trans, start, end)?;
    g.sub(log_z, gold_score)
}
