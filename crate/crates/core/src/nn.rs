//! Parameterized building blocks shared by the encoder and the heads.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Glorot-uniform `rows × cols` matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// Affine map `y = x Wᵀ + b` with `W: out × in`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot_uniform(rng, out_dim, in_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Applies the map to a vector (`in`) or to every row of a matrix (`n × in`).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        if g.shape(x).last() != Some(&self.in_dim) {
            return Err(Error::shape("linear", g.shape(x), &[self.out_dim, self.in_dim]));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = if g.shape(x).len() == 1 {
            g.matmul(w, x)?
        } else {
            let wt = g.transpose(w)?;
            g.matmul(x, wt)?
        };
        g.add_bias(y, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[dim], 1.0)),
            shift: store.add(format!("{name}.shift"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let shift = g.param(store, self.shift);
        g.layer_norm(x, gain, shift, LAYER_NORM_EPS)
    }
}

/// Inverted dropout: zeroes entries with probability `rate` and rescales the
/// rest. A no-op when `rng` is `None` or `rate == 0`.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph, x: Var, rate: f64, rng: Option<&mut R>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let shape = g.shape(x).to_vec();
    let n = shape.iter().product();
    let mask = (0..n)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    g.mul_const(x, Tensor::new(shape, mask)?)
}
