//! Small trainable transformer encoder producing one contextual vector per
//! position of a `[CLS]`-prefixed token sequence.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::nn::{dropout, normal, LayerNorm, Linear};

const EMBEDDING_INIT_STD: f64 = 0.02;

/// Word vocabulary with reserved `[PAD]`, `[UNK]` and `[CLS]` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const CLS: usize = 2;
    pub const RESERVED: [&'static str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

    /// Reserved ids followed by `tokens` in the given order. Duplicates and
    /// reserved strings are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in Self::RESERVED {
            vocab.push(t.to_string());
        }
        for t in tokens {
            vocab.push(t.into());
        }
        vocab
    }

    /// Sorted vocabulary over every token of `utterances`.
    pub fn build(utterances: &[Utterance]) -> Self {
        let set: BTreeSet<&str> = utterances
            .iter()
            .flat_map(|u| u.tokens.iter().map(String::as_str))
            .collect();
        Self::from_tokens(set)
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// All entries in id order, reserved ones included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// `[CLS]` followed by the id of each token; unknown tokens map to `[UNK]`.
pub fn tokenize_and_index<S: AsRef<str>>(tokens: &[S], vocab: &TokenVocab) -> Result<Vec<usize>> {
    if tokens.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let mut ids = Vec::with_capacity(tokens.len() + 1);
    ids.push(TokenVocab::CLS);
    for t in tokens {
        let t = t.as_ref();
        if t.is_empty() || t.chars().any(char::is_whitespace) {
            return Err(Error::Contract(format!("token {t:?} is empty or contains whitespace")));
        }
        ids.push(vocab.id(t));
    }
    Ok(ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Width of every contextual vector.
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Longest accepted input, `[CLS]` included.
    pub max_len: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_len: 64,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} must be in [0,1)", self.dropout)));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must leave room for [CLS] and one token".into()));
        }
        if self.vocab_size <= TokenVocab::CLS {
            return Err(Error::Config("vocab_size must cover the reserved ids".into()));
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d_model
    }
}

#[derive(Clone, Debug)]
struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    attn_norm: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    ffn_norm: LayerNorm,
}

/// Post-norm transformer encoder with learned positional embeddings and a
/// GELU feed-forward block.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, rng: &mut R, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let token_embedding = store.add(
            "embeddings.token",
            normal(rng, config.vocab_size, d, EMBEDDING_INIT_STD),
        );
        let position_embedding = store.add(
            "embeddings.position",
            normal(rng, config.max_len, d, EMBEDDING_INIT_STD),
        );
        let embedding_norm = LayerNorm::new(store, "embeddings.norm", d);
        let layers = (0..config.n_layers)
            .map(|l| {
                let p = format!("encoder.layer{l}");
                Layer {
                    query: Linear::new(store, rng, &format!("{p}.query"), d, d),
                    key: Linear::new(store, rng, &format!("{p}.key"), d, d),
                    value: Linear::new(store, rng, &format!("{p}.value"), d, d),
                    output: Linear::new(store, rng, &format!("{p}.attn_out"), d, d),
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), d),
                    ffn_in: Linear::new(store, rng, &format!("{p}.ffn_in"), d, config.ffn_dim()),
                    ffn_out: Linear::new(store, rng, &format!("{p}.ffn_out"), config.ffn_dim(), d),
                    ffn_norm: LayerNorm::new(store, &format!("{p}.ffn_norm"), d),
                }
            })
            .collect();
        Ok(Self {
            config,
            token_embedding,
            position_embedding,
            embedding_norm,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Contextual embeddings, one row per input id (`L × d_model`).
    ///
    /// `key_mask[i] == false` marks position `i` as padding: no position
    /// attends to it. Dropout is active only when `rng` is given.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        token_ids: &[usize],
        key_mask: Option<&[bool]>,
        mut rng: Option<&mut R>,
    ) -> Result<Var> {
        let len = token_ids.len();
        if len == 0 {
            return Err(Error::EmptyUtterance);
        }
        if len > self.config.max_len {
            return Err(Error::Length {
                len,
                max: self.config.max_len,
            });
        }
        if let Some(m) = key_mask {
            if m.len() != len {
                return Err(Error::shape("encoder key mask", &[len], &[m.len()]));
            }
        }
        let rate = self.config.dropout;
        let tok_table = g.param(store, self.token_embedding);
        let pos_table = g.param(store, self.position_embedding);
        let tok = g.gather_rows(tok_table, token_ids)?;
        let positions: Vec<usize> = (0..len).collect();
        let pos = g.gather_rows(pos_table, &positions)?;
        let x = g.add(tok, pos)?;
        let x = self.embedding_norm.forward(g, store, x)?;
        let mut x = dropout(g, x, rate, rng.as_deref_mut())?;

        let d = self.config.d_model;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let q = layer.query.forward(g, store, x)?;
            let k = layer.key.forward(g, store, x)?;
            let v = layer.value.forward(g, store, x)?;
            let mut context: Option<Var> = None;
            for h in 0..heads {
                let (lo, hi) = (h * dh, (h + 1) * dh);
                let qh = g.slice_cols(q, lo, hi)?;
                let kh = g.slice_cols(k, lo, hi)?;
                let vh = g.slice_cols(v, lo, hi)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, scale);
                let probs = g.softmax(scores, key_mask)?;
                let probs = dropout(g, probs, rate, rng.as_deref_mut())?;
                let out = g.matmul(probs, vh)?;
                context = Some(match context {
                    None => out,
                    Some(c) => g.concat(c, out)?,
                });
            }
            let attn = layer.output.forward(g, store, context.expect("n_heads >= 1"))?;
            let attn = dropout(g, attn, rate, rng.as_deref_mut())?;
            let res = g.add(x, attn)?;
            let h = layer.attn_norm.forward(g, store, res)?;

            let f = layer.ffn_in.forward(g, store, h)?;
            let f = g.gelu(f);
            let f = layer.ffn_out.forward(g, store, f)?;
            let f = dropout(g, f, rate, rng.as_deref_mut())?;
            let res = g.add(h, f)?;
            x = layer.ffn_norm.forward(g, store, res)?;
        }
        Ok(x)
    }
}
