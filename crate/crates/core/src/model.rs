//! The joint model: encoder, intent head, intent-slot attention, slot head
//! and CRF, sharing one [`ParamStore`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{compose_slot_inputs, AttentionVariant, LabelEmbedding};
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::crf::{Crf, SlotHead};
use crate::data::{EncodedUtterance, LabelSchema};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::intent_head::{intent_loss, predict_intent, IntentHead};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub variant: AttentionVariant,
    /// Dropout on the `[CLS]` vector before the intent head.
    pub intent_dropout: f64,
    pub constrain_bio: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, variant: AttentionVariant) -> Self {
        Self {
            encoder: EncoderConfig::new(vocab_size),
            variant,
            intent_dropout: 0.1,
            constrain_bio: false,
        }
    }

    /// Same configuration with every dropout disabled.
    pub fn without_dropout(mut self) -> Self {
        self.encoder.dropout = 0.0;
        self.intent_dropout = 0.0;
        self
    }
}

/// Graph outputs of one utterance.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// Contextual embeddings, `[CLS]` row included.
    pub context: Var,
    pub intent_probs: Var,
    /// Tag scores of the real tokens (`n × T`).
    pub emissions: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub intent: usize,
    pub tags: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct JointModel {
    config: ModelConfig,
    store: ParamStore,
    encoder: Encoder,
    intent_head: IntentHead,
    slot_head: SlotHead,
    crf: Crf,
    label_embedding: Option<LabelEmbedding>,
}

impl JointModel {
    /// Initializes every parameter from `seed`. The label embedding is
    /// created last and only for variants that use it.
    pub fn new(config: ModelConfig, schema: &LabelSchema, seed: u64) -> Result<Self> {
        let k = schema.num_intents();
        let t = schema.num_tags();
        if k == 0 || t == 0 {
            return Err(Error::Config("schema needs at least one intent and one tag".into()));
        }
        if !(0.0..1.0).contains(&config.intent_dropout) {
            return Err(Error::Config("intent_dropout must be in [0,1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.encoder.d_model;
        let encoder = Encoder::new(&mut store, &mut rng, config.encoder.clone())?;
        let intent_head = IntentHead::new(&mut store, &mut rng, d, k);
        let slot_head = SlotHead::new(&mut store, &mut rng, config.variant.slot_input_dim(d), t);
        let mut crf = Crf::new(&mut store, t);
        if config.constrain_bio {
            crf.constrain_bio(schema.bio_tags());
        }
        let label_embedding = config
            .variant
            .uses_label_embedding()
            .then(|| LabelEmbedding::new(&mut store, &mut rng, d, k));
        Ok(Self {
            config,
            store,
            encoder,
            intent_head,
            slot_head,
            crf,
            label_embedding,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> AttentionVariant {
        self.config.variant
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn intent_head(&self) -> &IntentHead {
        &self.intent_head
    }

    pub fn slot_head(&self) -> &SlotHead {
        &self.slot_head
    }

    pub fn crf(&self) -> &Crf {
        &self.crf
    }

    pub fn label_embedding(&self) -> Option<&LabelEmbedding> {
        self.label_embedding.as_ref()
    }

    pub fn num_intents(&self) -> usize {
        self.intent_head.num_intents()
    }

    pub fn num_tags(&self) -> usize {
        self.crf.num_tags()
    }

    /// Forward pass over `token_ids` (`[CLS]` first, optionally followed by
    /// `[PAD]`). `mask` covers the token positions after `[CLS]`; real
    /// tokens must come before padding. Dropout runs only when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        token_ids: &[usize],
        mask: &[bool],
        mut rng: Option<&mut R>,
    ) -> Result<ForwardOutput> {
        if token_ids.len() != mask.len() + 1 {
            return Err(Error::shape("forward mask", &[token_ids.len()], &[mask.len() + 1]));
        }
        let n = mask.iter().take_while(|&&m| m).count();
        if n == 0 {
            return Err(Error::EmptyUtterance);
        }
        if mask[n..].iter().any(|&m| m) {
            return Err(Error::Contract("padding must follow the real tokens".into()));
        }
        let store = &self.store;
        let key_mask: Vec<bool> = std::iter::once(true).chain(mask.iter().copied()).collect();
        let padded = n < mask.len();
        let context = self.encoder.encode(
            g,
            store,
            token_ids,
            padded.then_some(key_mask.as_slice()),
            rng.as_deref_mut(),
        )?;
        let c0 = g.row(context, 0)?;
        let intent_probs = self.intent_head.probs(g, store, c0, self.config.intent_dropout, rng)?;
        let w = self.label_embedding.map(|le| g.param(store, le.weight));
        let v = compose_slot_inputs(g, self.config.variant, context, intent_probs, w, mask)?;
        let v = if padded { g.slice_rows(v, 0, n)? } else { v };
        let emissions = self.slot_head.emissions(g, store, v)?;
        Ok(ForwardOutput {
            context,
            intent_probs,
            emissions,
        })
    }

    /// Per-utterance losses `(ℒ_ID, ℒ_SF)`.
    pub fn losses<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        utt: &EncodedUtterance,
        rng: Option<&mut R>,
    ) -> Result<(Var, Var)> {
        let mask = vec![true; utt.len()];
        self.padded_losses(g, &utt.token_ids, &mask, utt.intent, &utt.tags, rng)
    }

    pub(crate) fn padded_losses<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        token_ids: &[usize],
        mask: &[bool],
        intent: usize,
        tags: &[usize],
        rng: Option<&mut R>,
    ) -> Result<(Var, Var)> {
        let out = self.forward(g, token_ids, mask, rng)?;
        let l_id = intent_loss(g, out.intent_probs, intent)?;
        let l_sf = self.crf.nll(g, &self.store, out.emissions, tags)?;
        Ok((l_id, l_sf))
    }

    /// Dropout-free intent and Viterbi tag prediction.
    pub fn predict(&self, token_ids: &[usize]) -> Result<Prediction> {
        let mut g = Graph::new();
        let mask = vec![true; token_ids.len().saturating_sub(1)];
        let out = self.forward(&mut g, token_ids, &mask, None::<&mut ChaCha8Rng>)?;
        let intent = predict_intent(g.value(out.intent_probs).data());
        let (tags, _) = self.crf.decode(&self.store, g.value(out.emissions))?;
        Ok(Prediction { intent, tags })
    }

    /// Intent distribution and emissions as plain tensors (no dropout).
    pub fn infer(&self, token_ids: &[usize]) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let mask = vec![true; token_ids.len().saturating_sub(1)];
        let out = self.forward(&mut g, token_ids, &mask, None::<&mut ChaCha8Rng>)?;
        Ok((g.value(out.intent_probs).clone(), g.value(out.emissions).clone()))
    }
}
