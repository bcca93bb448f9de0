//! Self-contained model checkpoints: configuration, vocabulary, label
//! inventory and every parameter, stored as JSON with each `f64` written as
//! its IEEE-754 bit pattern in hex so reloading is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::LabelSchema;
use crate::encoder::TokenVocab;
use crate::error::{Error, Result};
use crate::model::{JointModel, ModelConfig};

pub const FORMAT: &str = "intent-slot-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredParam {
    name: String,
    shape: Vec<usize>,
    bits: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Stored {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    intents: Vec<String>,
    slot_types: Vec<String>,
    params: Vec<StoredParam>,
}

/// A trained model with everything needed to run it on raw text.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub model: JointModel,
    pub vocab: TokenVocab,
    pub schema: LabelSchema,
}

impl SavedModel {
    pub fn new(model: JointModel, vocab: TokenVocab, schema: LabelSchema) -> Self {
        Self { model, vocab, schema }
    }

    pub fn to_json(&self) -> String {
        let store = self.model.store();
        let params = store
            .iter()
            .map(|(_, name, value)| StoredParam {
                name: name.to_string(),
                shape: value.shape().to_vec(),
                bits: value.data().iter().map(|x| format!("{:016x}", x.to_bits())).collect(),
            })
            .collect();
        let stored = Stored {
            format: FORMAT.to_string(),
            version: VERSION,
            config: self.model.config().clone(),
            vocab: self.vocab.tokens()[TokenVocab::RESERVED.len()..].to_vec(),
            intents: self.schema.intents().to_vec(),
            slot_types: self.schema.slot_types().to_vec(),
            params,
        };
        serde_json::to_string(&stored).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: Stored =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if stored.format != FORMAT || stored.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                stored.format, stored.version
            )));
        }
        let vocab = TokenVocab::from_tokens(stored.vocab);
        if vocab.len() != stored.config.encoder.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} entries, config expects {}",
                vocab.len(),
                stored.config.encoder.vocab_size
            )));
        }
        let schema = LabelSchema::new(stored.intents, stored.slot_types)?;
        let mut model = JointModel::new(stored.config, &schema, 0)?;
        let store = model.store_mut();
        if store.len() != stored.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} stored parameters, model has {}",
                stored.params.len(),
                store.len()
            )));
        }
        for p in stored.params {
            let id = store
                .find(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", p.name)))?;
            if store.value(id).shape() != p.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    p.name,
                    p.shape,
                    store.value(id).shape()
                )));
            }
            let data = p
                .bits
                .iter()
                .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", p.name)))?;
            *store.value_mut(id) = Tensor::new(p.shape, data)?;
        }
        Ok(Self { model, vocab, schema })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
