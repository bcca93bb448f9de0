//! Run configuration for the command-line tools: a flat `key=value` file
//! merged over built-in defaults, with command-line overrides applied last.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::attention::AttentionVariant;
use crate::encoder::{EncoderConfig, TokenVocab};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

pub const CONFIG_ECHO_FILE: &str = "config.txt";

/// Every setting a subcommand may need, in one flat record.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub variant: AttentionVariant,
    pub constrain_bio: bool,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub intent_dropout: f64,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let enc = EncoderConfig::new(0);
        Self {
            data_dir: None,
            output_dir: PathBuf::from("runs"),
            variant: AttentionVariant::Full,
            constrain_bio: false,
            d_model: enc.d_model,
            layers: enc.n_layers,
            heads: enc.n_heads,
            max_len: enc.max_len,
            dropout: enc.dropout,
            intent_dropout: 0.1,
            train: TrainConfig::default(),
        }
    }
}

/// Keys accepted by [`RunConfig::set`], in the order they are echoed.
pub const KEYS: [&str; 20] = [
    "data_dir",
    "output_dir",
    "variant",
    "constrain_bio",
    "d_model",
    "layers",
    "heads",
    "max_len",
    "dropout",
    "intent_dropout",
    "lambda",
    "lr",
    "epochs",
    "batch_size",
    "seed",
    "weight_decay",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "grad_clip",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "variant" => self.variant = parse(key, v)?,
            "constrain_bio" => self.constrain_bio = parse(key, v)?,
            "d_model" => self.d_model = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "intent_dropout" => self.intent_dropout = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "lr" => self.train.learning_rate = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "adam_beta1" => self.train.adam_betas.0 = parse(key, v)?,
            "adam_beta2" => self.train.adam_betas.1 = parse(key, v)?,
            "adam_eps" => self.train.adam_eps = parse(key, v)?,
            "grad_clip" => {
                self.train.grad_clip = match v {
                    "none" | "off" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::data(origin, Some(i + 1), "expected key=value"))?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::Config(m) => Error::data(origin, Some(i + 1), m),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::data(path, None, e.to_string()))?;
        self.apply_text(&text, path)
    }

    fn value_of(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "data_dir" => self
                .data_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "output_dir" => self.output_dir.display().to_string(),
            "variant" => self.variant.to_string(),
            "constrain_bio" => self.constrain_bio.to_string(),
            "d_model" => self.d_model.to_string(),
            "layers" => self.layers.to_string(),
            "heads" => self.heads.to_string(),
            "max_len" => self.max_len.to_string(),
            "dropout" => self.dropout.to_string(),
            "intent_dropout" => self.intent_dropout.to_string(),
            "lambda" => t.lambda.to_string(),
            "lr" => t.learning_rate.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "seed" => t.seed.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "adam_beta1" => t.adam_betas.0.to_string(),
            "adam_beta2" => t.adam_betas.1.to_string(),
            "adam_eps" => t.adam_eps.to_string(),
            "grad_clip" => t.grad_clip.map_or("none".to_string(), |c| c.to_string()),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// The effective configuration as a loadable `key=value` file.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key}={}", self.value_of(key));
        }
        s
    }

    /// [`Self::to_text`] without the given keys, for comparing runs that
    /// differ only in those settings.
    pub fn to_text_without(&self, skip: &[&str]) -> String {
        let mut s = String::new();
        for key in KEYS.iter().filter(|k| !skip.contains(k)) {
            let _ = writeln!(s, "{key}={}", self.value_of(key));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "data directory {} does not exist",
                    dir.display()
                )));
            }
        }
        self.model_config(TokenVocab::RESERVED.len() + 1).encoder.validate()?;
        if !(0.0..1.0).contains(&self.intent_dropout) {
            return Err(Error::Config("intent_dropout must be in [0,1)".into()));
        }
        Ok(())
    }

    pub fn require_data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::Config("a data directory is required (--data-dir or data_dir=)".into()))
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(vocab_size, self.variant);
        cfg.encoder.d_model = self.d_model;
        cfg.encoder.n_layers = self.layers;
        cfg.encoder.n_heads = self.heads;
        cfg.encoder.max_len = self.max_len;
        cfg.encoder.dropout = self.dropout;
        cfg.intent_dropout = self.intent_dropout;
        cfg.constrain_bio = self.constrain_bio;
        cfg
    }

    /// Writes the effective configuration into `output_dir`.
    pub fn echo(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(CONFIG_ECHO_FILE);
        fs::write(&path, self.to_text())?;
        Ok(path)
    }
}
