//! Joint objective, AdamW, and the training protocol: per-epoch shuffling,
//! validation after every epoch, checkpoint selection on the mean of intent
//! accuracy and slot F1, grid search and multi-seed aggregation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::data::{make_batches, EncodedUtterance, LabelSchema};
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, LabelSeq};
use crate::model::JointModel;

/// Stream offset separating the dropout RNG from initialization.
const DROPOUT_STREAM: u64 = 0x5851_f42d_4c95_7f2d;
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mixture weight of the intent loss, strictly inside (0, 1).
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_decay: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            learning_rate: 5e-5,
            batch_size: 32,
            epochs: 50,
            seed: 1,
            weight_decay: 0.01,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            grad_clip: Some(1.0),
        }
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda must be in (0,1), got {lambda}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("adam betas must be in [0,1)".into()));
        }
        if self.weight_decay < 0.0 || self.adam_eps <= 0.0 {
            return Err(Error::Config("weight_decay must be >= 0 and adam_eps > 0".into()));
        }
        if self.grad_clip.is_some_and(|c| c <= 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// `λ ℒ_ID + (1 − λ) ℒ_SF`.
pub fn joint_loss(g: &mut Graph, l_id: Var, l_sf: Var, lambda: f64) -> Result<Var> {
    check_lambda(lambda)?;
    let a = g.scale(l_id, lambda);
    let b = g.scale(l_sf, 1.0 - lambda);
    g.add(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamWConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            betas: c.adam_betas,
            eps: c.adam_eps,
            weight_decay: c.weight_decay,
        }
    }
}

/// One AdamW update of a flat parameter with bias-corrected moments.
/// Weight decay shrinks the parameter directly and never enters the moments.
/// `step` counts from 1.
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    cfg: &AdamWConfig,
) -> Result<()> {
    let n = param.len();
    if grad.len() != n || m.len() != n || v.len() != n {
        return Err(Error::Contract(format!(
            "optimizer state mismatch: param {n}, grad {}, m {}, v {}",
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let lr = cfg.learning_rate;
    for i in 0..n {
        param[i] -= lr * cfg.weight_decay * param[i];
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// AdamW state for every parameter of a store.
#[derive(Clone, Debug)]
pub struct AdamW {
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, _, v)| Tensor::zeros(v.shape())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients held in `store`.
    pub fn step(&mut self, store: &mut ParamStore, cfg: &AdamWConfig) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step += 1;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let grad = store.grad(id).data().to_vec();
            let i = id.index();
            adamw_update(
                store.value_mut(id).data_mut(),
                &grad,
                self.first[i].data_mut(),
                self.second[i].data_mut(),
                self.step,
                cfg,
            )?;
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let norm = ids
        .iter()
        .map(|&id| store.grad(id).data().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-12);
        for id in ids {
            for g in store.grad_mut(id).data_mut() {
                *g *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_intent_accuracy: f64,
    pub valid_slot_f1: f64,
    pub avg_score: f64,
}

impl EpochRecord {
    pub const TSV_HEADER: &'static str = "epoch\ttrain_loss\tvalid_intent_acc\tvalid_slot_f1\tavg_score";

    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.4}\t{:.4}\t{:.4}",
            self.epoch,
            self.train_loss,
            100.0 * self.valid_intent_accuracy,
            100.0 * self.valid_slot_f1,
            100.0 * self.avg_score
        )
    }
}

/// Weights of the best epoch with the validation scores that selected it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub weights: Vec<Tensor>,
    pub valid_intent_accuracy: f64,
    pub valid_slot_f1: f64,
    pub avg_score: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
}

/// Runs the model over `utts` without dropout and maps ids back to labels.
pub fn predict_labels(model: &JointModel, utts: &[EncodedUtterance], schema: &LabelSchema) -> Result<Vec<LabelSeq>> {
    utts.iter()
        .map(|u| {
            let p = model.predict(&u.token_ids)?;
            Ok(ids_to_labels(schema, p.intent, &p.tags))
        })
        .collect()
}

pub fn ids_to_labels(schema: &LabelSchema, intent: usize, tags: &[usize]) -> LabelSeq {
    LabelSeq {
        intent: schema.intents()[intent].clone(),
        tags: tags.iter().map(|&t| schema.bio_tags()[t].clone()).collect(),
    }
}

pub fn evaluate(model: &JointModel, utts: &[EncodedUtterance], schema: &LabelSchema) -> Result<EvalReport> {
    let gold: Vec<LabelSeq> = utts.iter().map(|u| ids_to_labels(schema, u.intent, &u.tags)).collect();
    let pred = predict_labels(model, utts, schema)?;
    EvalReport::compute(&gold, &pred)
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ SHUFFLE_STREAM.wrapping_mul(epoch as u64 + 1)
}

/// Mean batch loss over one batch; gradients are left in the graph.
fn batch_loss(
    model: &JointModel,
    g: &mut Graph,
    batch: &crate::data::Batch,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let mut id_terms = Vec::with_capacity(batch.len());
    let mut sf_terms = Vec::with_capacity(batch.len());
    for b in 0..batch.len() {
        let (l_id, l_sf) = model.padded_losses(
            g,
            &batch.token_ids[b],
            &batch.mask[b],
            batch.intents[b],
            &batch.tags[b],
            Some(&mut *rng),
        )?;
        id_terms.push(l_id);
        sf_terms.push(l_sf);
    }
    let inv = 1.0 / batch.len() as f64;
    let mean = |g: &mut Graph, terms: &[Var]| -> Result<Var> {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = g.add(acc, t)?;
        }
        Ok(g.scale(acc, inv))
    };
    let l_id = mean(g, &id_terms)?;
    let l_sf = mean(g, &sf_terms)?;
    joint_loss(g, l_id, l_sf, lambda)
}

/// Trains for `config.epochs` epochs, validating after each. The model ends
/// up holding the weights of the best checkpoint (highest average of
/// validation intent accuracy and slot F1; ties keep the earlier epoch).
pub fn train(
    model: &mut JointModel,
    train_set: &[EncodedUtterance],
    valid_set: &[EncodedUtterance],
    schema: &LabelSchema,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_set, valid_set, schema, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F: FnMut(&EpochRecord)>(
    model: &mut JointModel,
    train_set: &[EncodedUtterance],
    valid_set: &[EncodedUtterance],
    schema: &LabelSchema,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::data("train", None, "training set is empty"));
    }
    if model.num_intents() != schema.num_intents() || model.num_tags() != schema.num_tags() {
        return Err(Error::Config("model and schema disagree on label counts".into()));
    }
    let opt_cfg = AdamWConfig::from(config);
    let mut optimizer = AdamW::new(model.store());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_STREAM);
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 0..config.epochs {
        let batches = make_batches(train_set, config.batch_size, shuffle_seed(config.seed, epoch));
        let mut total = 0.0;
        for batch in &batches {
            let mut g = Graph::new();
            let loss = batch_loss(model, &mut g, batch, config.lambda, &mut rng)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            total += value * batch.len() as f64;
            g.backward(loss)?;
            let store = model.store_mut();
            store.zero_grads();
            store.accumulate_grads(&g);
            if let Some(max) = config.grad_clip {
                clip_grad_norm(store, max);
            }
            optimizer.step(store, &opt_cfg)?;
        }
        let report = evaluate(model, valid_set, schema)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            valid_intent_accuracy: report.intent_accuracy,
            valid_slot_f1: report.slot_f1,
            avg_score: report.avg_score(),
        };
        on_epoch(&record);
        if best.as_ref().is_none_or(|b| record.avg_score > b.avg_score) {
            best = Some(Checkpoint {
                epoch,
                weights: model.store().snapshot(),
                valid_intent_accuracy: record.valid_intent_accuracy,
                valid_slot_f1: record.valid_slot_f1,
                avg_score: record.avg_score,
            });
        }
        log.push(record);
    }
    let best = best.ok_or_else(|| Error::Config("epochs must be at least 1".into()))?;
    model.store_mut().restore(&best.weights);
    Ok(TrainOutcome { best, log })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for GridSpec {
    /// Learning rates 1e-5..5e-5 and λ from 0.05 to 0.95 in steps of 0.05.
    fn default() -> Self {
        Self {
            learning_rates: vec![1e-5, 2e-5, 3e-5, 4e-5, 5e-5],
            lambdas: (1..=19).map(|i| i as f64 / 20.0).collect(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        if let Some(lr) = self.learning_rates.iter().find(|lr| !lr.is_finite() || **lr <= 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        self.lambdas.iter().try_for_each(|&l| check_lambda(l))
    }

    /// Cells in learning-rate-major order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.learning_rates
            .iter()
            .flat_map(|&lr| self.lambdas.iter().map(move |&l| (lr, l)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub learning_rate: f64,
    pub lambda: f64,
    pub best_epoch: usize,
    pub best_avg_score: f64,
}

/// Sorts descending by score; equal scores keep enumeration order.
pub fn rank_results(results: &mut [GridResult]) {
    results.sort_by(|a, b| b.best_avg_score.total_cmp(&a.best_avg_score));
}

/// Trains one fresh model per grid cell and ranks the cells by their best
/// validation score.
pub fn grid_search<F>(
    mut model_factory: F,
    grid: &GridSpec,
    base: &TrainConfig,
    train_set: &[EncodedUtterance],
    valid_set: &[EncodedUtterance],
    schema: &LabelSchema,
) -> Result<Vec<GridResult>>
where
    F: FnMut(&TrainConfig) -> Result<JointModel>,
{
    grid.validate()?;
    let mut results = Vec::new();
    for (lr, lambda) in grid.cells() {
        let cfg = TrainConfig {
            learning_rate: lr,
            lambda,
            ..base.clone()
        };
        let mut model = model_factory(&cfg)?;
        let outcome = train(&mut model, train_set, valid_set, schema, &cfg)?;
        results.push(GridResult {
            learning_rate: lr,
            lambda,
            best_epoch: outcome.best.epoch,
            best_avg_score: outcome.best.avg_score,
        });
    }
    rank_results(&mut results);
    Ok(results)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricTriple {
    pub intent_accuracy: f64,
    pub slot_f1: f64,
    pub sentence_accuracy: f64,
}

impl From<&EvalReport> for MetricTriple {
    fn from(r: &EvalReport) -> Self {
        Self {
            intent_accuracy: r.intent_accuracy,
            slot_f1: r.slot_f1,
            sentence_accuracy: r.sentence_accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultiSeedSummary {
    pub rows: Vec<(u64, MetricTriple)>,
    pub mean: MetricTriple,
    /// Sample standard deviation (n − 1 denominator).
    pub std: MetricTriple,
}

/// Mean and sample standard deviation. Works on offsets from the first
/// value, so repeated identical values give a standard deviation of exactly 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let pivot = values[0];
    let shift = values.iter().map(|v| v - pivot).sum::<f64>() / n;
    let mean = pivot + shift;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - pivot - shift).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(rows: Vec<(u64, MetricTriple)>) -> Result<MultiSeedSummary> {
    if rows.len() < 2 {
        return Err(Error::Config("multi-seed runs need at least 2 seeds".into()));
    }
    let col = |f: fn(&MetricTriple) -> f64| mean_and_std(&rows.iter().map(|(_, m)| f(m)).collect::<Vec<_>>());
    let (ia, ia_s) = col(|m| m.intent_accuracy);
    let (sf, sf_s) = col(|m| m.slot_f1);
    let (sa, sa_s) = col(|m| m.sentence_accuracy);
    Ok(MultiSeedSummary {
        rows,
        mean: MetricTriple {
            intent_accuracy: ia,
            slot_f1: sf,
            sentence_accuracy: sa,
        },
        std: MetricTriple {
            intent_accuracy: ia_s,
            slot_f1: sf_s,
            sentence_accuracy: sa_s,
        },
    })
}

/// Runs `run` once per seed and aggregates the resulting test metrics.
pub fn multi_seed<F>(seeds: &[u64], mut run: F) -> Result<MultiSeedSummary>
where
    F: FnMut(u64) -> Result<EvalReport>,
{
    if seeds.len() < 2 {
        return Err(Error::Config("multi-seed runs need at least 2 seeds".into()));
    }
    let rows = seeds
        .iter()
        .map(|&s| run(s).map(|r| (s, MetricTriple::from(&r))))
        .collect::<Result<Vec<_>>>()?;
    summarize(rows)
}

#[cfg(test)]
mod tests;
