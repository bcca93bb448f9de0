//! Subcommands of the `intent-slot` tool. Everything writes its results to
//! a caller-supplied sink so the commands can be driven from tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::archive::SavedModel;
use crate::attention::AttentionVariant;
use crate::config::{RunConfig, CONFIG_ECHO_FILE};
use crate::data::{self, encode_all, load_split, LabelSchema, Utterance};
use crate::encoder::{tokenize_and_index, TokenVocab};
use crate::error::{Error, Result};
use crate::evaluation::{
    categorize_errors, format_prediction, pct, read_predictions, render_error_counts, ErrorDiagnostic, EvalReport,
    LabelSeq,
};
use crate::model::JointModel;
use crate::synthetic;
use crate::training::{
    evaluate, ids_to_labels, predict_labels, rank_results, summarize, train_with, EpochRecord, GridResult, GridSpec,
    MetricTriple, TrainOutcome,
};

pub const MODEL_FILE: &str = "model.json";
pub const LOG_FILE: &str = "train_log.tsv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VALID_REPORT_FILE: &str = "valid_report.txt";
pub const EVAL_REPORT_FILE: &str = "eval_report.txt";
pub const GRID_STATUS_FILE: &str = "grid_status.tsv";
pub const GRID_RESULTS_FILE: &str = "grid_results.tsv";
pub const GRID_BEST_MODEL_FILE: &str = "best_model.json";
pub const SEEDS_FILE: &str = "seeds.tsv";

#[derive(Debug, Parser)]
#[command(name = "intent-slot", version, about = "Joint intent detection and slot filling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and keep the best epoch.
    Train(RunArgs),
    /// Train one model per (learning rate, lambda) cell and rank the cells.
    Gridsearch(GridArgs),
    /// Score a checkpoint on a split, or train and score one model per seed.
    Eval(EvalArgs),
    /// Tag raw utterances, one per line.
    Predict(PredictArgs),
    /// Break prediction errors down by category.
    Errors(ErrorsArgs),
    /// Write the synthetic flight corpus in the three-file layout.
    Synth(SynthArgs),
}

/// Settings shared by the training-based subcommands. Each flag overrides
/// the key of the same name in the `--config` file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// `key=value` file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full, cls_context, scaled_slot, concat_cls or baseline.
    #[arg(long)]
    pub variant: Option<AttentionVariant>,
    /// Forbid invalid BIO transitions during decoding.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub constrain_bio: Option<bool>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub intent_dropout: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Global gradient-norm bound, or `none`.
    #[arg(long)]
    pub grad_clip: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        [
            ("data_dir", path(&self.data_dir)),
            ("output_dir", path(&self.output_dir)),
            ("variant", opt(&self.variant)),
            ("constrain_bio", opt(&self.constrain_bio)),
            ("d_model", opt(&self.d_model)),
            ("layers", opt(&self.layers)),
            ("heads", opt(&self.heads)),
            ("max_len", opt(&self.max_len)),
            ("dropout", opt(&self.dropout)),
            ("intent_dropout", opt(&self.intent_dropout)),
            ("lambda", opt(&self.lambda)),
            ("lr", opt(&self.lr)),
            ("epochs", opt(&self.epochs)),
            ("batch_size", opt(&self.batch_size)),
            ("seed", opt(&self.seed)),
            ("weight_decay", opt(&self.weight_decay)),
            ("adam_beta1", opt(&self.adam_beta1)),
            ("adam_beta2", opt(&self.adam_beta2)),
            ("adam_eps", opt(&self.adam_eps)),
            ("grad_clip", self.grad_clip.clone()),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated learning rates (default 1e-5,...,5e-5).
    #[arg(long)]
    pub lrs: Option<String>,
    /// Comma-separated lambdas (default 0.05,...,0.95).
    #[arg(long)]
    pub lambdas: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Trained model to score.
    #[arg(long, conflicts_with = "seeds")]
    pub checkpoint: Option<PathBuf>,
    /// train, dev or test.
    #[arg(long, default_value = data::TEST_DIR)]
    pub split: String,
    /// Comma-separated seeds; trains one model per seed.
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// One utterance per line, tokens separated by spaces.
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ErrorsArgs {
    /// Split directory holding the gold files.
    #[arg(long)]
    pub gold: PathBuf,
    /// Prediction file in the `predict` output format.
    #[arg(long)]
    pub predictions: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|e| Error::Config(format!("{what}: cannot parse {s:?}: {e}")))
        })
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::Config(format!("{what}: empty list")))
            } else {
                Ok(v)
            }
        })
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args, out),
        Command::Gridsearch(args) => cmd_gridsearch(&args, out),
        Command::Eval(args) => cmd_eval(&args, out),
        Command::Predict(args) => cmd_predict(&args, out),
        Command::Errors(args) => cmd_errors(&args, out),
        Command::Synth(args) => cmd_synth(&args, out),
    }
}

/// Splits of a corpus directory, the label inventory and the training
/// vocabulary. The test split is optional; its labels join the inventory
/// but none of its examples are used for training or selection.
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
    pub test: Option<Vec<Utterance>>,
    pub schema: LabelSchema,
    pub vocab: TokenVocab,
}

impl Corpus {
    pub fn load(data_dir: &Path) -> Result<Self> {
        let train = load_split(&data_dir.join(data::TRAIN_DIR))?;
        let valid = load_split(&data_dir.join(data::VALID_DIR))?;
        let test_dir = data_dir.join(data::TEST_DIR);
        let test = if test_dir.is_dir() {
            Some(load_split(&test_dir)?)
        } else {
            None
        };
        let mut splits: Vec<&[Utterance]> = vec![&train, &valid];
        if let Some(t) = &test {
            splits.push(t);
        }
        let schema = LabelSchema::build(&splits);
        let vocab = TokenVocab::build(&train);
        Ok(Self {
            train,
            valid,
            test,
            schema,
            vocab,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Utterance]> {
        match name {
            data::TRAIN_DIR => Ok(&self.train),
            data::VALID_DIR => Ok(&self.valid),
            data::TEST_DIR => self
                .test
                .as_deref()
                .ok_or_else(|| Error::Config("corpus has no test split".into())),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, dev or test)"
            ))),
        }
    }
}

/// Trains a fresh model from `cfg`, reporting each epoch to `on_epoch`.
pub fn train_model<F: FnMut(&EpochRecord)>(
    cfg: &RunConfig,
    corpus: &Corpus,
    on_epoch: F,
) -> Result<(SavedModel, TrainOutcome)> {
    let model_cfg = cfg.model_config(corpus.vocab.len());
    let mut model = JointModel::new(model_cfg, &corpus.schema, cfg.train.seed)?;
    let train = encode_all(&corpus.train, &corpus.vocab, &corpus.schema)?;
    let valid = encode_all(&corpus.valid, &corpus.vocab, &corpus.schema)?;
    let outcome = train_with(&mut model, &train, &valid, &corpus.schema, &cfg.train, on_epoch)?;
    Ok((
        SavedModel::new(model, corpus.vocab.clone(), corpus.schema.clone()),
        outcome,
    ))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    variant: AttentionVariant,
    parameters: usize,
    seed: u64,
    lambda: f64,
    learning_rate: f64,
    best_epoch: usize,
    valid_intent_accuracy: f64,
    valid_slot_f1: f64,
    avg_score: f64,
    valid: &'a EvalReport,
    epochs: &'a [EpochRecord],
}

fn cmd_train(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.resolve()?;
    let corpus = Corpus::load(cfg.require_data_dir()?)?;
    cfg.echo()?;
    let dir = &cfg.output_dir;
    writeln!(out, "{}", EpochRecord::TSV_HEADER)?;
    let mut log_err = None;
    let (saved, outcome) = train_model(&cfg, &corpus, |r| {
        if let Err(e) = writeln!(out, "{}", r.to_tsv()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::Io(e));
    }
    saved.save(&dir.join(MODEL_FILE))?;
    let mut log = String::from(EpochRecord::TSV_HEADER);
    log.push('\n');
    for r in &outcome.log {
        log.push_str(&r.to_tsv());
        log.push('\n');
    }
    fs::write(dir.join(LOG_FILE), log)?;
    let valid_enc = encode_all(&corpus.valid, &corpus.vocab, &corpus.schema)?;
    let report = evaluate(&saved.model, &valid_enc, &corpus.schema)?;
    fs::write(dir.join(VALID_REPORT_FILE), report.to_text())?;
    let summary = TrainSummary {
        variant: cfg.variant,
        parameters: saved.model.store().num_scalars(),
        seed: cfg.train.seed,
        lambda: cfg.train.lambda,
        learning_rate: cfg.train.learning_rate,
        best_epoch: outcome.best.epoch,
        valid_intent_accuracy: outcome.best.valid_intent_accuracy,
        valid_slot_f1: outcome.best.valid_slot_f1,
        avg_score: outcome.best.avg_score,
        valid: &report,
        epochs: &outcome.log,
    };
    fs::write(
        dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    writeln!(
        out,
        "best epoch {} (valid intent acc {}, slot F1 {}); model written to {}",
        outcome.best.epoch,
        pct(outcome.best.valid_intent_accuracy),
        pct(outcome.best.valid_slot_f1),
        dir.join(MODEL_FILE).display()
    )?;
    Ok(())
}

fn cell_key(lr: f64, lambda: f64) -> String {
    format!("{lr}\t{lambda}")
}

fn read_grid_status(path: &Path) -> Result<BTreeMap<String, GridResult>> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    for (i, line) in fs::read_to_string(path)?.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::data(path, Some(i + 1), "expected lr, lambda, best_epoch, avg_score");
        if f.len() != 4 {
            return Err(bad());
        }
        let r = GridResult {
            learning_rate: f[0].parse().map_err(|_| bad())?,
            lambda: f[1].parse().map_err(|_| bad())?,
            best_epoch: f[2].parse().map_err(|_| bad())?,
            best_avg_score: f64::from_bits(u64::from_str_radix(f[3], 16).map_err(|_| bad())?),
        };
        done.insert(cell_key(r.learning_rate, r.lambda), r);
    }
    Ok(done)
}

/// Runs every grid cell not yet recorded in the status file, so an
/// interrupted search picks up where it stopped.
fn cmd_gridsearch(args: &GridArgs, out: &mut dyn Write) -> Result<()> {
    let base = args.run.resolve()?;
    let mut grid = GridSpec::default();
    if let Some(lrs) = &args.lrs {
        grid.learning_rates = parse_list("--lrs", lrs)?;
    }
    if let Some(ls) = &args.lambdas {
        grid.lambdas = parse_list("--lambdas", ls)?;
    }
    grid.validate()?;
    let corpus = Corpus::load(base.require_data_dir()?)?;
    let dir = base.output_dir.clone();
    fs::create_dir_all(&dir)?;

    let status_path = dir.join(GRID_STATUS_FILE);
    let echo_path = dir.join(CONFIG_ECHO_FILE);
    if status_path.exists() && echo_path.exists() {
        let mut previous = RunConfig::default();
        previous.apply_file(&echo_path)?;
        let skip = ["lr", "lambda", "output_dir"];
        if previous.to_text_without(&skip) != base.to_text_without(&skip) {
            return Err(Error::Config(format!(
                "{} holds a grid search with a different configuration",
                dir.display()
            )));
        }
    }
    base.echo()?;
    let mut done = read_grid_status(&status_path)?;
    if !status_path.exists() {
        fs::write(&status_path, "lr\tlambda\tbest_epoch\tavg_score_bits\n")?;
    }
    let mut best: Option<GridResult> = None;
    for (lr, lambda) in grid.cells() {
        if let Some(r) = done.get(&cell_key(lr, lambda)) {
            if best.as_ref().is_none_or(|b| r.best_avg_score > b.best_avg_score) {
                best = Some(r.clone());
            }
        }
    }
    let cells = grid.cells();
    let total = cells.len();
    for (i, (lr, lambda)) in cells.into_iter().enumerate() {
        let key = cell_key(lr, lambda);
        if done.contains_key(&key) {
            writeln!(out, "cell {}/{total} lr={lr} lambda={lambda}: already done", i + 1)?;
            continue;
        }
        let mut cfg = base.clone();
        cfg.train.learning_rate = lr;
        cfg.train.lambda = lambda;
        let (saved, outcome) = train_model(&cfg, &corpus, |_| {})?;
        let result = GridResult {
            learning_rate: lr,
            lambda,
            best_epoch: outcome.best.epoch,
            best_avg_score: outcome.best.avg_score,
        };
        if best.as_ref().is_none_or(|b| result.best_avg_score > b.best_avg_score) {
            saved.save(&dir.join(GRID_BEST_MODEL_FILE))?;
            best = Some(result.clone());
        }
        let mut status = OpenOptions::new().append(true).open(&status_path)?;
        writeln!(
            status,
            "{lr}\t{lambda}\t{}\t{:016x}",
            result.best_epoch,
            result.best_avg_score.to_bits()
        )?;
        writeln!(
            out,
            "cell {}/{total} lr={lr} lambda={lambda}: best epoch {}, avg score {}",
            i + 1,
            result.best_epoch,
            pct(result.best_avg_score)
        )?;
        done.insert(key, result);
    }

    let mut results: Vec<GridResult> = grid
        .cells()
        .iter()
        .map(|&(lr, l)| done[&cell_key(lr, l)].clone())
        .collect();
    rank_results(&mut results);
    let mut table = String::from("rank\tlr\tlambda\tbest_epoch\tavg_score\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}",
            i + 1,
            r.learning_rate,
            r.lambda,
            r.best_epoch,
            pct(r.best_avg_score)
        );
    }
    fs::write(dir.join(GRID_RESULTS_FILE), &table)?;
    out.write_all(table.as_bytes())?;
    Ok(())
}

/// Fails when `utts` carry labels the model was not built for.
pub fn check_schema(schema: &LabelSchema, utts: &[Utterance]) -> Result<()> {
    for (i, u) in utts.iter().enumerate() {
        if schema.intent_id(&u.intent).is_none() {
            return Err(Error::Config(format!(
                "schema mismatch: utterance {} has intent {:?} unknown to the checkpoint",
                i + 1,
                u.intent
            )));
        }
        if let Some(t) = u.tags.iter().find(|t| schema.tag_id(t).is_none()) {
            return Err(Error::Config(format!(
                "schema mismatch: utterance {} has tag {t:?} unknown to the checkpoint",
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn evaluate_saved(saved: &SavedModel, utts: &[Utterance]) -> Result<EvalReport> {
    check_schema(&saved.schema, utts)?;
    let enc = encode_all(utts, &saved.vocab, &saved.schema)?;
    evaluate(&saved.model, &enc, &saved.schema)
}

fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.run.resolve()?;
    let data_dir = cfg.require_data_dir()?;
    match (&args.checkpoint, &args.seeds) {
        (Some(ckpt), None) => {
            let saved = SavedModel::load(ckpt)?;
            let utts = load_split(&data_dir.join(&args.split))?;
            let report = evaluate_saved(&saved, &utts)?;
            let text = report.to_text();
            out.write_all(text.as_bytes())?;
            if args.run.output_dir.is_some() {
                fs::create_dir_all(&cfg.output_dir)?;
                fs::write(cfg.output_dir.join(EVAL_REPORT_FILE), text)?;
            }
            Ok(())
        }
        (None, Some(seeds)) => {
            let seeds: Vec<u64> = parse_list("--seeds", seeds)?;
            let corpus = Corpus::load(data_dir)?;
            let utts = corpus.split(&args.split)?;
            let mut rows = Vec::new();
            writeln!(out, "seed\tintent_acc\tslot_f1\tsentence_acc")?;
            for &seed in &seeds {
                let mut c = cfg.clone();
                c.train.seed = seed;
                let (saved, _) = train_model(&c, &corpus, |_| {})?;
                let m = MetricTriple::from(&evaluate_saved(&saved, utts)?);
                writeln!(out, "{}", metric_row(&seed.to_string(), &m))?;
                rows.push((seed, m));
            }
            let mut text = String::new();
            if rows.len() >= 2 {
                let s = summarize(rows.clone())?;
                let _ = writeln!(
                    text,
                    "mean±std\t{}±{}\t{}±{}\t{}±{}",
                    pct(s.mean.intent_accuracy),
                    pct(s.std.intent_accuracy),
                    pct(s.mean.slot_f1),
                    pct(s.std.slot_f1),
                    pct(s.mean.sentence_accuracy),
                    pct(s.std.sentence_accuracy)
                );
            }
            out.write_all(text.as_bytes())?;
            if args.run.output_dir.is_some() {
                cfg.echo()?;
                let mut table = String::from("seed\tintent_acc\tslot_f1\tsentence_acc\n");
                for (seed, m) in &rows {
                    table.push_str(&metric_row(&seed.to_string(), m));
                    table.push('\n');
                }
                table.push_str(&text);
                fs::write(cfg.output_dir.join(SEEDS_FILE), table)?;
            }
            Ok(())
        }
        _ => Err(Error::Config(
            "eval needs exactly one of --checkpoint or --seeds".into(),
        )),
    }
}

fn metric_row(label: &str, m: &MetricTriple) -> String {
    format!(
        "{label}\t{}\t{}\t{}",
        pct(m.intent_accuracy),
        pct(m.slot_f1),
        pct(m.sentence_accuracy)
    )
}

/// Predicts intent and tags for whitespace-tokenized lines.
pub fn predict_lines(saved: &SavedModel, text: &str, origin: &Path) -> Result<Vec<LabelSeq>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(Error::data(origin, Some(i + 1), "empty line"));
            }
            let ids = tokenize_and_index(&tokens, &saved.vocab)?;
            let p = saved.model.predict(&ids)?;
            Ok(ids_to_labels(&saved.schema, p.intent, &p.tags))
        })
        .collect()
}

fn cmd_predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let saved = SavedModel::load(&args.checkpoint)?;
    let text = fs::read_to_string(&args.input).map_err(|e| Error::data(&args.input, None, e.to_string()))?;
    let preds = predict_lines(&saved, &text, &args.input)?;
    let mut body = String::new();
    for p in &preds {
        body.push_str(&format_prediction(p));
        body.push('\n');
    }
    match &args.output {
        Some(path) => fs::write(path, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn span_text(tokens: &[String], span: &crate::evaluation::Span) -> String {
    format!("{} \"{}\"", span.slot_type, tokens[span.start..=span.end].join(" "))
}

pub fn render_diagnostic(d: &ErrorDiagnostic, tokens: &[String]) -> String {
    let mut s = format!("{}\t{:?}", d.utterance + 1, d.category);
    if let (Some(g), Some(p)) = (&d.gold_intent, &d.predicted_intent) {
        let _ = write!(s, "\tgold {g}\tpredicted {p}");
    }
    if let Some(span) = &d.gold {
        let _ = write!(s, "\tgold {}", span_text(tokens, span));
    }
    if let Some(span) = &d.predicted {
        let _ = write!(s, "\tpredicted {}", span_text(tokens, span));
    }
    s
}

fn cmd_errors(args: &ErrorsArgs, out: &mut dyn Write) -> Result<()> {
    let gold_utts = load_split(&args.gold)?;
    let pred = read_predictions(&args.predictions)?;
    if pred.len() != gold_utts.len() {
        return Err(Error::Alignment(format!(
            "{} gold utterances but {} predictions",
            gold_utts.len(),
            pred.len()
        )));
    }
    let gold: Vec<LabelSeq> = gold_utts.iter().map(LabelSeq::from).collect();
    let report = categorize_errors(&gold, &pred)?;
    let mut text = render_error_counts(&report.counts);
    text.push('\n');
    for d in &report.diagnostics {
        text.push_str(&render_diagnostic(d, &gold_utts[d.utterance].tokens));
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let splits = synthetic::splits(args.seed);
    splits.write(&args.output_dir)?;
    writeln!(
        out,
        "wrote {} / {} / {} utterances to {}",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
        args.output_dir.display()
    )?;
    Ok(())
}

/// Predictions for already-encoded utterances, formatted as `predict` does.
pub fn prediction_lines(saved: &SavedModel, utts: &[Utterance]) -> Result<Vec<String>> {
    let enc = encode_all(utts, &saved.vocab, &saved.schema)?;
    Ok(predict_labels(&saved.model, &enc, &saved.schema)?
        .iter()
        .map(format_prediction)
        .collect())
}
