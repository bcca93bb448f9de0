//! Intent accuracy, exact-match slot F1, sentence accuracy and the
//! five-way error breakdown (WI / MS / SS / WB / WL).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::data::{split_tag, Utterance};
use crate::error::{Error, Result};

/// Slot span with inclusive token bounds.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Span {
    pub slot_type: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn same_bounds(&self, other: &Span) -> bool {
        self.start == other.start && self.end == other.end
    }
}

/// conlleval-style span extraction. `I-x` that does not continue an open
/// `x` span opens a new one; malformed tags act like `O`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        match split_tag(tag.as_ref()) {
            Some(('I', ty)) if open.as_ref().is_some_and(|s| s.slot_type == ty) => {
                if let Some(s) = open.as_mut() {
                    s.end = i;
                }
            }
            Some((_, ty)) => {
                spans.extend(open.take());
                open = Some(Span {
                    slot_type: ty.to_string(),
                    start: i,
                    end: i,
                });
            }
            None => spans.extend(open.take()),
        }
    }
    spans.extend(open);
    spans
}

/// Gold or predicted labels of one utterance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelSeq {
    pub intent: String,
    pub tags: Vec<String>,
}

impl From<&Utterance> for LabelSeq {
    fn from(u: &Utterance) -> Self {
        Self {
            intent: u.intent.clone(),
            tags: u.tags.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlotScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_aligned(what: &str, gold: usize, pred: usize) -> Result<()> {
    if gold != pred {
        return Err(Error::Alignment(format!("{what}: {gold} gold vs {pred} predicted")));
    }
    Ok(())
}

/// Micro-averaged exact-span precision, recall and F1.
///
/// When neither side has any span the scores are all 1; otherwise an empty
/// denominator gives 0.
pub fn slot_f1<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<SlotScores> {
    check_aligned("utterances", gold.len(), pred.len())?;
    let (mut n_gold, mut n_pred, mut correct) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Alignment(format!(
                "utterance {i}: {} gold tags vs {} predicted",
                g.len(),
                p.len()
            )));
        }
        let gs = extract_spans(g);
        let ps = extract_spans(p);
        n_gold += gs.len();
        n_pred += ps.len();
        correct += ps.iter().filter(|s| gs.contains(s)).count();
    }
    if n_gold == 0 && n_pred == 0 {
        return Ok(SlotScores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let precision = ratio(correct, n_pred);
    let recall = ratio(correct, n_gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(SlotScores { precision, recall, f1 })
}

pub fn intent_accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[S], pred: &[T]) -> Result<f64> {
    check_aligned("intents", gold.len(), pred.len())?;
    let hits = gold.iter().zip(pred).filter(|(g, p)| g.as_ref() == p.as_ref()).count();
    Ok(ratio(hits, gold.len()))
}

/// Fraction of utterances whose intent and whole tag sequence are both
/// correct.
pub fn sentence_accuracy<A, B, S, T>(
    gold_intents: &[A],
    pred_intents: &[B],
    gold_tags: &[Vec<S>],
    pred_tags: &[Vec<T>],
) -> Result<f64>
where
    A: AsRef<str>,
    B: AsRef<str>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    check_aligned("intents", gold_intents.len(), pred_intents.len())?;
    check_aligned("tag sequences", gold_tags.len(), pred_tags.len())?;
    check_aligned("intents vs tag sequences", gold_intents.len(), gold_tags.len())?;
    let mut hits = 0;
    for i in 0..gold_intents.len() {
        let intent_ok = gold_intents[i].as_ref() == pred_intents[i].as_ref();
        let (g, p) = (&gold_tags[i], &pred_tags[i]);
        let tags_ok = g.len() == p.len() && g.iter().zip(p).all(|(a, b)| a.as_ref() == b.as_ref());
        if intent_ok && tags_ok {
            hits += 1;
        }
    }
    Ok(ratio(hits, gold_intents.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ErrorCategory {
    /// Wrong intent.
    WI,
    /// Gold span overlapped by no predicted span.
    MS,
    /// Predicted span over gold `O` tokens only.
    SS,
    /// Predicted span partially overlapping a gold span.
    WB,
    /// Exact bounds, wrong slot type.
    WL,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ErrorCounts {
    pub wi: usize,
    pub ms: usize,
    pub ss: usize,
    pub wb: usize,
    pub wl: usize,
    /// Subset of `wb` where no overlapped gold span has the predicted type.
    pub wb_cross_type: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.wi + self.ms + self.ss + self.wb + self.wl
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ErrorDiagnostic {
    pub utterance: usize,
    pub category: ErrorCategory,
    pub gold: Option<Span>,
    pub predicted: Option<Span>,
    pub gold_intent: Option<String>,
    pub predicted_intent: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorReport {
    pub counts: ErrorCounts,
    pub diagnostics: Vec<ErrorDiagnostic>,
    /// Predicted spans that exactly match a gold span.
    pub correct_spans: usize,
}

/// Assigns every wrong intent and every non-matching span to one category.
///
/// Predicted spans are checked in order: exact bounds and type (correct),
/// exact bounds with another type (WL), partial overlap with any gold span
/// (WB), no overlap (SS). A gold span no predicted span touches is MS.
pub fn categorize_errors(gold: &[LabelSeq], pred: &[LabelSeq]) -> Result<ErrorReport> {
    check_aligned("utterances", gold.len(), pred.len())?;
    let mut report = ErrorReport::default();
    let diag = |utterance, category, gold: Option<&Span>, predicted: Option<&Span>| ErrorDiagnostic {
        utterance,
        category,
        gold: gold.cloned(),
        predicted: predicted.cloned(),
        gold_intent: None,
        predicted_intent: None,
    };
    for (u, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.tags.len() != p.tags.len() {
            return Err(Error::Alignment(format!(
                "utterance {u}: {} gold tags vs {} predicted",
                g.tags.len(),
                p.tags.len()
            )));
        }
        if g.intent != p.intent {
            report.counts.wi += 1;
            report.diagnostics.push(ErrorDiagnostic {
                gold_intent: Some(g.intent.clone()),
                predicted_intent: Some(p.intent.clone()),
                ..diag(u, ErrorCategory::WI, None, None)
            });
        }
        let gs = extract_spans(&g.tags);
        let ps = extract_spans(&p.tags);
        for ps_ in &ps {
            if let Some(gm) = gs.iter().find(|s| s.same_bounds(ps_)) {
                if gm.slot_type == ps_.slot_type {
                    report.correct_spans += 1;
                } else {
                    report.counts.wl += 1;
                    report.diagnostics.push(diag(u, ErrorCategory::WL, Some(gm), Some(ps_)));
                }
                continue;
            }
            let overlapping: Vec<&Span> = gs.iter().filter(|s| s.overlaps(ps_)).collect();
            if overlapping.is_empty() {
                report.counts.ss += 1;
                report.diagnostics.push(diag(u, ErrorCategory::SS, None, Some(ps_)));
                continue;
            }
            let same_type = overlapping.iter().find(|s| s.slot_type == ps_.slot_type);
            report.counts.wb += 1;
            if same_type.is_none() {
                report.counts.wb_cross_type += 1;
            }
            let gm = same_type.copied().unwrap_or(overlapping[0]);
            report.diagnostics.push(diag(u, ErrorCategory::WB, Some(gm), Some(ps_)));
        }
        for gs_ in &gs {
            if !ps.iter().any(|s| s.overlaps(gs_)) {
                report.counts.ms += 1;
                report.diagnostics.push(diag(u, ErrorCategory::MS, Some(gs_), None));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub intent_accuracy: f64,
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub sentence_accuracy: f64,
    pub error_counts: ErrorCounts,
}

impl EvalReport {
    pub fn compute(gold: &[LabelSeq], pred: &[LabelSeq]) -> Result<Self> {
        check_aligned("utterances", gold.len(), pred.len())?;
        let gi: Vec<&str> = gold.iter().map(|l| l.intent.as_str()).collect();
        let pi: Vec<&str> = pred.iter().map(|l| l.intent.as_str()).collect();
        let gt: Vec<Vec<&str>> = gold
            .iter()
            .map(|l| l.tags.iter().map(String::as_str).collect())
            .collect();
        let pt: Vec<Vec<&str>> = pred
            .iter()
            .map(|l| l.tags.iter().map(String::as_str).collect())
            .collect();
        let slots = slot_f1(&gt, &pt)?;
        Ok(Self {
            utterances: gold.len(),
            intent_accuracy: intent_accuracy(&gi, &pi)?,
            slot_precision: slots.precision,
            slot_recall: slots.recall,
            slot_f1: slots.f1,
            sentence_accuracy: sentence_accuracy(&gi, &pi, &gt, &pt)?,
            error_counts: categorize_errors(gold, pred)?.counts,
        })
    }

    /// `(intent accuracy + slot F1) / 2`, used for checkpoint selection.
    pub fn avg_score(&self) -> f64 {
        (self.intent_accuracy + self.slot_f1) / 2.0
    }

    /// Aligned plain-text rendering, rates in percent with two decimals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("utterances", format!("{}", self.utterances)),
            ("intent accuracy", pct(self.intent_accuracy)),
            ("slot precision", pct(self.slot_precision)),
            ("slot recall", pct(self.slot_recall)),
            ("slot F1", pct(self.slot_f1)),
            ("sentence accuracy", pct(self.sentence_accuracy)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<20}{v:>10}");
        }
        s.push_str(&render_error_counts(&self.error_counts));
        s
    }
}

pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn render_error_counts(c: &ErrorCounts) -> String {
    let mut s = String::new();
    for (k, v) in [("WI", c.wi), ("MS", c.ms), ("SS", c.ss), ("WB", c.wb), ("WL", c.wl)] {
        let _ = writeln!(s, "{k:<20}{v:>10}");
    }
    let _ = writeln!(s, "{:<20}{:>10}", "WB (cross-type)", c.wb_cross_type);
    s
}

/// One prediction line: intent, tab, space-separated tags.
pub fn format_prediction(p: &LabelSeq) -> String {
    format!("{}\t{}", p.intent, p.tags.join(" "))
}

pub fn parse_prediction(line: &str) -> Option<LabelSeq> {
    let (intent, tags) = line.split_once('\t')?;
    let intent = intent.trim();
    if intent.is_empty() {
        return None;
    }
    Some(LabelSeq {
        intent: intent.to_string(),
        tags: tags.split_whitespace().map(str::to_string).collect(),
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<LabelSeq>> {
    let text = fs::read_to_string(path).map_err(|e| Error::data(path, None, e.to_string()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| parse_prediction(l).ok_or_else(|| Error::data(path, Some(i + 1), "expected `intent<TAB>tags`")))
        .collect()
}
