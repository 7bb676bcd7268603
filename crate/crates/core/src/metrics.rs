//! Token- and span-level scoring against gold labels.
//!
//! Token level, per token: a predicted feature label (B or I) equal to the
//! gold label is a true positive, a predicted feature label different from
//! gold is a false positive, and a predicted O over a gold feature label is a
//! false negative. Span level compares exact `(sentence, start, end)` spans.
//!
//! Undefined precision or recall (zero denominator) is reported as 0 with a
//! flag set. Accuracy is deliberately not part of [`MetricReport`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{extract_spans, spans_with_repair, AnnotatedCorpus, Label, ModelError, Review, Span};
use crate::scalar::Scalar;

/// Default recall weight (28.29 s / 11.86 s).
pub const DEFAULT_BETA: f64 = 2.385;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("review `{0}` is missing from the predictions")]
    MissingReview(String),
    #[error("prediction review `{0}` is not in the gold corpus")]
    ExtraReview(String),
    #[error("review `{review_id}`: {what}")]
    Misaligned { review_id: String, what: String },
    #[error("gold labels: {0}")]
    Gold(#[from] ModelError),
    #[error("timings must be finite and positive (A_T = {0}, A_t = {1})")]
    BadTiming(f64, f64),
    #[error("beta must be finite and positive, got {0}")]
    BadBeta(f64),
    #[error("cannot aggregate zero reports")]
    NoReports,
    #[error("cannot aggregate reports with different {0}")]
    Mixed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Token,
    Span,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Token => "token",
            Level::Span => "span",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Recall-weighted f-measure. `p = r = 0` gives 0.
pub fn f_beta<F: Scalar>(p: F, r: F, beta: F) -> F {
    if p == r {
        // fixed point of every weighted harmonic mean
        return p;
    }
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom <= F::zero() {
        return F::zero();
    }
    let value = (F::one() + b2) * (p * r) / denom;
    value.max(p.min(r)).min(p.max(r))
}

/// Balanced f-measure, `2pr / (p + r)`.
pub fn f1<F: Scalar>(p: F, r: F) -> F {
    f_beta(p, r, F::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    /// Mean time to find a feature manually, in seconds.
    pub manual_extraction: f64,
    /// Mean time to check a proposed feature, in seconds.
    pub validity_check: f64,
}

impl TimingSample {
    pub fn new(manual_extraction: f64, validity_check: f64) -> Result<Self, MetricsError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(manual_extraction) || !ok(validity_check) {
            return Err(MetricsError::BadTiming(manual_extraction, validity_check));
        }
        Ok(TimingSample {
            manual_extraction,
            validity_check,
        })
    }
}

/// `A_T / A_t`.
pub fn compute_beta(t: &TimingSample) -> f64 {
    t.manual_extraction / t.validity_check
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<F> {
    pub level: Level,
    pub counts: ConfusionCounts,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub f_beta: F,
    pub beta: F,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Orphan I-feature tokens in the predictions treated as B-feature.
    #[serde(default)]
    pub repairs: usize,
}

impl<F: Scalar> MetricReport<F> {
    pub fn from_counts(level: Level, counts: ConfusionCounts, beta: F) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (F::zero(), true)
            } else {
                (F::of_count(num) / F::of_count(den), false)
            }
        };
        let (precision, precision_undefined) = ratio(counts.tp, counts.tp + counts.fp);
        let (recall, recall_undefined) = ratio(counts.tp, counts.tp + counts.fn_);
        MetricReport {
            level,
            counts,
            precision,
            recall,
            f1: f1(precision, recall),
            f_beta: f_beta(precision, recall, beta),
            beta,
            precision_undefined,
            recall_undefined,
            repairs: 0,
        }
    }

    /// Aligned-column plain text.
    pub fn to_text(&self) -> String {
        format!(
            "level      {}\ntp         {}\nfp         {}\nfn         {}\nprecision  {:.4}{}\nrecall     {:.4}{}\nf1         {:.4}\nf_beta     {:.4}\nbeta       {:.4}\n",
            self.level,
            self.counts.tp,
            self.counts.fp,
            self.counts.fn_,
            self.precision.to_f64_lossy(),
            if self.precision_undefined { " (undefined)" } else { "" },
            self.recall.to_f64_lossy(),
            if self.recall_undefined { " (undefined)" } else { "" },
            self.f1.to_f64_lossy(),
            self.f_beta.to_f64_lossy(),
            self.beta.to_f64_lossy(),
        )
    }
}

fn check_beta<F: Scalar>(beta: F) -> Result<(), MetricsError> {
    if beta.is_finite() && beta > F::zero() {
        Ok(())
    } else {
        Err(MetricsError::BadBeta(beta.to_f64_lossy()))
    }
}

/// Pairs gold and predicted reviews by id, checking sentence shapes.
fn align<'a>(
    gold: &'a AnnotatedCorpus,
    pred: &'a AnnotatedCorpus,
) -> Result<Vec<(&'a Review, &'a Review)>, MetricsError> {
    let pred_index: BTreeMap<&str, &Review> = pred.index();
    let gold_ids: BTreeSet<&str> = gold.reviews().iter().map(Review::review_id).collect();
    if let Some(extra) = pred.reviews().iter().find(|r| !gold_ids.contains(r.review_id())) {
        return Err(MetricsError::ExtraReview(extra.review_id().to_string()));
    }
    gold.reviews()
        .iter()
        .map(|g| {
            let p = pred_index
                .get(g.review_id())
                .ok_or_else(|| MetricsError::MissingReview(g.review_id().to_string()))?;
            let misaligned = |what: String| MetricsError::Misaligned {
                review_id: g.review_id().to_string(),
                what,
            };
            if g.sentences().len() != p.sentences().len() {
                return Err(misaligned(format!(
                    "{} gold sentences vs {} predicted",
                    g.sentences().len(),
                    p.sentences().len()
                )));
            }
            for (si, (gs, ps)) in g.sentences().iter().zip(p.sentences()).enumerate() {
                if gs.len() != ps.len() {
                    return Err(misaligned(format!(
                        "sentence {si}: {} gold tokens vs {} predicted (first divergent token {})",
                        gs.len(),
                        ps.len(),
                        gs.len().min(ps.len())
                    )));
                }
            }
            Ok((g, *p))
        })
        .collect()
}

/// Confusion counts for one aligned token pair.
pub fn token_outcome(gold: Label, pred: Label) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    match (pred.is_feature(), pred == gold) {
        (true, true) => c.tp = 1,
        (true, false) => c.fp = 1,
        (false, _) if gold.is_feature() => c.fn_ = 1,
        _ => {}
    }
    c
}

/// Micro-averaged token-level scores.
pub fn score_tokens<F: Scalar>(
    gold: &AnnotatedCorpus,
    pred: &AnnotatedCorpus,
    beta: F,
) -> Result<MetricReport<F>, MetricsError> {
    check_beta(beta)?;
    let mut counts = ConfusionCounts::default();
    for (g, p) in align(gold, pred)? {
        for (gt, pt) in g.tokens().zip(p.tokens()) {
            counts = counts + token_outcome(gt.label, pt.label);
        }
    }
    Ok(MetricReport::from_counts(Level::Token, counts, beta))
}

/// Exact-match span scores. Gold must be BIO well-formed; orphan I-feature
/// tokens in the predictions open a new span and are counted in `repairs`.
pub fn score_spans<F: Scalar>(
    gold: &AnnotatedCorpus,
    pred: &AnnotatedCorpus,
    beta: F,
) -> Result<MetricReport<F>, MetricsError> {
    check_beta(beta)?;
    let mut counts = ConfusionCounts::default();
    let mut repairs = 0;
    for (g, p) in align(gold, pred)? {
        let gold_spans: BTreeSet<Span> = extract_spans(g)?.into_iter().collect();
        let (pred_spans, fixed) = spans_with_repair(p);
        repairs += fixed;
        let pred_spans: BTreeSet<Span> = pred_spans.into_iter().collect();
        let tp = gold_spans.intersection(&pred_spans).count();
        counts = counts
            + ConfusionCounts {
                tp,
                fp: pred_spans.len() - tp,
                fn_: gold_spans.len() - tp,
            };
    }
    let mut report = MetricReport::from_counts(Level::Span, counts, beta);
    report.repairs = repairs;
    Ok(report)
}

pub fn score<F: Scalar>(
    level: Level,
    gold: &AnnotatedCorpus,
    pred: &AnnotatedCorpus,
    beta: F,
) -> Result<MetricReport<F>, MetricsError> {
    match level {
        Level::Token => score_tokens(gold, pred, beta),
        Level::Span => score_spans(gold, pred, beta),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScores<F> {
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub f_beta: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary<F> {
    pub level: Level,
    pub beta: F,
    pub folds: usize,
    /// Arithmetic mean of the per-fold metrics.
    #[serde(rename = "macro")]
    pub macro_avg: MeanScores<F>,
    /// `f_beta` evaluated on the mean precision and recall; differs from
    /// `macro_avg.f_beta` whenever the folds disagree.
    pub f_beta_of_means: F,
    /// Scores recomputed from the pooled counts.
    pub micro: MetricReport<F>,
}

/// Mean of per-fold metrics, plus pooled-count scores.
pub fn aggregate_folds<F: Scalar>(reports: &[MetricReport<F>]) -> Result<FoldSummary<F>, MetricsError> {
    let first = reports.first().ok_or(MetricsError::NoReports)?;
    if reports.iter().any(|r| r.level != first.level) {
        return Err(MetricsError::Mixed("levels"));
    }
    if reports.iter().any(|r| r.beta != first.beta) {
        return Err(MetricsError::Mixed("betas"));
    }
    let n = F::of_count(reports.len());
    let mean = |get: fn(&MetricReport<F>) -> F| reports.iter().map(get).fold(F::zero(), |a, b| a + b) / n;
    let macro_avg = MeanScores {
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        f_beta: mean(|r| r.f_beta),
    };
    let pooled = reports
        .iter()
        .fold(ConfusionCounts::default(), |acc, r| acc + r.counts);
    let mut micro = MetricReport::from_counts(first.level, pooled, first.beta);
    micro.repairs = reports.iter().map(|r| r.repairs).sum();
    Ok(FoldSummary {
        level: first.level,
        beta: first.beta,
        folds: reports.len(),
        f_beta_of_means: f_beta(macro_avg.precision, macro_avg.recall, first.beta),
        macro_avg,
        micro,
    })
}

impl<F: Scalar> FoldSummary<F> {
    pub fn to_text(&self) -> String {
        let m = &self.macro_avg;
        format!(
            "level           {}\nfolds           {}\nbeta            {:.4}\nmacro precision {:.4}\nmacro recall    {:.4}\nmacro f1        {:.4}\nmacro f_beta    {:.4}\nf_beta(means)   {:.4}\nmicro precision {:.4}\nmicro recall    {:.4}\nmicro f1        {:.4}\nmicro f_beta    {:.4}\n",
            self.level,
            self.folds,
            self.beta.to_f64_lossy(),
            m.precision.to_f64_lossy(),
            m.recall.to_f64_lossy(),
            m.f1.to_f64_lossy(),
            m.f_beta.to_f64_lossy(),
            self.f_beta_of_means.to_f64_lossy(),
            self.micro.precision.to_f64_lossy(),
            self.micro.recall.to_f64_lossy(),
            self.micro.f1.to_f64_lossy(),
            self.micro.f_beta.to_f64_lossy(),
        )
    }
}
