//! Aggregation of crowdsourced validity judgements on predicted features.
//!
//! Pipeline: drop annotators whose control answers fall below the policy for
//! a task, take a plurality vote per `(review, feature)` among the remaining
//! annotators, then report per-category answer rates and totals weighted by
//! the number of voted items in each category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HumanEvalError {
    #[error("records line {line}: {message}")]
    Records { line: usize, message: String },
    #[error("control records per (task, annotator) must equal {expected}: {offenders:?}")]
    ControlCount {
        expected: usize,
        offenders: Vec<(String, String, usize)>,
    },
    #[error("control policy requires min_correct ({min_correct}) <= controls_per_task ({controls_per_task})")]
    Policy {
        controls_per_task: usize,
        min_correct: usize,
    },
    #[error("{votes} valid votes, at least {required} required")]
    Insufficient { votes: usize, required: usize },
    #[error("no category known for review `{0}`")]
    UnknownCategory(String),
    #[error("nothing to summarize")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
    Idk,
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" => Ok(Answer::Yes),
            "no" | "n" => Ok(Answer::No),
            "idk" | "i don't know" | "i" => Ok(Answer::Idk),
            other => Err(format!("unknown answer `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub review_id: String,
    pub feature_phrase: String,
    pub answer: Answer,
    pub is_control: bool,
    pub control_correct: bool,
    /// Optional category column; otherwise resolved from a corpus.
    #[serde(default)]
    pub category: Option<String>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads the TSV export. Required header columns: `task_id`, `annotator_id`,
/// `review_id`, `feature_phrase`, `answer`, `is_control`, `control_correct`;
/// optional `category`.
pub fn parse_records_tsv(input: &str) -> Result<Vec<AnnotationRecord>, HumanEvalError> {
    let err = |line: usize, message: String| HumanEvalError::Records { line, message };
    let mut lines = input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let col = |name: &str| cols.iter().position(|c| *c == name);
    let required = [
        "task_id",
        "annotator_id",
        "review_id",
        "feature_phrase",
        "answer",
        "is_control",
        "control_correct",
    ];
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| err(1, format!("header lacks `{name}`")))?;
    }
    let category_col = col("category");
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |c: usize| fields.get(c).copied().unwrap_or("").trim();
        let answer = get(idx[4]).parse().map_err(|m| err(line_no, m))?;
        let is_control = parse_bool(get(idx[5])).ok_or_else(|| err(line_no, "bad is_control".into()))?;
        let control_correct = parse_bool(get(idx[6])).ok_or_else(|| err(line_no, "bad control_correct".into()))?;
        out.push(AnnotationRecord {
            task_id: get(idx[0]).to_string(),
            annotator_id: get(idx[1]).to_string(),
            review_id: get(idx[2]).to_string(),
            feature_phrase: get(idx[3]).to_string(),
            answer,
            is_control,
            control_correct,
            category: category_col.map(get).filter(|c| !c.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlPolicy {
    controls_per_task: usize,
    min_correct: usize,
}

impl ControlPolicy {
    pub fn new(controls_per_task: usize, min_correct: usize) -> Result<Self, HumanEvalError> {
        if min_correct > controls_per_task {
            return Err(HumanEvalError::Policy {
                controls_per_task,
                min_correct,
            });
        }
        Ok(ControlPolicy {
            controls_per_task,
            min_correct,
        })
    }

    pub fn controls_per_task(&self) -> usize {
        self.controls_per_task
    }

    pub fn min_correct(&self) -> usize {
        self.min_correct
    }
}

/// `(task_id, annotator_id)`
pub type Participation = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub task_id: String,
    pub annotator_id: String,
    pub correct: usize,
    pub required: usize,
}

/// Valid `(task, annotator)` pairs and a log of rejected ones.
pub fn filter_annotators(
    records: &[AnnotationRecord],
    policy: &ControlPolicy,
) -> Result<(BTreeSet<Participation>, Vec<Rejection>), HumanEvalError> {
    let mut tally: BTreeMap<Participation, (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = tally.entry((r.task_id.clone(), r.annotator_id.clone())).or_default();
        if r.is_control {
            entry.0 += 1;
            if r.control_correct {
                entry.1 += 1;
            }
        }
    }
    let offenders: Vec<(String, String, usize)> = tally
        .iter()
        .filter(|(_, (controls, _))| *controls != policy.controls_per_task)
        .map(|((t, a), (controls, _))| (t.clone(), a.clone(), *controls))
        .collect();
    if !offenders.is_empty() {
        return Err(HumanEvalError::ControlCount {
            expected: policy.controls_per_task,
            offenders,
        });
    }
    let mut valid = BTreeSet::new();
    let mut rejected = Vec::new();
    for ((task_id, annotator_id), (_, correct)) in tally {
        if correct >= policy.min_correct {
            valid.insert((task_id, annotator_id));
        } else {
            rejected.push(Rejection {
                task_id,
                annotator_id,
                correct,
                required: policy.min_correct,
            });
        }
    }
    Ok((valid, rejected))
}

/// Plurality vote. A tie for the most votes yields `Idk`, so an unresolved
/// item never counts as a confirmation or a rejection.
pub fn vote(answers: &[Answer], min_annotators: usize) -> Result<Answer, HumanEvalError> {
    if answers.len() < min_annotators || answers.is_empty() {
        return Err(HumanEvalError::Insufficient {
            votes: answers.len(),
            required: min_annotators.max(1),
        });
    }
    let count = |a: Answer| answers.iter().filter(|x| **x == a).count();
    let counts = [Answer::Yes, Answer::No, Answer::Idk].map(|a| (a, count(a)));
    let top = counts.iter().map(|(_, c)| *c).max().expect("three candidates");
    let mut leaders = counts.iter().filter(|(_, c)| *c == top);
    match (leaders.next(), leaders.next()) {
        (Some((answer, _)), None) => Ok(*answer),
        _ => Ok(Answer::Idk),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotedItem {
    pub review_id: String,
    pub feature_phrase: String,
    pub category: String,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Coverage {
    pub voted: usize,
    pub insufficient: Vec<(String, String, usize)>,
}

/// Filters annotators, then votes every non-control `(review, feature)`
/// item. Items with fewer than `min_annotators` valid votes are left out and
/// listed in the coverage report.
pub fn vote_items(
    records: &[AnnotationRecord],
    policy: &ControlPolicy,
    min_annotators: usize,
    category_of: impl Fn(&str) -> Option<String>,
) -> Result<(Vec<VotedItem>, Vec<Rejection>, Coverage), HumanEvalError> {
    let (valid, rejected) = filter_annotators(records, policy)?;
    let mut items: BTreeMap<(String, String), (Vec<Answer>, Option<String>)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_control) {
        if !valid.contains(&(r.task_id.clone(), r.annotator_id.clone())) {
            continue;
        }
        let entry = items
            .entry((r.review_id.clone(), r.feature_phrase.clone()))
            .or_insert_with(|| (Vec::new(), None));
        entry.0.push(r.answer);
        if entry.1.is_none() {
            entry.1.clone_from(&r.category);
        }
    }
    let mut voted = Vec::new();
    let mut coverage = Coverage::default();
    for ((review_id, feature_phrase), (answers, category)) in items {
        match vote(&answers, min_annotators) {
            Ok(answer) => {
                let category = category
                    .or_else(|| category_of(&review_id))
                    .ok_or_else(|| HumanEvalError::UnknownCategory(review_id.clone()))?;
                voted.push(VotedItem {
                    review_id,
                    feature_phrase,
                    category,
                    answer,
                });
            }
            Err(_) => coverage.insufficient.push((review_id, feature_phrase, answers.len())),
        }
    }
    coverage.voted = voted.len();
    Ok((voted, rejected, coverage))
}

/// Answer rates of one category, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryRates {
    pub n_reviews: usize,
    pub yes: f64,
    pub no: f64,
    pub idk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub yes: f64,
    pub no: f64,
    pub idk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub per_category: BTreeMap<String, CategoryRates>,
    pub total_reviews: usize,
    pub weighted_total: Rates,
}

/// `sum(n_c * rate_c) / sum(n_c)` for each answer.
pub fn weighted_total<'a>(rows: impl IntoIterator<Item = &'a CategoryRates>) -> Result<(usize, Rates), HumanEvalError> {
    let (mut n, mut yes, mut no, mut idk) = (0usize, 0.0, 0.0, 0.0);
    for row in rows {
        let w = row.n_reviews as f64;
        n += row.n_reviews;
        yes += w * row.yes;
        no += w * row.no;
        idk += w * row.idk;
    }
    if n == 0 {
        return Err(HumanEvalError::Empty);
    }
    let total = n as f64;
    Ok((
        n,
        Rates {
            yes: yes / total,
            no: no / total,
            idk: idk / total,
        },
    ))
}

pub fn summarize(items: &[VotedItem]) -> Result<EvalSummary, HumanEvalError> {
    let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for item in items {
        let c = counts.entry(item.category.as_str()).or_default();
        c[match item.answer {
            Answer::Yes => 0,
            Answer::No => 1,
            Answer::Idk => 2,
        }] += 1;
    }
    let per_category: BTreeMap<String, CategoryRates> = counts
        .into_iter()
        .map(|(cat, [y, n, i])| {
            let total = (y + n + i) as f64;
            (
                cat.to_string(),
                CategoryRates {
                    n_reviews: y + n + i,
                    yes: 100.0 * y as f64 / total,
                    no: 100.0 * n as f64 / total,
                    idk: 100.0 * i as f64 / total,
                },
            )
        })
        .collect();
    let (total_reviews, weighted_total) = weighted_total(per_category.values())?;
    Ok(EvalSummary {
        per_category,
        total_reviews,
        weighted_total,
    })
}

type RateOf = fn(&CategoryRates) -> f64;

impl EvalSummary {
    /// Plain-text table: one column per category plus Total.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "");
        for cat in self.per_category.keys() {
            let _ = write!(out, "{cat:>8}");
        }
        let _ = writeln!(out, "{:>8}", "Total");
        let _ = write!(out, "{:<10}", "#reviews");
        for r in self.per_category.values() {
            let _ = write!(out, "{:>8}", r.n_reviews);
        }
        let _ = writeln!(out, "{:>8}", self.total_reviews);
        let rows: [(&str, RateOf, f64); 3] = [
            ("% Yes", |r| r.yes, self.weighted_total.yes),
            ("% No", |r| r.no, self.weighted_total.no),
            ("% Idk", |r| r.idk, self.weighted_total.idk),
        ];
        for (name, get, total) in rows {
            let _ = write!(out, "{name:<10}");
            for r in self.per_category.values() {
                let _ = write!(out, "{:>7.1}%", get(r));
            }
            let _ = writeln!(out, "{total:>7.1}%");
        }
        out
    }
}
