//! Projection of crowdsourced `(app, feature)` annotations onto review tokens.
//!
//! A feature matches a review when the review belongs to the same app and the
//! feature's normalized token sequence occurs contiguously inside one of the
//! review's sentences. Matched tokens become `B-feature I-feature*`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotatedCorpus, Feature, FeatureSet, Label, MatchOn, PhraseToken, Review};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("review `{review_id}` already carries non-O labels (sentence {sentence}, token {token})")]
    NotCleared {
        review_id: String,
        sentence: usize,
        token: usize,
    },
    #[error("feature set is empty")]
    NoFeatures,
    #[error("feature file line {line}: {message}")]
    FeatureFile { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Occurrence {
    /// Only the first occurrence in the review.
    #[default]
    First,
    /// Every non-overlapping occurrence, scanned left to right.
    AllNonOverlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overwrite {
    /// Matches touching an already labeled token are dropped.
    #[default]
    SkipConflicts,
    /// Later matches overwrite earlier labels unconditionally. Output may not
    /// be BIO well-formed.
    LiteralOverwrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferConfig {
    pub match_on: MatchOn,
    pub occurrence: Occurrence,
    pub overwrite: Overwrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureKey {
    pub app_id: String,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferReport {
    pub annotations_made: usize,
    pub reviews_touched: usize,
    pub conflicts_skipped: usize,
    #[serde(with = "feature_counts")]
    pub per_feature_counts: BTreeMap<FeatureKey, usize>,
}

mod feature_counts {
    use super::FeatureKey;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        app_id: String,
        phrase: String,
        count: usize,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<FeatureKey, usize>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(k, &count)| Entry {
                app_id: k.app_id.clone(),
                phrase: k.phrase.clone(),
                count,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<FeatureKey, usize>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                (
                    FeatureKey {
                        app_id: e.app_id,
                        phrase: e.phrase,
                    },
                    e.count,
                )
            })
            .collect())
    }
}

/// Start indices of all contiguous, non-overlapping, left-to-right greedy
/// occurrences of `phrase` in `sentence`. Both are given as normalized keys.
pub fn find_matches<S: AsRef<str>, P: AsRef<str>>(sentence: &[S], phrase: &[P]) -> Vec<usize> {
    let n = phrase.len();
    let mut out = Vec::new();
    if n == 0 || n > sentence.len() {
        return out;
    }
    let mut i = 0;
    while i + n <= sentence.len() {
        if sentence[i..i + n]
            .iter()
            .zip(phrase)
            .all(|(a, b)| a.as_ref() == b.as_ref())
        {
            out.push(i);
            i += n;
        } else {
            i += 1;
        }
    }
    out
}

struct PreparedFeature {
    key: Vec<String>,
    report_key: FeatureKey,
}

/// Features grouped by app, each group ordered longest phrase first, then by
/// phrase, then by app id.
fn prepare(features: &FeatureSet, on: MatchOn) -> HashMap<&str, Vec<PreparedFeature>> {
    let mut all: Vec<(&Feature, Vec<String>)> = features.features().iter().map(|f| (f, f.key(on))).collect();
    all.sort_by(|(fa, ka), (fb, kb)| {
        kb.len()
            .cmp(&ka.len())
            .then_with(|| ka.cmp(kb))
            .then_with(|| fa.app_id().cmp(fb.app_id()))
    });
    let mut by_app: HashMap<&str, Vec<PreparedFeature>> = HashMap::new();
    for (f, key) in all {
        let report_key = FeatureKey {
            app_id: f.app_id().to_string(),
            phrase: key.join(" "),
        };
        let group = by_app.entry(f.app_id()).or_default();
        // distinct features can collapse onto one key under surface matching
        if group.iter().any(|p| p.key == key) {
            continue;
        }
        group.push(PreparedFeature { key, report_key });
    }
    by_app
}

/// Labels `review` (assumed all-O) with the given app-filtered features.
fn label_review(
    review: &Review,
    features: &[PreparedFeature],
    config: &TransferConfig,
    report: &mut TransferReport,
) -> Review {
    let keys: Vec<Vec<String>> = review
        .sentences()
        .iter()
        .map(|s| s.iter().map(|t| t.key(config.match_on)).collect())
        .collect();
    let mut labels: Vec<Vec<Label>> = review.sentences().iter().map(|s| vec![Label::O; s.len()]).collect();
    let mut touched = false;
    for feature in features {
        let mut matches: Vec<(usize, usize)> = Vec::new();
        for (si, sentence) in keys.iter().enumerate() {
            for start in find_matches(sentence, &feature.key) {
                matches.push((si, start));
                if config.occurrence == Occurrence::First {
                    break;
                }
            }
            if config.occurrence == Occurrence::First && !matches.is_empty() {
                break;
            }
        }
        for (si, start) in matches {
            let end = start + feature.key.len();
            let row = &mut labels[si];
            if config.overwrite == Overwrite::SkipConflicts && row[start..end].iter().any(|l| l.is_feature()) {
                report.conflicts_skipped += 1;
                continue;
            }
            row[start] = Label::B;
            for l in &mut row[start + 1..end] {
                *l = Label::I;
            }
            report.annotations_made += 1;
            *report.per_feature_counts.entry(feature.report_key.clone()).or_default() += 1;
            touched = true;
        }
    }
    if touched {
        report.reviews_touched += 1;
    }
    review.relabel(|si, ti| labels[si][ti])
}

/// Projects features onto an unlabeled corpus.
pub fn transfer_annotations(
    corpus: &AnnotatedCorpus,
    features: &FeatureSet,
    config: &TransferConfig,
) -> Result<(AnnotatedCorpus, TransferReport), TransferError> {
    if features.is_empty() {
        return Err(TransferError::NoFeatures);
    }
    for r in corpus.reviews() {
        for (si, s) in r.sentences().iter().enumerate() {
            if let Some(ti) = s.iter().position(|t| t.label.is_feature()) {
                return Err(TransferError::NotCleared {
                    review_id: r.review_id().to_string(),
                    sentence: si,
                    token: ti,
                });
            }
        }
    }
    let by_app = prepare(features, config.match_on);
    let mut report = TransferReport::default();
    let reviews = corpus
        .reviews()
        .iter()
        .map(|r| match by_app.get(r.app_id()) {
            Some(fs) => label_review(r, fs, config, &mut report),
            None => r.clone(),
        })
        .collect();
    let out = AnnotatedCorpus::new(reviews).expect("review ids unchanged");
    log::info!(
        "transferred {} annotations over {} reviews ({} conflicts skipped)",
        report.annotations_made,
        report.reviews_touched,
        report.conflicts_skipped
    );
    Ok((out, report))
}

/// Reads the feature TSV: header with `app_id`, `feature_phrase` and an
/// optional `feature_lemmas` column (space-separated tokens each).
pub fn parse_feature_tsv(input: &str) -> Result<FeatureSet, TransferError> {
    let err = |line: usize, message: String| TransferError::FeatureFile { line, message };
    let mut lines = input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Err(err(1, "missing header".into()));
    };
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let app_col = find("app_id").ok_or_else(|| err(1, "header lacks `app_id`".into()))?;
    let phrase_col = find("feature_phrase").ok_or_else(|| err(1, "header lacks `feature_phrase`".into()))?;
    let lemma_col = find("feature_lemmas");
    let mut features = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let get = |c: usize| fields.get(c).copied().unwrap_or("").trim();
        let app = get(app_col);
        if app.is_empty() {
            return Err(err(line_no, "empty app_id".into()));
        }
        let surfaces: Vec<&str> = get(phrase_col).split_whitespace().collect();
        let lemmas: Vec<&str> = match lemma_col.map(get) {
            Some(l) if !l.is_empty() => l.split_whitespace().collect(),
            _ => surfaces.clone(),
        };
        if lemmas.len() != surfaces.len() {
            return Err(err(
                line_no,
                format!("{} phrase tokens but {} lemmas", surfaces.len(), lemmas.len()),
            ));
        }
        let phrase = surfaces
            .iter()
            .zip(&lemmas)
            .map(|(s, l)| PhraseToken {
                surface: s.to_string(),
                lemma: l.to_string(),
            })
            .collect();
        let feature = Feature::new(app, phrase).map_err(|e| err(line_no, e.to_string()))?;
        features.push(feature);
    }
    Ok(FeatureSet::new(features))
}
