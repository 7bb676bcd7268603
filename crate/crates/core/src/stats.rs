//! Dataset overview statistics per category and in total.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{extract_spans, AnnotatedCorpus, FeatureSet, Label, MatchOn, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatsRow {
    pub apps: usize,
    pub reviews: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub b_feature: usize,
    pub i_feature: usize,
    pub o: usize,
    /// Number of feature mentions, equal to `b_feature`.
    pub features: usize,
    /// Distinct normalized phrases among the mentions that are registered
    /// in the feature set.
    pub distinct_features: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_category: BTreeMap<String, StatsRow>,
    pub total: StatsRow,
    /// Apps seen under more than one category; when non-empty the `apps`
    /// row is not additive.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub multi_category_apps: BTreeSet<String>,
}

#[derive(Default)]
struct Acc {
    apps: BTreeSet<String>,
    distinct: BTreeSet<Vec<String>>,
    row: StatsRow,
}

impl Acc {
    fn finish(self) -> StatsRow {
        StatsRow {
            apps: self.apps.len(),
            distinct_features: self.distinct.len(),
            features: self.row.b_feature,
            ..self.row
        }
    }
}

/// Exact counts over a gold corpus. Requires BIO well-formed labels.
pub fn compute_stats(corpus: &AnnotatedCorpus, features: &FeatureSet) -> Result<CorpusStats, ModelError> {
    let registered = features.distinct_phrases(MatchOn::Lemma);
    let mut per: BTreeMap<String, Acc> = BTreeMap::new();
    let mut total = Acc::default();
    for review in corpus.reviews() {
        let spans = extract_spans(review)?;
        let acc = per.entry(review.category().to_string()).or_default();
        for a in [&mut *acc, &mut total] {
            a.apps.insert(review.app_id().to_string());
            a.row.reviews += 1;
            a.row.sentences += review.sentences().len();
            for t in review.tokens() {
                a.row.tokens += 1;
                match t.label {
                    Label::B => a.row.b_feature += 1,
                    Label::I => a.row.i_feature += 1,
                    Label::O => a.row.o += 1,
                }
            }
            for s in &spans {
                let key = s.phrase_key(review, MatchOn::Lemma);
                if registered.contains(&key) {
                    a.distinct.insert(key);
                }
            }
        }
    }
    Ok(CorpusStats {
        per_category: per.into_iter().map(|(k, v)| (k, v.finish())).collect(),
        total: total.finish(),
        multi_category_apps: corpus.apps_in_several_categories(),
    })
}

type CountOf = fn(&StatsRow) -> usize;

impl CorpusStats {
    /// One row per metric, one column per category plus `Total`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for cat in self.per_category.keys() {
            let _ = write!(out, "\t{cat}");
        }
        out.push_str("\tTotal\n");
        let metrics: [(&str, CountOf); 9] = [
            ("apps", |r| r.apps),
            ("reviews", |r| r.reviews),
            ("sentences", |r| r.sentences),
            ("tokens", |r| r.tokens),
            ("B-feature", |r| r.b_feature),
            ("I-feature", |r| r.i_feature),
            ("O", |r| r.o),
            ("features", |r| r.features),
            ("distinct_features", |r| r.distinct_features),
        ];
        for (name, get) in metrics {
            out.push_str(name);
            for row in self.per_category.values() {
                let _ = write!(out, "\t{}", get(row));
            }
            let _ = writeln!(out, "\t{}", get(&self.total));
        }
        out
    }
}
