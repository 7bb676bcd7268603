//! Central density-based instance selection.
//!
//! Reviews are grouped by the feature phrases their gold spans carry. Within
//! each group the members are ranked by Euclidean distance to the group
//! centroid (farthest first by default, ties by review id), and for every
//! configured fraction `d` the first `ceil(d * n)` members are taken. The
//! partition for `d` is the union of those prefixes over all groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{centroid, euclidean, EmbeddingError, EmbeddingStore};
use crate::model::{extract_spans, AnnotatedCorpus, FeatureSet, MatchOn, ModelError};
use crate::scalar::Scalar;

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.125, 0.25, 0.5, 0.75];

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("no embedding for review `{0}`")]
    MissingEmbedding(String),
    #[error("feature set is empty")]
    NoFeatures,
    #[error("fractions must be strictly increasing values in (0, 1], got {0:?}")]
    BadFractions(Vec<f64>),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankOrder {
    #[default]
    FarthestFirst,
    NearestFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    fractions: Vec<f64>,
    pub order: RankOrder,
    pub match_on: MatchOn,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            order: RankOrder::default(),
            match_on: MatchOn::default(),
        }
    }
}

impl SelectionConfig {
    pub fn new(fractions: Vec<f64>) -> Result<Self, SelectError> {
        let ok = !fractions.is_empty()
            && fractions.iter().all(|d| *d > 0.0 && *d <= 1.0)
            && fractions.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(SelectError::BadFractions(fractions));
        }
        Ok(SelectionConfig {
            fractions,
            ..Default::default()
        })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }
}

/// `ceil(fraction * n)`, robust to products like `0.3 * 10 = 3.0000000000000004`.
pub fn prefix_len(fraction: f64, n: usize) -> usize {
    let exact = fraction * n as f64;
    let rounded = exact.round();
    let len = if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
        rounded
    } else {
        exact.ceil()
    };
    (len as usize).min(n)
}

/// Group key: the normalized phrase, tokens joined by single spaces.
pub type FeatureGroups = BTreeMap<String, Vec<String>>;

/// Review ids (ascending) whose labeled spans equal each distinct feature
/// phrase. Features matching no span keep an empty group.
pub fn build_feature_groups(
    corpus: &AnnotatedCorpus,
    features: &FeatureSet,
    match_on: MatchOn,
) -> Result<FeatureGroups, SelectError> {
    let phrases = features.distinct_phrases(match_on);
    let mut groups: BTreeMap<Vec<String>, BTreeSet<String>> =
        phrases.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
    for review in corpus.reviews() {
        for span in extract_spans(review)? {
            if let Some(members) = groups.get_mut(&span.phrase_key(review, match_on)) {
                members.insert(review.review_id().to_string());
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| (k.join(" "), v.into_iter().collect()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMember<F> {
    pub review_id: String,
    pub distance: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan<F> {
    /// One entry per configured fraction, in increasing order.
    pub per_fraction: Vec<(f64, BTreeSet<String>)>,
    pub per_feature_rank: BTreeMap<String, Vec<RankedMember<F>>>,
    /// Prefix length taken from each feature group, aligned with `per_fraction`.
    pub prefix_sizes: BTreeMap<String, Vec<usize>>,
}

impl<F: Scalar> PartitionPlan<F> {
    pub fn selected(&self, fraction: f64) -> Option<&BTreeSet<String>> {
        self.per_fraction.iter().find(|(d, _)| *d == fraction).map(|(_, s)| s)
    }

    /// `{"<fraction>": [sorted review ids], ...}`
    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .per_fraction
            .iter()
            .map(|(d, ids)| (format!("{d}"), serde_json::json!(ids)))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Audit table: `feature  review_id  distance  rank` (rank from 1).
    pub fn audit_tsv(&self) -> String {
        let mut out = String::from("feature\treview_id\tdistance\trank\n");
        for (feature, members) in &self.per_feature_rank {
            for (i, m) in members.iter().enumerate() {
                let _ = writeln!(out, "{feature}\t{}\t{}\t{}", m.review_id, m.distance, i + 1);
            }
        }
        out
    }
}

/// Ranks one group's members by distance to their centroid.
fn rank_group<F: Scalar>(
    members: &[String],
    store: &EmbeddingStore<F>,
    order: RankOrder,
) -> Result<Vec<RankedMember<F>>, SelectError> {
    if members.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = members
        .iter()
        .map(|id| store.get(id).ok_or_else(|| SelectError::MissingEmbedding(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let center = centroid(&vectors)?;
    let mut ranked = members
        .iter()
        .zip(&vectors)
        .map(|(id, v)| {
            Ok(RankedMember {
                review_id: id.clone(),
                distance: euclidean(v, &center.vector)?,
            })
        })
        .collect::<Result<Vec<_>, SelectError>>()?;
    ranked.sort_by(|a, b| {
        let by_distance = match order {
            RankOrder::FarthestFirst => b.distance.partial_cmp(&a.distance),
            RankOrder::NearestFirst => a.distance.partial_cmp(&b.distance),
        };
        by_distance
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.review_id.cmp(&b.review_id))
    });
    Ok(ranked)
}

/// Builds the nested training partitions.
pub fn select_instances<F: Scalar>(
    corpus: &AnnotatedCorpus,
    features: &FeatureSet,
    store: &EmbeddingStore<F>,
    config: &SelectionConfig,
) -> Result<PartitionPlan<F>, SelectError> {
    if features.is_empty() {
        return Err(SelectError::NoFeatures);
    }
    let groups = build_feature_groups(corpus, features, config.match_on)?;
    let mut per_fraction: Vec<(f64, BTreeSet<String>)> =
        config.fractions.iter().map(|d| (*d, BTreeSet::new())).collect();
    let mut per_feature_rank = BTreeMap::new();
    let mut prefix_sizes = BTreeMap::new();
    for (feature, members) in groups {
        let ranked = rank_group(&members, store, config.order)?;
        let mut sizes = Vec::with_capacity(per_fraction.len());
        for (d, selected) in &mut per_fraction {
            let len = prefix_len(*d, ranked.len());
            selected.extend(ranked[..len].iter().map(|m| m.review_id.clone()));
            sizes.push(len);
        }
        log::debug!("feature `{feature}`: {} members, prefixes {sizes:?}", ranked.len());
        prefix_sizes.insert(feature.clone(), sizes);
        per_feature_rank.insert(feature, ranked);
    }
    Ok(PartitionPlan {
        per_fraction,
        per_feature_rank,
        prefix_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Feature, Label, Review, Token};

    /// Review whose first token is `word` labeled B-feature, plus filler.
    fn review(id: &str, words: &[&str]) -> Review {
        let s = words
            .iter()
            .map(|w| {
                let label = if w.starts_with('f') { Label::B } else { Label::O };
                Token::plain(*w).unwrap().with_label(label)
            })
            .collect();
        Review::new(id, "app", "PR", vec![s]).unwrap()
    }

    fn features(names: &[&str]) -> FeatureSet {
        FeatureSet::new(names.iter().map(|n| Feature::from_text("app", n).unwrap()))
    }

    #[test]
    fn ceil_prefix_lengths() {
        assert_eq!(prefix_len(0.5, 3), 2);
        assert_eq!(prefix_len(0.125, 1), 1);
        assert_eq!(prefix_len(0.125, 8), 1);
        assert_eq!(prefix_len(0.125, 9), 2);
        assert_eq!(prefix_len(0.3, 10), 3);
        assert_eq!(prefix_len(0.75, 0), 0);
        assert_eq!(prefix_len(1.0, 7), 7);
    }

    #[test]
    fn groups_by_span_phrase() {
        let corpus = AnnotatedCorpus::new(vec![
            review("r1", &["fa", "x"]),
            review("r2", &["x", "y"]),
            review("r3", &["y", "fa"]),
            review("r4", &["fa", "x", "fb"]),
        ])
        .unwrap();
        let groups = build_feature_groups(&corpus, &features(&["fa", "fb", "fz"]), MatchOn::Lemma).unwrap();
        // oracle: re-scan every token of every review
        let brute = |f: &str| -> Vec<String> {
            corpus
                .reviews()
                .iter()
                .filter(|r| r.tokens().any(|t| t.surface == f && t.label == Label::B))
                .map(|r| r.review_id().to_string())
                .collect()
        };
        assert_eq!(groups["fa"], brute("fa"));
        assert_eq!(groups["fa"], vec!["r1", "r3", "r4"]);
        assert_eq!(groups["fb"], vec!["r4"]);
        assert!(groups["fz"].is_empty());
    }

    #[test]
    fn farthest_two_of_three() {
        // centroid (0,0); distances 5, 4, 1
        let corpus = AnnotatedCorpus::new(vec![
            review("a", &["fa"]),
            review("b", &["fa"]),
            review("c", &["fa"]),
        ])
        .unwrap();
        let store = EmbeddingStore::from_pairs(vec![
            ("a".to_string(), vec![5.0, 0.0]),
            ("b".to_string(), vec![-4.0, 0.0]),
            ("c".to_string(), vec![-1.0, 0.0]),
        ])
        .unwrap();
        let config = SelectionConfig::new(vec![0.5]).unwrap();
        let plan = select_instances(&corpus, &features(&["fa"]), &store, &config).unwrap();
        let dists: Vec<f64> = plan.per_feature_rank["fa"].iter().map(|m| m.distance).collect();
        assert_eq!(dists, vec![5.0, 4.0, 1.0]);
        let picked: Vec<&str> = plan.selected(0.5).unwrap().iter().map(String::as_str).collect();
        assert_eq!(picked, vec!["a", "b"]);

        let nearest = SelectionConfig {
            order: RankOrder::NearestFirst,
            ..config
        };
        let plan = select_instances(&corpus, &features(&["fa"]), &store, &nearest).unwrap();
        let picked: Vec<&str> = plan.selected(0.5).unwrap().iter().map(String::as_str).collect();
        assert_eq!(picked, vec!["b", "c"]);
    }

    #[test]
    fn single_member_and_shared_review() {
        let corpus = AnnotatedCorpus::new(vec![review("r", &["fa", "fb"])]).unwrap();
        let store = EmbeddingStore::from_pairs(vec![("r".to_string(), vec![1.0f32, 2.0])]).unwrap();
        let plan = select_instances(&corpus, &features(&["fa", "fb"]), &store, &SelectionConfig::default()).unwrap();
        for (_, ids) in &plan.per_fraction {
            assert_eq!(ids.iter().collect::<Vec<_>>(), vec!["r"]);
        }
        assert_eq!(plan.prefix_sizes["fa"], vec![1, 1, 1, 1]);
    }

    #[test]
    fn errors() {
        let corpus = AnnotatedCorpus::new(vec![review("r1", &["fa"]), review("r2", &["fa"])]).unwrap();
        let store = EmbeddingStore::from_pairs(vec![("r1".to_string(), vec![1.0])]).unwrap();
        let err = select_instances(&corpus, &features(&["fa"]), &store, &SelectionConfig::default()).unwrap_err();
        assert!(matches!(err, SelectError::MissingEmbedding(ref id) if id == "r2"));
        assert!(matches!(
            select_instances(&corpus, &FeatureSet::default(), &store, &SelectionConfig::default()),
            Err(SelectError::NoFeatures)
        ));
        assert!(SelectionConfig::new(vec![0.5, 0.25]).is_err());
        assert!(SelectionConfig::new(vec![0.0]).is_err());
        assert!(SelectionConfig::new(vec![1.5]).is_err());
    }

    #[test]
    fn full_fraction_keeps_every_grouped_review() {
        let corpus = AnnotatedCorpus::new(
            (0..9).map(|i| review(&format!("r{i}"), if i % 3 == 0 { &["x"] } else { &["fa", "y"] })).collect(),
        )
        .unwrap();
        let store = EmbeddingStore::from_pairs((0..9).map(|i| (format!("r{i}"), vec![i as f64, 1.0]))).unwrap();
        let config = SelectionConfig::new(vec![0.5, 1.0]).unwrap();
        let plan = select_instances(&corpus, &features(&["fa"]), &store, &config).unwrap();
        let groups = build_feature_groups(&corpus, &features(&["fa"]), MatchOn::Lemma).unwrap();
        let union: BTreeSet<String> = groups.into_values().flatten().collect();
        assert_eq!(plan.selected(1.0).unwrap(), &union);
        let json = plan.to_json();
        assert_eq!(json["1"].as_array().unwrap().len(), 6);
        assert!(plan.audit_tsv().starts_with("feature\treview_id\tdistance\trank\nfa\t"));
    }
}
