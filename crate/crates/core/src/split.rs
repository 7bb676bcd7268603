//! Cross-validation fold plans.
//!
//! In-domain: reviews are bucketed by category (categories in lexicographic
//! order, review ids ascending inside each), every bucket is Fisher-Yates
//! shuffled with one xoshiro256** stream seeded through SplitMix64 from the
//! user seed, and the shuffled buckets are dealt round-robin into `k` folds.
//! The dealing position carries over from one category to the next so that
//! fold sizes stay balanced. Out-of-domain: one fold per category.

use std::collections::{BTreeMap, BTreeSet};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AnnotatedCorpus;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("out-of-domain splitting needs at least 2 categories, found {0}")]
    TooFewCategories(usize),
    #[error("fold plan: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    InDomain,
    OutOfDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub mode: SplitMode,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FoldPlan {
    /// Training ids of fold `i`: every corpus review not in its test set.
    pub fn train(&self, i: usize, corpus: &AnnotatedCorpus) -> BTreeSet<String> {
        let test = &self.folds[i].test;
        corpus
            .reviews()
            .iter()
            .map(|r| r.review_id().to_string())
            .filter(|id| !test.contains(id))
            .collect()
    }

    pub fn fold(&self, name: &str) -> Option<(usize, &Fold)> {
        self.folds.iter().enumerate().find(|(_, f)| f.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SplitError> {
        serde_json::from_str(text).map_err(|e| SplitError::Format(e.to_string()))
    }
}

/// Uniform index in `0..bound` from the high bits of a 128-bit product.
fn bounded(rng: &mut Xoshiro256StarStar, bound: usize) -> usize {
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

/// Fisher-Yates, last position first.
pub fn shuffle<T>(items: &mut [T], rng: &mut Xoshiro256StarStar) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}

fn by_category(corpus: &AnnotatedCorpus) -> BTreeMap<&str, Vec<&str>> {
    let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in corpus.reviews() {
        map.entry(r.category()).or_default().push(r.review_id());
    }
    for ids in map.values_mut() {
        ids.sort_unstable();
    }
    map
}

/// Category-stratified k-fold plan.
pub fn split_in_domain(corpus: &AnnotatedCorpus, k: usize, seed: u64) -> Result<FoldPlan, SplitError> {
    if k < 2 {
        return Err(SplitError::TooFewFolds(k));
    }
    if corpus.is_empty() {
        return Err(SplitError::EmptyCorpus);
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut folds: Vec<BTreeSet<String>> = vec![BTreeSet::new(); k];
    let mut warnings = Vec::new();
    let mut next = 0;
    for (category, mut ids) in by_category(corpus) {
        if ids.len() < k {
            let msg = format!("category `{category}` has {} reviews, fewer than k = {k}", ids.len());
            log::warn!("{msg}");
            warnings.push(msg);
        }
        shuffle(&mut ids, &mut rng);
        for id in ids {
            folds[next].insert(id.to_string());
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan {
        mode: SplitMode::InDomain,
        k,
        seed,
        folds: folds
            .into_iter()
            .enumerate()
            .map(|(i, test)| Fold {
                name: format!("fold-{i}"),
                test,
            })
            .collect(),
        warnings,
    })
}

/// Leave-one-category-out plan; folds named after their category.
pub fn split_out_of_domain(corpus: &AnnotatedCorpus) -> Result<FoldPlan, SplitError> {
    let groups = by_category(corpus);
    if groups.len() < 2 {
        return Err(SplitError::TooFewCategories(groups.len()));
    }
    let folds: Vec<Fold> = groups
        .into_iter()
        .map(|(category, ids)| Fold {
            name: category.to_string(),
            test: ids.into_iter().map(str::to_string).collect(),
        })
        .collect();
    Ok(FoldPlan {
        mode: SplitMode::OutOfDomain,
        k: folds.len(),
        seed: 0,
        folds,
        warnings: Vec::new(),
    })
}
