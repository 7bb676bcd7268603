//! Per-review embedding vectors: JSON Lines interchange, a deterministic mock
//! embedder, and the centroid / distance primitives used by instance
//! selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize, Review};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: invalid record: {message}")]
    Record { line: usize, message: String },
    #[error("line {line}: vector for `{review_id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        review_id: String,
        expected: usize,
        found: usize,
    },
    #[error("line {1}: duplicate review id `{0}`")]
    Duplicate(String, usize),
    #[error("line {line}: non-finite component in vector for `{review_id}`")]
    NonFinite { line: usize, review_id: String },
    #[error("cannot compute the centroid of zero vectors")]
    EmptyCentroid,
    #[error("vector dimensions differ: {0} vs {1}")]
    Dim(usize, usize),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record<F> {
    review_id: String,
    vector: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingStore<F> {
    dim: usize,
    vectors: BTreeMap<String, Vec<F>>,
}

impl<F: Scalar> EmbeddingStore<F> {
    /// Builds a store from `(review_id, vector)` pairs with the same checks
    /// as [`load_embeddings`].
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<F>)>) -> Result<Self, EmbeddingError> {
        let mut store = EmbeddingStore {
            dim: 0,
            vectors: BTreeMap::new(),
        };
        for (i, (id, v)) in pairs.into_iter().enumerate() {
            store.insert(i + 1, id, v)?;
        }
        Ok(store)
    }

    fn insert(&mut self, line: usize, review_id: String, vector: Vec<F>) -> Result<(), EmbeddingError> {
        if vector.is_empty() {
            return Err(EmbeddingError::Record {
                line,
                message: "empty vector".into(),
            });
        }
        if self.vectors.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                review_id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite { line, review_id });
        }
        if self.vectors.contains_key(&review_id) {
            return Err(EmbeddingError::Duplicate(review_id, line));
        }
        self.vectors.insert(review_id, vector);
        Ok(())
    }

    /// Vector dimension; 0 for an empty store.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, review_id: &str) -> Option<&[F]> {
        self.vectors.get(review_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[F])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// JSON Lines, one record per review in review-id order. Floats use the
    /// shortest representation that round-trips exactly.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (review_id, vector) in &self.vectors {
            let rec = Record {
                review_id: review_id.clone(),
                vector: vector.clone(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("finite floats serialize"));
        }
        out
    }
}

/// Parses JSON Lines `{"review_id": ..., "vector": [...]}`. Blank lines are
/// ignored; the dimension is taken from the first record.
pub fn load_embeddings<F: Scalar>(input: &str) -> Result<EmbeddingStore<F>, EmbeddingError> {
    let mut store = EmbeddingStore {
        dim: 0,
        vectors: BTreeMap::new(),
    };
    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record<F> = serde_json::from_str(line).map_err(|e| EmbeddingError::Record {
            line: idx + 1,
            message: e.to_string(),
        })?;
        store.insert(idx + 1, rec.review_id, rec.vector)?;
    }
    Ok(store)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Hashed bag-of-lemmas embedding: every normalized lemma is hashed with
/// FNV-1a into bucket `hash % dim`, counts are L2-normalized.
pub fn mock_embed<F: Scalar>(review: &Review, dim: usize) -> Vec<F> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut counts = vec![0u64; dim];
    for token in review.tokens() {
        let h = fnv1a64(normalize(&token.lemma).as_bytes());
        counts[(h % dim as u64) as usize] += 1;
    }
    let norm = counts.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![F::zero(); dim];
    }
    counts.into_iter().map(|c| F::of(c as f64 / norm)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Centroid<F> {
    pub vector: Vec<F>,
}

/// Component-wise arithmetic mean.
pub fn centroid<F: Scalar, V: AsRef<[F]>>(vectors: &[V]) -> Result<Centroid<F>, EmbeddingError> {
    let first = vectors.first().ok_or(EmbeddingError::EmptyCentroid)?.as_ref();
    let dim = first.len();
    let mut sum = vec![F::zero(); dim];
    for v in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(EmbeddingError::Dim(dim, v.len()));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s = *s + *x;
        }
    }
    let n = F::of_count(vectors.len());
    Ok(Centroid {
        vector: sum.into_iter().map(|s| s / n).collect(),
    })
}

pub fn euclidean<F: Scalar>(a: &[F], b: &[F]) -> Result<F, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::Dim(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .fold(F::zero(), |acc, d| acc + d)
        .sqrt())
}
