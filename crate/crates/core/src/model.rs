//! Domain types shared by the whole pipeline: labels, tokens, reviews,
//! annotated corpora and crowdsourced feature sets.
//!
//! Everything here is an immutable value once constructed. Constructors
//! check the structural invariants (non-empty sentences, unique review ids,
//! non-empty feature phrases). BIO well-formedness is *not* enforced at
//! construction because prediction files and literal-overwrite transfers may
//! legitimately violate it; use [`Review::check_bio`] or [`extract_spans`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown label `{0}` (expected O, B-feature or I-feature)")]
    UnknownLabel(String),
    #[error("token surface must not be empty")]
    EmptySurface,
    #[error("review `{0}` has no sentences")]
    NoSentences(String),
    #[error("review `{review_id}`: sentence {sentence} is empty")]
    EmptySentence { review_id: String, sentence: usize },
    #[error("duplicate review id `{0}`")]
    DuplicateReview(String),
    #[error("feature for app `{0}` has an empty phrase")]
    EmptyPhrase(String),
    #[error("review `{review_id}`: orphan I-feature at sentence {sentence}, token {token}")]
    MalformedBio {
        review_id: String,
        sentence: usize,
        token: usize,
    },
}

/// Token class in the BIO scheme with a single entity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum Label {
    #[default]
    #[serde(rename = "O")]
    O,
    #[serde(rename = "B-feature")]
    B,
    #[serde(rename = "I-feature")]
    I,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::O, Label::B, Label::I];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::O => "O",
            Label::B => "B-feature",
            Label::I => "I-feature",
        }
    }

    /// `true` for B-feature and I-feature.
    pub fn is_feature(self) -> bool {
        self != Label::O
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Label::O),
            "B-feature" => Ok(Label::B),
            "I-feature" => Ok(Label::I),
            other => Err(ModelError::UnknownLabel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    pub label: Label,
}

impl Token {
    pub fn new(
        surface: impl Into<String>,
        lemma: impl Into<String>,
        pos: impl Into<String>,
        label: Label,
    ) -> Result<Self, ModelError> {
        let surface = surface.into();
        if surface.is_empty() {
            return Err(ModelError::EmptySurface);
        }
        Ok(Token {
            surface,
            lemma: lemma.into(),
            pos: pos.into(),
            label,
        })
    }

    /// Token whose lemma equals its surface, with no PoS tag and label O.
    pub fn plain(surface: impl Into<String>) -> Result<Self, ModelError> {
        let surface = surface.into();
        Token::new(surface.clone(), surface, "", Label::O)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    /// Normalized matching key for this token.
    pub fn key(&self, on: MatchOn) -> String {
        match on {
            MatchOn::Lemma => normalize(&self.lemma),
            MatchOn::Surface => normalize(&self.surface),
        }
    }
}

/// Which token field is compared when matching feature phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchOn {
    #[default]
    Lemma,
    Surface,
}

/// NFC normalization followed by lowercasing.
pub fn normalize(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase()
}

pub type Sentence = Vec<Token>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    review_id: String,
    app_id: String,
    category: String,
    sentences: Vec<Sentence>,
}

impl Review {
    pub fn new(
        review_id: impl Into<String>,
        app_id: impl Into<String>,
        category: impl Into<String>,
        sentences: Vec<Sentence>,
    ) -> Result<Self, ModelError> {
        let review_id = review_id.into();
        if sentences.is_empty() {
            return Err(ModelError::NoSentences(review_id));
        }
        if let Some(sentence) = sentences.iter().position(|s| s.is_empty()) {
            return Err(ModelError::EmptySentence {
                review_id,
                sentence,
            });
        }
        Ok(Review {
            review_id,
            app_id: app_id.into(),
            category: category.into(),
            sentences,
        })
    }

    pub fn review_id(&self) -> &str {
        &self.review_id
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flatten()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Same review with every label produced by `f(sentence, token)`.
    pub fn relabel(&self, mut f: impl FnMut(usize, usize) -> Label) -> Review {
        let sentences = self
            .sentences
            .iter()
            .enumerate()
            .map(|(si, s)| {
                s.iter()
                    .enumerate()
                    .map(|(ti, t)| t.clone().with_label(f(si, ti)))
                    .collect()
            })
            .collect();
        Review {
            sentences,
            ..self.clone()
        }
    }

    /// Copy of this review with all labels reset to O.
    pub fn cleared(&self) -> Review {
        self.relabel(|_, _| Label::O)
    }

    /// Returns the first orphan I-feature, if any.
    pub fn check_bio(&self) -> Result<(), ModelError> {
        for (si, sentence) in self.sentences.iter().enumerate() {
            let mut prev = Label::O;
            for (ti, token) in sentence.iter().enumerate() {
                if token.label == Label::I && prev == Label::O {
                    return Err(ModelError::MalformedBio {
                        review_id: self.review_id.clone(),
                        sentence: si,
                        token: ti,
                    });
                }
                prev = token.label;
            }
        }
        Ok(())
    }

    /// Space-joined surfaces of all sentences.
    pub fn raw_text(&self) -> String {
        self.tokens()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A labeled span: sentence index plus inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(sentence: usize, start: usize, end: usize) -> Self {
        Span {
            sentence,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tokens covered by this span.
    pub fn tokens<'r>(&self, review: &'r Review) -> &'r [Token] {
        &review.sentences()[self.sentence][self.start..=self.end]
    }

    /// Normalized phrase key of the span's tokens.
    pub fn phrase_key(&self, review: &Review, on: MatchOn) -> Vec<String> {
        self.tokens(review).iter().map(|t| t.key(on)).collect()
    }
}

/// Maximal B-feature I-feature* spans of a well-formed review, in position
/// order. Spans never cross sentence boundaries.
pub fn extract_spans(review: &Review) -> Result<Vec<Span>, ModelError> {
    review.check_bio()?;
    Ok(spans_with_repair(review).0)
}

/// Span extraction for possibly malformed label sequences: an orphan
/// I-feature opens a new span as if it were B-feature. Returns the spans and
/// the number of repairs applied.
pub fn spans_with_repair(review: &Review) -> (Vec<Span>, usize) {
    let mut spans = Vec::new();
    let mut repairs = 0;
    for (si, sentence) in review.sentences().iter().enumerate() {
        let mut open: Option<usize> = None;
        for (ti, token) in sentence.iter().enumerate() {
            match token.label {
                Label::B => {
                    if let Some(start) = open.take() {
                        spans.push(Span::new(si, start, ti - 1));
                    }
                    open = Some(ti);
                }
                Label::I => {
                    if open.is_none() {
                        repairs += 1;
                        open = Some(ti);
                    }
                }
                Label::O => {
                    if let Some(start) = open.take() {
                        spans.push(Span::new(si, start, ti - 1));
                    }
                }
            }
        }
        if let Some(start) = open {
            spans.push(Span::new(si, start, sentence.len() - 1));
        }
    }
    (spans, repairs)
}

/// A set of reviews with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AnnotatedCorpus {
    reviews: Vec<Review>,
    categories: BTreeSet<String>,
}

impl AnnotatedCorpus {
    pub fn new(reviews: Vec<Review>) -> Result<Self, ModelError> {
        let mut seen = HashSet::with_capacity(reviews.len());
        for r in &reviews {
            if !seen.insert(r.review_id()) {
                return Err(ModelError::DuplicateReview(r.review_id.clone()));
            }
        }
        let categories = reviews.iter().map(|r| r.category.clone()).collect();
        Ok(AnnotatedCorpus {
            reviews,
            categories,
        })
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn get(&self, review_id: &str) -> Option<&Review> {
        self.reviews.iter().find(|r| r.review_id == review_id)
    }

    pub fn index(&self) -> BTreeMap<&str, &Review> {
        self.reviews.iter().map(|r| (r.review_id(), r)).collect()
    }

    /// Sub-corpus of the reviews accepted by `keep`, in original order.
    pub fn filter(&self, mut keep: impl FnMut(&Review) -> bool) -> AnnotatedCorpus {
        let reviews: Vec<Review> = self.reviews.iter().filter(|r| keep(r)).cloned().collect();
        AnnotatedCorpus::new(reviews).expect("subset of a valid corpus is valid")
    }

    pub fn into_reviews(self) -> Vec<Review> {
        self.reviews
    }

    /// Every review's BIO well-formedness.
    pub fn check_bio(&self) -> Result<(), ModelError> {
        self.reviews.iter().try_for_each(Review::check_bio)
    }

    /// Apps that appear under more than one category.
    pub fn apps_in_several_categories(&self) -> BTreeSet<String> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let mut out = BTreeSet::new();
        for r in &self.reviews {
            match seen.get(r.app_id()) {
                Some(c) if *c != r.category() => {
                    out.insert(r.app_id.clone());
                }
                Some(_) => {}
                None => {
                    seen.insert(r.app_id(), r.category());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhraseToken {
    pub surface: String,
    pub lemma: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Feature {
    app_id: String,
    phrase: Vec<PhraseToken>,
}

impl Feature {
    pub fn new(app_id: impl Into<String>, phrase: Vec<PhraseToken>) -> Result<Self, ModelError> {
        let app_id = app_id.into();
        if phrase.is_empty() || phrase.iter().any(|t| t.surface.is_empty()) {
            return Err(ModelError::EmptyPhrase(app_id));
        }
        Ok(Feature { app_id, phrase })
    }

    /// Feature from whitespace-separated surfaces, lemmas equal to surfaces.
    pub fn from_text(app_id: impl Into<String>, text: &str) -> Result<Self, ModelError> {
        let phrase = text
            .split_whitespace()
            .map(|w| PhraseToken {
                surface: w.to_string(),
                lemma: w.to_string(),
            })
            .collect();
        Feature::new(app_id, phrase)
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn phrase(&self) -> &[PhraseToken] {
        &self.phrase
    }

    pub fn len(&self) -> usize {
        self.phrase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrase.is_empty()
    }

    pub fn key(&self, on: MatchOn) -> Vec<String> {
        self.phrase
            .iter()
            .map(|t| match on {
                MatchOn::Lemma => normalize(&t.lemma),
                MatchOn::Surface => normalize(&t.surface),
            })
            .collect()
    }

    /// Surfaces joined by single spaces.
    pub fn text(&self) -> String {
        self.phrase
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Crowdsourced feature annotations, deduplicated on
/// `(app_id, normalized lemma sequence)` keeping the first occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FeatureSet {
    features: Vec<Feature>,
}

impl FeatureSet {
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Self {
        let mut seen = HashSet::new();
        let features = features
            .into_iter()
            .filter(|f| seen.insert((f.app_id.clone(), f.key(MatchOn::Lemma))))
            .collect();
        FeatureSet { features }
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Distinct normalized phrases regardless of app.
    pub fn distinct_phrases(&self, on: MatchOn) -> BTreeSet<Vec<String>> {
        self.features.iter().map(|f| f.key(on)).collect()
    }
}
