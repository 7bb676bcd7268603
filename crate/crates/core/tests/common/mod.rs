#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use revfeat::{AnnotatedCorpus, Label, Review, Token};

pub const WORDS: [&str; 12] = [
    "to", "do", "list", "sync", "calendar", "video", "call", "is", "not", "working", "great", "app",
];
pub const CATEGORIES: [&str; 4] = ["CO", "HE", "PR", "TO"];

/// Random label sequence; `well_formed` forbids orphan I-feature.
pub fn random_labels(rng: &mut StdRng, n: usize, well_formed: bool) -> Vec<Label> {
    let mut prev = Label::O;
    (0..n)
        .map(|_| {
            let mut l = [Label::O, Label::O, Label::B, Label::I][rng.gen_range(0..4)];
            if well_formed && l == Label::I && prev == Label::O {
                l = Label::B;
            }
            prev = l;
            l
        })
        .collect()
}

/// Random corpus of at most `max_tokens` tokens in total.
pub fn random_corpus(rng: &mut StdRng, max_tokens: usize, well_formed: bool) -> AnnotatedCorpus {
    let mut reviews = Vec::new();
    let mut budget = rng.gen_range(1..=max_tokens);
    let mut id = 0;
    while budget > 0 {
        let n_sent = rng.gen_range(1..=3);
        let mut sentences = Vec::new();
        for _ in 0..n_sent {
            if budget == 0 {
                break;
            }
            let len = rng.gen_range(1..=budget.min(12));
            budget -= len;
            let labels = random_labels(rng, len, well_formed);
            sentences.push(
                labels
                    .into_iter()
                    .map(|l| Token::plain(*WORDS.choose(rng).unwrap()).unwrap().with_label(l))
                    .collect(),
            );
        }
        let category = *CATEGORIES.choose(rng).unwrap();
        reviews.push(Review::new(format!("r{id:04}"), format!("app{}", rng.gen_range(0..3)), category, sentences).unwrap());
        id += 1;
    }
    AnnotatedCorpus::new(reviews).unwrap()
}

/// Same shape as `gold`, with fresh random labels.
pub fn random_predictions(rng: &mut StdRng, gold: &AnnotatedCorpus, well_formed: bool) -> AnnotatedCorpus {
    let reviews = gold
        .reviews()
        .iter()
        .map(|r| {
            let labels: Vec<Vec<Label>> = r
                .sentences()
                .iter()
                .map(|s| random_labels(rng, s.len(), well_formed))
                .collect();
            r.relabel(|si, ti| labels[si][ti])
        })
        .collect();
    AnnotatedCorpus::new(reviews).unwrap()
}
