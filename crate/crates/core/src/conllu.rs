//! CoNLL-U reading and writing.
//!
//! Review metadata is carried in sentence comments (`# review_id = ...`,
//! `# app_id = ...`, `# category = ...`) placed before the first sentence of
//! each review; following sentences without a `review_id` comment belong to
//! the same review. BIO labels live in the MISC column as `ner=<label>`; a
//! missing `ner` key means `O`.
//!
//! Only FORM, LEMMA, UPOS and MISC/`ner` are retained. The canonical writer
//! emits `_` for the remaining columns, `_` for an empty UPOS, and omits
//! `ner=` for O tokens.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

use crate::model::{AnnotatedCorpus, Label, ModelError, Review, Sentence, Token};

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("reading input: {0}")]
    Io(#[from] std::io::Error),
}

fn syntax(line: usize, message: impl Into<String>) -> ConlluError {
    ConlluError::Syntax {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct Meta {
    review_id: Option<String>,
    app_id: Option<String>,
    category: Option<String>,
}

struct Building {
    review_id: String,
    app_id: String,
    category: String,
    sentences: Vec<Sentence>,
    first_line: usize,
}

struct Parser {
    reviews: Vec<Review>,
    current: Option<Building>,
    meta: Meta,
    tokens: Sentence,
    sentence_line: Option<usize>,
}

impl Parser {
    fn flush_review(&mut self) -> Result<(), ConlluError> {
        if let Some(b) = self.current.take() {
            let review = Review::new(b.review_id, b.app_id, b.category, b.sentences).map_err(
                |source| ConlluError::Model {
                    line: b.first_line,
                    source,
                },
            )?;
            self.reviews.push(review);
        }
        Ok(())
    }

    fn end_sentence(&mut self) -> Result<(), ConlluError> {
        let Some(start) = self.sentence_line.take() else {
            return Ok(());
        };
        let meta = std::mem::take(&mut self.meta);
        if self.tokens.is_empty() {
            return Err(syntax(start, "sentence has no token lines"));
        }
        let tokens = std::mem::take(&mut self.tokens);
        let continues = match (&meta.review_id, &self.current) {
            (None, Some(_)) => true,
            (Some(id), Some(b)) => *id == b.review_id,
            (None, None) => return Err(syntax(start, "sentence without a review_id comment")),
            (Some(_), None) => false,
        };
        if continues {
            let b = self.current.as_mut().expect("checked above");
            for (key, value) in [("app_id", &meta.app_id), ("category", &meta.category)] {
                let existing = if key == "app_id" { &b.app_id } else { &b.category };
                if let Some(v) = value {
                    if v != existing {
                        return Err(syntax(
                            start,
                            format!("{key} `{v}` conflicts with `{existing}` of review `{}`", b.review_id),
                        ));
                    }
                }
            }
            b.sentences.push(tokens);
        } else {
            self.flush_review()?;
            let review_id = meta.review_id.expect("checked above");
            let app_id = meta
                .app_id
                .ok_or_else(|| syntax(start, format!("review `{review_id}` has no app_id comment")))?;
            let category = meta
                .category
                .ok_or_else(|| syntax(start, format!("review `{review_id}` has no category comment")))?;
            self.current = Some(Building {
                review_id,
                app_id,
                category,
                sentences: vec![tokens],
                first_line: start,
            });
        }
        Ok(())
    }
}

fn parse_token_line(line_no: usize, line: &str, expected_id: usize) -> Result<Option<Token>, ConlluError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(syntax(
            line_no,
            format!("expected 10 tab-separated columns, found {}", cols.len()),
        ));
    }
    let id = cols[0];
    if id.contains('-') || id.contains('.') {
        // multi-word ranges and empty nodes
        return Ok(None);
    }
    let id: usize = id
        .parse()
        .map_err(|_| syntax(line_no, format!("invalid token id `{id}`")))?;
    if id != expected_id {
        return Err(syntax(
            line_no,
            format!("non-consecutive token id {id}, expected {expected_id}"),
        ));
    }
    let form = cols[1];
    let lemma = if cols[2] == "_" && form != "_" { form } else { cols[2] };
    let pos = if cols[3] == "_" { "" } else { cols[3] };
    let mut label = Label::O;
    if cols[9] != "_" {
        for entry in cols[9].split('|') {
            if let Some(value) = entry.strip_prefix("ner=") {
                label = value
                    .parse()
                    .map_err(|source| ConlluError::Model { line: line_no, source })?;
            }
        }
    }
    Token::new(form, lemma, pos, label)
        .map(Some)
        .map_err(|source| ConlluError::Model { line: line_no, source })
}

/// Parses a CoNLL-U document into a corpus.
pub fn parse_corpus(input: &str) -> Result<AnnotatedCorpus, ConlluError> {
    let mut p = Parser {
        reviews: Vec::new(),
        current: None,
        meta: Meta::default(),
        tokens: Vec::new(),
        sentence_line: None,
    };
    for (idx, raw) in input.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            p.end_sentence()?;
            continue;
        }
        p.sentence_line.get_or_insert(line_no);
        if let Some(comment) = line.strip_prefix('#') {
            if !p.tokens.is_empty() {
                return Err(syntax(line_no, "comment line inside a sentence"));
            }
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim().to_string();
                match key.trim() {
                    "review_id" => p.meta.review_id = Some(value),
                    "app_id" => p.meta.app_id = Some(value),
                    "category" => p.meta.category = Some(value),
                    _ => {}
                }
            }
            continue;
        }
        let expected = p.tokens.len() + 1;
        if let Some(token) = parse_token_line(line_no, line, expected)? {
            p.tokens.push(token);
        }
    }
    p.end_sentence()?;
    p.flush_review()?;
    AnnotatedCorpus::new(p.reviews).map_err(|source| ConlluError::Model { line: 0, source })
}

pub fn read_corpus(mut reader: impl Read) -> Result<AnnotatedCorpus, ConlluError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse_corpus(&text)
}

/// Writes the canonical CoNLL-U form of a corpus.
pub fn serialize_corpus(corpus: &AnnotatedCorpus) -> String {
    let mut out = String::new();
    for review in corpus.reviews() {
        let _ = writeln!(out, "# review_id = {}", review.review_id());
        let _ = writeln!(out, "# app_id = {}", review.app_id());
        let _ = writeln!(out, "# category = {}", review.category());
        for sentence in review.sentences() {
            for (i, t) in sentence.iter().enumerate() {
                let pos = if t.pos.is_empty() { "_" } else { t.pos.as_str() };
                let misc = match t.label {
                    Label::O => "_".to_string(),
                    l => format!("ner={l}"),
                };
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t_\t_\t_\t_\t_\t{}",
                    i + 1,
                    t.surface,
                    t.lemma,
                    pos,
                    misc
                );
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TODO: &str = "# review_id = r1\n# app_id = app1\n# category = PR\n\
1\tTo\tto\tPART\t_\t_\t_\t_\t_\tner=B-feature\n\
2\tdo\tdo\tVERB\t_\t_\t_\t_\t_\tner=I-feature\n\
3\tlist\tlist\tNOUN\t_\t_\t_\t_\t_\tner=I-feature\n\
4\tfunction\tfunction\tNOUN\t_\t_\t_\t_\t_\t_\n\
5\tis\tbe\tAUX\t_\t_\t_\t_\t_\t_\n\
6\tnot\tnot\tPART\t_\t_\t_\t_\t_\t_\n\
7\tworking\twork\tVERB\t_\t_\t_\t_\t_\t_\n\n";

    #[test]
    fn worked_example_labels() {
        let c = parse_corpus(TODO).unwrap();
        let r = &c.reviews()[0];
        let labels: Vec<Label> = r.tokens().map(|t| t.label).collect();
        use Label::*;
        assert_eq!(labels, vec![B, I, I, O, O, O, O]);
        assert_eq!(r.tokens().nth(4).unwrap().lemma, "be");
        assert_eq!(serialize_corpus(&c), TODO);
    }

    #[test]
    fn empty_input() {
        assert!(parse_corpus("").unwrap().is_empty());
        assert_eq!(serialize_corpus(&parse_corpus("").unwrap()), "");
    }

    #[test]
    fn categories_collected() {
        let two = "# review_id = a\n# app_id = app1\n# category = PR\n1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n\n\
# review_id = b\n# app_id = app1\n# category = PR\n1\ty\ty\t_\t_\t_\t_\t_\t_\t_\n";
        let c = parse_corpus(two).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.categories().iter().collect::<Vec<_>>(), vec!["PR"]);
    }

    #[test]
    fn continuation_sentences_and_ranges() {
        let text = "# review_id = a\n# app_id = x\n# category = TO\n# text = I can't\n\
1-2\tcan't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tca\tcan\tAUX\t_\t_\t0\troot\t_\tSpaceAfter=No\n2\tn't\tnot\tPART\t_\t_\t_\t_\t_\t_\n\n\
# sent_id = 2\n1\tok\t_\t_\t_\t_\t_\t_\t_\tner=B-feature|SpaceAfter=No\n\n";
        let c = parse_corpus(text).unwrap();
        let r = &c.reviews()[0];
        assert_eq!(r.sentences().len(), 2);
        assert_eq!(r.sentences()[0].len(), 2);
        assert_eq!(r.sentences()[1][0].lemma, "ok");
        assert_eq!(r.sentences()[1][0].label, Label::B);
    }

    fn err_line(text: &str) -> usize {
        match parse_corpus(text).unwrap_err() {
            ConlluError::Syntax { line, .. } | ConlluError::Model { line, .. } => line,
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let head = "# review_id = a\n# app_id = x\n# category = TO\n";
        assert_eq!(err_line(&format!("{head}1\tx\tx\t_\t_\t_\n")), 4);
        assert_eq!(err_line(&format!("{head}2\tx\tx\t_\t_\t_\t_\t_\t_\t_\n")), 4);
        assert_eq!(
            err_line(&format!("{head}1\tx\tx\t_\t_\t_\t_\t_\t_\tner=B-Feat\n")),
            4
        );
        assert_eq!(err_line("1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n"), 1);
        assert_eq!(err_line("# review_id = a\n# category = P\n1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n"), 1);
    }

    #[test]
    fn duplicate_review_rejected() {
        let block = "# review_id = a\n# app_id = x\n# category = TO\n1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n\n";
        let sep = "# review_id = b\n# app_id = x\n# category = TO\n1\tx\tx\t_\t_\t_\t_\t_\t_\t_\n\n";
        assert!(parse_corpus(&format!("{block}{sep}{block}")).is_err());
    }
}
