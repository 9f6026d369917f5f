//! Tokenized corpora with BIO tags, CoNLL column I/O, span conversion,
//! entity ratios and span-level scoring.
//!
//! A corpus read from a partially annotated file doubles as the partial
//! annotation itself: the positive set is every token under a non-`O` tag
//! and the negative set is everything else.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighting::WeightVector;

/// Label name used for the collapsed entity class.
pub const ENTITY_LABEL: &str = "ENT";
/// Label name of the outside class. Always label index 0.
pub const OUTSIDE_LABEL: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::Outside)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let (prefix, etype) = s
            .split_once('-')
            .ok_or_else(|| format!("unknown tag {s:?}"))?;
        if etype.is_empty() {
            return Err(format!("tag {s:?} has an empty entity type"));
        }
        match prefix {
            "B" => Ok(Tag::Begin(etype.to_string())),
            "I" => Ok(Tag::Inside(etype.to_string())),
            _ => Err(format!("unknown tag prefix in {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenRef {
    pub sent: usize,
    pub tok: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub sent_idx: usize,
    pub tok_idx: usize,
}

/// A tokenized sentence with one valid BIO tag per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<Token>,
    tags: Vec<Tag>,
}

impl Sentence {
    /// Builds a sentence, repairing any `I-X` that does not continue an
    /// `X` span into `B-X`.
    pub fn new<S: Into<String>>(surfaces: Vec<S>, tags: Vec<Tag>) -> Result<Self> {
        if surfaces.len() != tags.len() {
            return Err(Error::InvalidSentence(format!(
                "{} tokens but {} tags",
                surfaces.len(),
                tags.len()
            )));
        }
        let tokens = surfaces
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let surface = s.into();
                if surface.is_empty() || surface.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidSentence(format!(
                        "token {i} surface {surface:?} is empty or contains whitespace"
                    )));
                }
                Ok(Token {
                    surface,
                    sent_idx: 0,
                    tok_idx: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sentence {
            tokens,
            tags: repair_bio(tags),
        })
    }

    /// Builds an all-`O` sentence.
    pub fn untagged<S: Into<String>>(surfaces: Vec<S>) -> Result<Self> {
        let n = surfaces.len();
        Sentence::new(surfaces, vec![Tag::Outside; n])
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn surface(&self, i: usize) -> &str {
        &self.tokens[i].surface
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    pub fn spans(&self) -> Vec<Span> {
        spans_from_bio(&self.tags)
    }

    /// Returns a copy with tags replaced (and repaired).
    pub fn with_tags(&self, tags: Vec<Tag>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(Error::InvalidSentence(format!(
                "{} tokens but {} tags",
                self.len(),
                tags.len()
            )));
        }
        Ok(Sentence {
            tokens: self.tokens.clone(),
            tags: repair_bio(tags),
        })
    }

    /// Returns a copy tagged with exactly `spans`.
    pub fn with_spans(&self, spans: &[Span]) -> Result<Self> {
        let tags = bio_from_spans(self.len(), spans)?;
        self.with_tags(tags)
    }
}

/// Rewrites every `I-X` not preceded by `B-X` or `I-X` into `B-X`.
pub fn repair_bio(mut tags: Vec<Tag>) -> Vec<Tag> {
    for i in 0..tags.len() {
        if let Tag::Inside(t) = &tags[i] {
            let continues = i > 0 && tags[i - 1].entity_type() == Some(t.as_str());
            if !continues {
                tags[i] = Tag::Begin(t.clone());
            }
        }
    }
    tags
}

/// A typed entity mention `[start, end)` within one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub etype: String,
}

impl Span {
    pub fn new(start: usize, end: usize, etype: impl Into<String>) -> Self {
        Span {
            start,
            end,
            etype: etype.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// A span tied to its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpanLabel {
    pub sent_idx: usize,
    pub span: Span,
}

pub fn spans_from_bio(tags: &[Tag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                if let Some((s, t)) = open.take() {
                    spans.push(Span::new(s, i, t));
                }
            }
            Tag::Begin(t) => {
                if let Some((s, prev)) = open.take() {
                    spans.push(Span::new(s, i, prev));
                }
                open = Some((i, t));
            }
            Tag::Inside(t) => match open {
                Some((_, prev)) if prev == t => {}
                _ => {
                    // only reachable for unrepaired input; treat as a new span
                    if let Some((s, prev)) = open.take() {
                        spans.push(Span::new(s, i, prev));
                    }
                    open = Some((i, t));
                }
            },
        }
    }
    if let Some((s, t)) = open {
        spans.push(Span::new(s, tags.len(), t));
    }
    spans
}

pub fn bio_from_spans(len: usize, spans: &[Span]) -> Result<Vec<Tag>> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort();
    for s in &sorted {
        if s.start >= s.end || s.end > len {
            return Err(Error::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::OverlappingSpans(
                w[0].start, w[0].end, w[1].start, w[1].end,
            ));
        }
    }
    let mut tags = vec![Tag::Outside; len];
    for s in sorted {
        tags[s.start] = Tag::Begin(s.etype.clone());
        for t in &mut tags[s.start + 1..s.end] {
            *t = Tag::Inside(s.etype.clone());
        }
    }
    Ok(tags)
}

/// Read access to which tokens are annotated positive.
pub trait Annotation {
    fn num_sentences(&self) -> usize;
    fn sentence_len(&self, sent: usize) -> usize;
    fn is_positive(&self, sent: usize, tok: usize) -> bool;

    fn token_count(&self) -> usize {
        (0..self.num_sentences()).map(|s| self.sentence_len(s)).sum()
    }

    fn positive_count(&self) -> usize {
        (0..self.num_sentences())
            .map(|s| {
                (0..self.sentence_len(s))
                    .filter(|&t| self.is_positive(s, t))
                    .count()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    label_set: Vec<String>,
}

impl Corpus {
    /// Builds a corpus; the label set is the sorted set of entity types in use.
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let types: BTreeSet<String> = sentences
            .iter()
            .flat_map(|s| s.tags.iter().filter_map(|t| t.entity_type().map(String::from)))
            .collect();
        Self::with_label_set(sentences, types)
    }

    /// Builds a corpus whose label set is `types` plus any type in use.
    pub fn with_label_set(
        mut sentences: Vec<Sentence>,
        types: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut set: BTreeSet<String> = types.into_iter().collect();
        for (si, s) in sentences.iter_mut().enumerate() {
            for (ti, tok) in s.tokens.iter_mut().enumerate() {
                tok.sent_idx = si;
                tok.tok_idx = ti;
            }
            set.extend(s.tags.iter().filter_map(|t| t.entity_type().map(String::from)));
        }
        Corpus {
            sentences,
            label_set: set.into_iter().collect(),
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn label_set(&self) -> &[String] {
        &self.label_set
    }

    /// BIO tagset size: `2 * |types| + 1`.
    pub fn tagset_size(&self) -> usize {
        2 * self.label_set.len() + 1
    }

    pub fn span_labels(&self) -> Vec<SpanLabel> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| {
                s.spans()
                    .into_iter()
                    .map(move |span| SpanLabel { sent_idx: i, span })
            })
            .collect()
    }

    pub fn span_count(&self) -> usize {
        self.sentences.iter().map(|s| s.spans().len()).sum()
    }

    /// Copy of the corpus with each sentence retagged by `f`.
    pub fn map_sentences<F>(&self, mut f: F) -> Result<Corpus>
    where
        F: FnMut(usize, &Sentence) -> Result<Sentence>,
    {
        let sentences = self
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| f(i, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::with_label_set(sentences, self.label_set.clone()))
    }

    /// Checks that `other` has identical sentence count, lengths and surfaces.
    pub fn check_aligned(&self, other: &Corpus) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::TokenizationMismatch(format!(
                "{} vs {} sentences",
                self.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.sentences.iter().zip(&other.sentences).enumerate() {
            if a.len() != b.len() {
                return Err(Error::TokenizationMismatch(format!(
                    "sentence {i}: {} vs {} tokens",
                    a.len(),
                    b.len()
                )));
            }
            for (j, (x, y)) in a.tokens.iter().zip(&b.tokens).enumerate() {
                if x.surface != y.surface {
                    return Err(Error::TokenizationMismatch(format!(
                        "sentence {i} token {j}: {:?} vs {:?}",
                        x.surface, y.surface
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Annotation for Corpus {
    fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    fn sentence_len(&self, sent: usize) -> usize {
        self.sentences[sent].len()
    }

    fn is_positive(&self, sent: usize, tok: usize) -> bool {
        !self.sentences[sent].tags[tok].is_outside()
    }
}

/// Reads CoNLL column text. The tag is the last whitespace-separated column;
/// blank lines separate sentences and `-DOCSTART-` lines are skipped.
pub fn read_conll<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut surfaces: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();

    let mut flush = |surfaces: &mut Vec<String>, tags: &mut Vec<Tag>| -> Result<()> {
        if !surfaces.is_empty() {
            sentences.push(Sentence::new(
                std::mem::take(surfaces),
                std::mem::take(tags),
            )?);
        }
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut surfaces, &mut tags)?;
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            flush(&mut surfaces, &mut tags)?;
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected at least 2 columns, found {:?}", line.trim()),
            });
        }
        let tag: Tag = cols[cols.len() - 1]
            .parse()
            .map_err(|msg| Error::Parse { line: lineno, msg })?;
        surfaces.push(cols[0].to_string());
        tags.push(tag);
    }
    flush(&mut surfaces, &mut tags)?;
    Ok(Corpus::new(sentences))
}

pub fn read_conll_str(text: &str) -> Result<Corpus> {
    read_conll(text.as_bytes())
}

/// Writes two-column `surface tag` lines with a blank line after each sentence.
pub fn write_conll<W: Write>(corpus: &Corpus, mut w: W) -> Result<()> {
    for s in &corpus.sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            writeln!(w, "{} {}", tok.surface, tag)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_conll_string(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_conll(corpus, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("corpus text is utf-8")
}

/// `|P| / (|P| + |N|)` at token level.
pub fn entity_ratio<A: Annotation + ?Sized>(pa: &A) -> Result<f64> {
    let total = pa.token_count();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(pa.positive_count() as f64 / total as f64)
}

/// `|P| / (|P| + sum of N weights)`. Weights on positive tokens are ignored.
pub fn weighted_entity_ratio<A: Annotation + ?Sized>(pa: &A, v: &WeightVector) -> Result<f64> {
    v.check_shape(pa)?;
    let mut positives = 0usize;
    let mut negative_mass = 0.0;
    for s in 0..pa.num_sentences() {
        for t in 0..pa.sentence_len(s) {
            let w = v.get(s, t);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidWeight {
                    sent: s,
                    tok: t,
                    weight: w,
                });
            }
            if pa.is_positive(s, t) {
                positives += 1;
            } else {
                negative_mass += w;
            }
        }
    }
    let denom = positives as f64 + negative_mass;
    if denom == 0.0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(positives as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Scores {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores {
            precision,
            recall,
            f1,
            correct,
            predicted,
            gold,
        }
    }
}

impl fmt::Display for Scores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "precision {:.2} recall {:.2} f1 {:.2}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1
        )
    }
}

/// Micro-averaged exact-match span scoring (boundaries and type).
pub fn span_f1(gold: &Corpus, pred: &Corpus) -> Result<Scores> {
    gold.check_aligned(pred)?;
    let (mut correct, mut predicted, mut total_gold) = (0, 0, 0);
    for (g, p) in gold.sentences.iter().zip(&pred.sentences) {
        let gs: BTreeSet<Span> = g.spans().into_iter().collect();
        let ps = p.spans();
        total_gold += gs.len();
        predicted += ps.len();
        correct += ps.iter().filter(|s| gs.contains(s)).count();
    }
    Ok(Scores::from_counts(correct, predicted, total_gold))
}

/// Per-token label ids over a fixed label list, `O` at index 0.
///
/// This is the form the taggers train on: either the BIO expansion of a
/// corpus's types or the collapsed binary `{O, ENT}` labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    label_names: Vec<String>,
    tokens: Vec<Vec<String>>,
    labels: Vec<Vec<usize>>,
}

impl LabeledCorpus {
    pub fn new(
        label_names: Vec<String>,
        tokens: Vec<Vec<String>>,
        labels: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if label_names.len() < 2 || label_names[0] != OUTSIDE_LABEL {
            return Err(Error::InvalidArgument(format!(
                "label list must have O first and at least 2 labels, got {label_names:?}"
            )));
        }
        if tokens.len() != labels.len() {
            return Err(Error::ShapeMismatch("token and label sentence counts differ".into()));
        }
        for (i, (t, l)) in tokens.iter().zip(&labels).enumerate() {
            if t.len() != l.len() {
                return Err(Error::ShapeMismatch(format!("sentence {i} length")));
            }
            if let Some(&bad) = l.iter().find(|&&x| x >= label_names.len()) {
                return Err(Error::InvalidArgument(format!("label id {bad} out of range")));
            }
        }
        Ok(LabeledCorpus {
            label_names,
            tokens,
            labels,
        })
    }

    /// BIO labels `O, B-T1, I-T1, B-T2, ...` over `types`.
    pub fn bio_label_names(types: &[String]) -> Vec<String> {
        let mut names = vec![OUTSIDE_LABEL.to_string()];
        for t in types {
            names.push(format!("B-{t}"));
            names.push(format!("I-{t}"));
        }
        names
    }

    pub fn bio(corpus: &Corpus) -> Self {
        let names = Self::bio_label_names(corpus.label_set());
        let labels = corpus
            .sentences()
            .iter()
            .map(|s| {
                s.tags()
                    .iter()
                    .map(|t| {
                        let name = t.to_string();
                        names.iter().position(|n| *n == name).expect("type in label set")
                    })
                    .collect()
            })
            .collect();
        LabeledCorpus {
            label_names: names,
            tokens: surfaces_of(corpus),
            labels,
        }
    }

    /// Collapses every entity tag to `ENT`.
    pub fn binary(corpus: &Corpus) -> Self {
        let labels = corpus
            .sentences()
            .iter()
            .map(|s| s.tags().iter().map(|t| usize::from(!t.is_outside())).collect())
            .collect();
        LabeledCorpus {
            label_names: vec![OUTSIDE_LABEL.to_string(), ENTITY_LABEL.to_string()],
            tokens: surfaces_of(corpus),
            labels,
        }
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_labels(&self) -> usize {
        self.label_names.len()
    }

    pub fn tokens(&self) -> &[Vec<String>] {
        &self.tokens
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn label(&self, r: TokenRef) -> usize {
        self.labels[r.sent][r.tok]
    }

    pub fn set_label(&mut self, r: TokenRef, label: usize) {
        assert!(label < self.label_names.len());
        self.labels[r.sent][r.tok] = label;
    }
}

impl Annotation for LabeledCorpus {
    fn num_sentences(&self) -> usize {
        self.tokens.len()
    }

    fn sentence_len(&self, sent: usize) -> usize {
        self.tokens[sent].len()
    }

    fn is_positive(&self, sent: usize, tok: usize) -> bool {
        self.labels[sent][tok] != 0
    }
}

fn surfaces_of(corpus: &Corpus) -> Vec<Vec<String>> {
    corpus
        .sentences()
        .iter()
        .map(|s| s.tokens().iter().map(|t| t.surface.clone()).collect())
        .collect()
}

/// Rebuilds a tagged corpus from the surfaces of `template` and predicted
/// BIO label strings, repairing invalid transitions.
pub fn corpus_from_labels(template: &Corpus, labels: &[Vec<String>]) -> Result<Corpus> {
    if labels.len() != template.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} label rows for {} sentences",
            labels.len(),
            template.len()
        )));
    }
    template.map_sentences(|i, s| {
        let tags = labels[i]
            .iter()
            .map(|l| {
                l.parse::<Tag>()
                    .map_err(|msg| Error::InvalidArgument(format!("sentence {i}: {msg}")))
            })
            .collect::<Result<Vec<_>>>()?;
        s.with_tags(tags)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn reads_figure_sentence() {
        let c = read_conll_str("Arsenal B-ORG\ncoach O\nUnai B-PER\nEmery I-PER\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(
            c.sentences()[0].spans(),
            vec![Span::new(0, 1, "ORG"), Span::new(2, 4, "PER")]
        );
        assert_eq!(c.label_set(), &["ORG".to_string(), "PER".to_string()]);
        assert_eq!(c.tagset_size(), 5);
    }

    #[test]
    fn empty_stream_gives_empty_corpus() {
        let c = read_conll_str("").unwrap();
        assert!(c.is_empty());
        assert_eq!(write_conll_string(&c), "");
    }

    #[test]
    fn leading_inside_is_repaired() {
        let c = read_conll_str("X I-LOC\n").unwrap();
        assert_eq!(c.sentences()[0].tags(), &[Tag::Begin("LOC".into())]);
        assert_eq!(c.sentences()[0].spans(), vec![Span::new(0, 1, "LOC")]);
        // type switch mid-span also opens a new span
        let c = read_conll_str("a B-PER\nb I-LOC\nc I-LOC\n").unwrap();
        assert_eq!(
            c.sentences()[0].spans(),
            vec![Span::new(0, 1, "PER"), Span::new(1, 3, "LOC")]
        );
    }

    #[test]
    fn four_column_lines_use_last_column() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n\n";
        let c = read_conll_str(text).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences()[0].surfaces(), vec!["EU", "rejects"]);
        assert_eq!(c.sentences()[0].spans(), vec![Span::new(0, 1, "ORG")]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match read_conll_str("a O\nlonely\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match read_conll_str("a O\n\nb X-PER\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("prefix"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn writes_golden_multi_token_span() {
        let s = Sentence::new(
            vec!["coach", "Unai", "Emery", "said"],
            tags("O B-PER I-PER O"),
        )
        .unwrap();
        let c = Corpus::new(vec![s.clone(), s]);
        let golden = "coach O\nUnai B-PER\nEmery I-PER\nsaid O\n\n\
                      coach O\nUnai B-PER\nEmery I-PER\nsaid O\n\n";
        assert_eq!(write_conll_string(&c), golden);
        assert_eq!(read_conll_str(golden).unwrap(), c);
    }

    #[test]
    fn span_examples() {
        assert_eq!(spans_from_bio(&tags("O B-PER I-PER O")), vec![Span::new(1, 3, "PER")]);
        assert!(spans_from_bio(&tags("O O O")).is_empty());
        assert_eq!(
            spans_from_bio(&tags("B-LOC B-LOC")),
            vec![Span::new(0, 1, "LOC"), Span::new(1, 2, "LOC")]
        );
        assert_eq!(bio_from_spans(4, &[Span::new(1, 3, "PER")]).unwrap(), tags("O B-PER I-PER O"));
        assert_eq!(bio_from_spans(3, &[]).unwrap(), tags("O O O"));
        assert_eq!(
            bio_from_spans(2, &[Span::new(1, 2, "LOC"), Span::new(0, 1, "LOC")]).unwrap(),
            tags("B-LOC B-LOC")
        );
    }

    #[test]
    fn overlapping_spans_rejected() {
        let err = bio_from_spans(5, &[Span::new(0, 3, "PER"), Span::new(2, 4, "ORG")]);
        assert!(matches!(err, Err(Error::OverlappingSpans(0, 3, 2, 4))));
        let err = bio_from_spans(2, &[Span::new(1, 3, "PER")]);
        assert!(matches!(err, Err(Error::SpanOutOfRange { .. })));
    }

    #[test]
    fn entity_ratio_examples() {
        let mut sents = Vec::new();
        let mut t = vec![Tag::Outside; 20];
        t[3] = Tag::Begin("PER".into());
        t[4] = Tag::Inside("PER".into());
        t[10] = Tag::Begin("LOC".into());
        sents.push(Sentence::new((0..20).map(|i| format!("w{i}")).collect(), t).unwrap());
        let c = Corpus::new(sents);
        assert!((entity_ratio(&c).unwrap() - 0.15).abs() < 1e-15);

        let none = Corpus::new(vec![Sentence::untagged(vec!["a", "b"]).unwrap()]);
        assert_eq!(entity_ratio(&none).unwrap(), 0.0);
        assert!(matches!(entity_ratio(&Corpus::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn weighted_ratio_examples() {
        // 10 positives, 180 negative tokens
        let mut t = vec![Tag::Outside; 190];
        for tag in t.iter_mut().take(10) {
            *tag = Tag::Begin("PER".into());
        }
        let c = Corpus::new(vec![Sentence::new(
            (0..190).map(|i| format!("w{i}")).collect(),
            t,
        )
        .unwrap()]);
        let ones = WeightVector::uniform(&c, 1.0);
        assert_eq!(
            weighted_entity_ratio(&c, &ones).unwrap(),
            entity_ratio(&c).unwrap()
        );
        assert!((weighted_entity_ratio(&c, &ones).unwrap() - 10.0 / 190.0).abs() < 1e-15);

        let mut zeros = WeightVector::uniform(&c, 0.0);
        for i in 0..10 {
            zeros.set(0, i, 1.0);
        }
        assert_eq!(weighted_entity_ratio(&c, &zeros).unwrap(), 1.0);

        let mut neg = ones.clone();
        neg.set(0, 50, -0.5);
        assert!(matches!(
            weighted_entity_ratio(&c, &neg),
            Err(Error::InvalidWeight { .. })
        ));
    }

    #[test]
    fn span_f1_examples() {
        let base = vec!["a", "b", "c", "d", "e", "f", "g", "h"];
        let gold = Corpus::new(vec![Sentence::new(
            base.clone(),
            bio_from_spans(8, &[Span::new(1, 3, "PER"), Span::new(5, 6, "ORG")]).unwrap(),
        )
        .unwrap()]);
        let pred = Corpus::new(vec![Sentence::new(
            base.clone(),
            bio_from_spans(8, &[Span::new(1, 3, "PER"), Span::new(5, 7, "ORG")]).unwrap(),
        )
        .unwrap()]);
        let s = span_f1(&gold, &pred).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));

        let same = span_f1(&gold, &gold).unwrap();
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));

        let empty = Corpus::new(vec![Sentence::untagged(base.clone()).unwrap()]);
        let s = span_f1(&gold, &empty).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        let other = Corpus::new(vec![Sentence::untagged(vec!["x"]).unwrap()]);
        assert!(matches!(
            span_f1(&gold, &other),
            Err(Error::TokenizationMismatch(_))
        ));
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        proptest::collection::vec(
            ("[a-zA-Z]{1,6}", 0usize..7),
            1..20,
        )
        .prop_map(|toks| {
            let names = ["PER", "LOC", "ORG"];
            let tags = toks
                .iter()
                .map(|(_, k)| match k {
                    0..=2 => Tag::Outside,
                    3 | 4 => Tag::Begin(names[k % 3].to_string()),
                    _ => Tag::Inside(names[k % 3].to_string()),
                })
                .collect();
            Sentence::new(toks.into_iter().map(|(s, _)| s).collect(), tags).unwrap()
        })
    }

    proptest! {
        #[test]
        fn bio_span_round_trip(s in arb_sentence()) {
            let spans = s.spans();
            prop_assert_eq!(bio_from_spans(s.len(), &spans).unwrap(), s.tags().to_vec());
        }

        #[test]
        fn conll_round_trip(sents in proptest::collection::vec(arb_sentence(), 0..6)) {
            let c = Corpus::new(sents);
            let back = read_conll_str(&write_conll_string(&c)).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn f1_precision_recall_swap(a in arb_sentence(), seed in 0u64..1000) {
            // same surfaces, different tags
            let n = a.len();
            let alt: Vec<Tag> = (0..n)
                .map(|i| if (seed >> (i % 10)) & 1 == 1 { Tag::Begin("PER".into()) } else { Tag::Outside })
                .collect();
            let b = a.with_tags(alt).unwrap();
            let ca = Corpus::new(vec![a]);
            let cb = Corpus::new(vec![b]);
            let ab = span_f1(&ca, &cb).unwrap();
            let ba = span_f1(&cb, &ca).unwrap();
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
            let r = entity_ratio(&ca).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }
}
