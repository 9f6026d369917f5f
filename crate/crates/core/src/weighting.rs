//! Per-token instance weights and the knowledge-based initializers
//! (raw, frequency, window, combined).

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::corpus::{Annotation, Corpus};
use crate::error::{Error, Result};

/// One nonnegative weight per token, indexed `[sentence][token]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<Vec<f64>>,
}

impl WeightVector {
    pub fn from_rows(weights: Vec<Vec<f64>>) -> Self {
        WeightVector { weights }
    }

    pub fn uniform<A: Annotation + ?Sized>(pa: &A, value: f64) -> Self {
        WeightVector {
            weights: (0..pa.num_sentences())
                .map(|s| vec![value; pa.sentence_len(s)])
                .collect(),
        }
    }

    pub fn get(&self, sent: usize, tok: usize) -> f64 {
        self.weights[sent][tok]
    }

    pub fn set(&mut self, sent: usize, tok: usize, w: f64) {
        self.weights[sent][tok] = w;
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().map(move |(t, &w)| (s, t, w)))
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_shape<A: Annotation + ?Sized>(&self, pa: &A) -> Result<()> {
        if self.weights.len() != pa.num_sentences() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight rows for {} sentences",
                self.weights.len(),
                pa.num_sentences()
            )));
        }
        for (s, row) in self.weights.iter().enumerate() {
            if row.len() != pa.sentence_len(s) {
                return Err(Error::ShapeMismatch(format!(
                    "sentence {s}: {} weights for {} tokens",
                    row.len(),
                    pa.sentence_len(s)
                )));
            }
        }
        Ok(())
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.iter().find(|&(_, _, w)| !(w >= 0.0 && w.is_finite())) {
            Some((sent, tok, weight)) => Err(Error::InvalidWeight { sent, tok, weight }),
            None => Ok(()),
        }
    }

    /// Sum of weights over tokens `pa` marks negative.
    pub fn negative_mass<A: Annotation + ?Sized>(&self, pa: &A) -> f64 {
        self.iter()
            .filter(|&(s, t, _)| !pa.is_positive(s, t))
            .map(|(_, _, w)| w)
            .sum()
    }

    /// Every weight clamped into `[0, 1]`.
    pub fn clamped(&self) -> WeightVector {
        WeightVector {
            weights: self
                .weights
                .iter()
                .map(|r| r.iter().map(|w| w.clamp(0.0, 1.0)).collect())
                .collect(),
        }
    }

    /// Writes the tab-separated sidecar: header, then `sent_idx tok_idx weight`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sent_idx\ttok_idx\tweight")?;
        for (s, t, v) in self.iter() {
            writeln!(w, "{s}\t{t}\t{}", format_significant(v, 9))?;
        }
        Ok(())
    }

    /// Reads a sidecar file; every token of `pa` must be covered exactly once.
    pub fn read_tsv<R: BufRead, A: Annotation + ?Sized>(reader: R, pa: &A) -> Result<Self> {
        let mut rows: Vec<Vec<Option<f64>>> = (0..pa.num_sentences())
            .map(|s| vec![None; pa.sentence_len(s)])
            .collect();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
            }
            let s: usize = cols[0].parse().map_err(|e| parse_err(format!("sent_idx: {e}")))?;
            let t: usize = cols[1].parse().map_err(|e| parse_err(format!("tok_idx: {e}")))?;
            let w: f64 = cols[2].parse().map_err(|e| parse_err(format!("weight: {e}")))?;
            let slot = rows
                .get_mut(s)
                .and_then(|r| r.get_mut(t))
                .ok_or_else(|| parse_err(format!("token ({s}, {t}) not in corpus")))?;
            if slot.replace(w).is_some() {
                return Err(parse_err(format!("duplicate token ({s}, {t})")));
            }
        }
        let weights = rows
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(t, w)| {
                        w.ok_or_else(|| {
                            Error::ShapeMismatch(format!("no weight for token ({s}, {t})"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightVector { weights })
    }
}

/// Formats like C's `%.{digits}g`.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Raw,
    Freq,
    Window,
    Combined,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Scheme::Raw),
            "freq" => Ok(Scheme::Freq),
            "window" => Ok(Scheme::Window),
            "combined" => Ok(Scheme::Combined),
            _ => Err(Error::InvalidArgument(format!(
                "unknown weighting scheme {s:?} (expected raw|freq|window|combined)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Raw => "raw",
            Scheme::Freq => "freq",
            Scheme::Window => "window",
            Scheme::Combined => "combined",
        })
    }
}

/// Surface counts used by the frequency scheme.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    max: u64,
}

impl FrequencyTable {
    /// Counts every token surface in the corpus, positives included.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for s in corpus.sentences() {
            for t in s.tokens() {
                *counts.entry(t.surface.clone()).or_default() += 1;
            }
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let max = counts.values().copied().max().unwrap_or(0);
        FrequencyTable { counts, max }
    }

    /// Reads `surface<TAB>count` lines.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut counts = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (surface, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected surface<TAB>count".into(),
            })?;
            let count: u64 = count.trim().parse().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("count: {e}"),
            })?;
            counts.insert(surface.to_string(), count);
        }
        Ok(Self::from_counts(counts))
    }

    pub fn count(&self, surface: &str) -> u64 {
        self.counts.get(surface).copied().unwrap_or(0)
    }

    pub fn max_count(&self) -> u64 {
        self.max
    }

    /// Normalized frequency in `[0, 1]`, optionally on a log scale.
    pub fn weight(&self, surface: &str, log_scale: bool) -> f64 {
        if self.max == 0 {
            return 0.0;
        }
        let c = self.count(surface) as f64;
        let m = self.max as f64;
        let w = if log_scale {
            (1.0 + c).ln() / (1.0 + m).ln()
        } else {
            c / m
        };
        w.min(1.0)
    }
}

/// Raw initializer: every token weighs 1.
pub fn raw_weights(pa: &Corpus) -> WeightVector {
    WeightVector::uniform(pa, 1.0)
}

pub fn freq_weights(pa: &Corpus, log_scale: bool) -> WeightVector {
    freq_weights_with(pa, &FrequencyTable::from_corpus(pa), log_scale)
}

/// Frequency weights against an explicit count table.
pub fn freq_weights_with(pa: &Corpus, table: &FrequencyTable, log_scale: bool) -> WeightVector {
    let weights = pa
        .sentences()
        .iter()
        .enumerate()
        .map(|(s, sent)| {
            (0..sent.len())
                .map(|t| {
                    if pa.is_positive(s, t) {
                        1.0
                    } else {
                        table.weight(sent.surface(t), log_scale)
                    }
                })
                .collect()
        })
        .collect();
    WeightVector::from_rows(weights)
}

/// Distance from each token to the nearest positive token in the same
/// sentence; `None` when the sentence has no positives.
pub fn positive_distances<A: Annotation + ?Sized>(pa: &A, sent: usize) -> Vec<Option<usize>> {
    let n = pa.sentence_len(sent);
    let positives: Vec<usize> = (0..n).filter(|&t| pa.is_positive(sent, t)).collect();
    (0..n)
        .map(|t| positives.iter().map(|&p| p.abs_diff(t)).min())
        .collect()
}

pub fn window_weights(pa: &Corpus) -> WeightVector {
    let weights = (0..pa.num_sentences())
        .map(|s| {
            positive_distances(pa, s)
                .into_iter()
                .map(|d| if matches!(d, Some(d) if d <= 1) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    WeightVector::from_rows(weights)
}

pub fn combined_weights(pa: &Corpus, log_scale: bool) -> WeightVector {
    combined_weights_with(pa, &FrequencyTable::from_corpus(pa), log_scale)
}

pub fn combined_weights_with(
    pa: &Corpus,
    table: &FrequencyTable,
    log_scale: bool,
) -> WeightVector {
    let mut v = freq_weights_with(pa, table, log_scale);
    for s in 0..pa.num_sentences() {
        for (t, d) in positive_distances(pa, s).into_iter().enumerate() {
            if matches!(d, Some(d) if d <= 1) {
                v.set(s, t, 1.0);
            }
        }
    }
    v
}

/// Dispatches on `scheme`; `table` overrides corpus-internal counts.
pub fn initial_weights(
    pa: &Corpus,
    scheme: Scheme,
    log_scale: bool,
    table: Option<&FrequencyTable>,
) -> WeightVector {
    let own;
    let table = match table {
        Some(t) => t,
        None if matches!(scheme, Scheme::Freq | Scheme::Combined) => {
            own = FrequencyTable::from_corpus(pa);
            &own
        }
        None => &FrequencyTable::default(),
    };
    match scheme {
        Scheme::Raw => raw_weights(pa),
        Scheme::Freq => freq_weights_with(pa, table, log_scale),
        Scheme::Window => window_weights(pa),
        Scheme::Combined => combined_weights_with(pa, table, log_scale),
    }
}
