//! Common interface of the weighted taggers.

use crate::corpus::{corpus_from_labels, Corpus, LabeledCorpus, OUTSIDE_LABEL};
use crate::error::{Error, Result};
use crate::weighting::WeightVector;

/// Predicted label ids and per-token label distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<Vec<usize>>,
    pub distributions: Vec<Vec<Vec<f64>>>,
}

impl Prediction {
    /// Probability of label 0 (`O`) per token.
    pub fn outside_confidence(&self) -> WeightVector {
        WeightVector::from_rows(
            self.distributions
                .iter()
                .map(|s| s.iter().map(|d| d[0]).collect())
                .collect(),
        )
    }
}

pub trait Tagger {
    fn label_names(&self) -> &[String];

    fn predict_sentence(&self, tokens: &[String]) -> (Vec<usize>, Vec<Vec<f64>>);

    fn predict(&self, sentences: &[Vec<String>]) -> Prediction {
        let (labels, distributions) = sentences
            .iter()
            .map(|s| self.predict_sentence(s))
            .unzip();
        Prediction {
            labels,
            distributions,
        }
    }

    /// Tags a corpus, repairing any invalid BIO transitions in the output.
    fn tag_corpus(&self, corpus: &Corpus) -> Result<Corpus> {
        let sentences: Vec<Vec<String>> = corpus
            .sentences()
            .iter()
            .map(|s| s.surfaces().into_iter().map(String::from).collect())
            .collect();
        let pred = self.predict(&sentences);
        let names = self.label_names();
        let labels: Vec<Vec<String>> = pred
            .labels
            .iter()
            .map(|row| row.iter().map(|&l| names[l].clone()).collect())
            .collect();
        corpus_from_labels(corpus, &labels)
    }

    /// `P(O | x_i)` per token; only defined for binary `{O, ENT}` models.
    fn confidence_outside(&self, sentences: &[Vec<String>]) -> Result<WeightVector> {
        let names = self.label_names();
        if names.len() != 2 || names[0] != OUTSIDE_LABEL {
            return Err(Error::Model(format!(
                "confidence of O requires a binary model, labels are {names:?}"
            )));
        }
        Ok(self.predict(sentences).outside_confidence())
    }
}

/// Trains a tagger from labeled tokens with per-token instance weights.
pub trait Trainer {
    type Model: Tagger;

    fn train(&self, data: &LabeledCorpus, weights: &WeightVector, seed: u64) -> Result<Self::Model>;
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest score, lowest index on ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[3.0, 3.0]), vec![0.5, 0.5]);
        let p = softmax(&[10.0, 0.0]);
        // 1 / (1 + e^-10)
        assert!((p[0] - 0.999_954_602_131_297_6).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }
}
