//! Weighted averaged perceptron token classifier.
//!
//! Each token is one training instance `(features, label, weight)`. A
//! mistake on instance `i` moves the gold label's weights up and the
//! predicted label's weights down by `alpha * v_i` per active feature; an
//! instance with `v_i = 0` never updates. The returned weights are the
//! mean of the weight vector over every post-update snapshot.
//!
//! During training the previous-tag feature carries the gold previous
//! label, so every instance is self-contained. Prediction decodes greedily
//! left to right with the previously predicted label.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::features::{prev_tag_feature, Clusters, FeatureExtractor, FeatureIndex, FeatureVector, START_TAG};
use crate::model::{argmax, softmax, Tagger, Trainer};
use crate::weighting::WeightVector;

const FORMAT: &str = "cbl-ner/perceptron";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: FeatureVector,
    pub label: usize,
    pub weight: f64,
}

/// Training instances grouped by sentence; the sentence is the shuffle unit.
pub type InstanceSet = Vec<Vec<Instance>>;

pub fn build_instances(
    data: &LabeledCorpus,
    weights: &WeightVector,
    extractor: &FeatureExtractor,
) -> Result<InstanceSet> {
    weights.check_shape(data)?;
    weights.check_nonnegative()?;
    let names = data.label_names();
    Ok(data
        .tokens()
        .iter()
        .zip(data.labels())
        .enumerate()
        .map(|(s, (toks, labels))| {
            (0..toks.len())
                .map(|i| {
                    let prev = if i == 0 { START_TAG } else { names[labels[i - 1]].as_str() };
                    Instance {
                        features: extractor.extract(toks, i, prev),
                        label: labels[i],
                        weight: weights.get(s, i),
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        PerceptronConfig {
            epochs: 5,
            learning_rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronModel {
    labels: Vec<String>,
    features: FeatureIndex,
    /// Averaged weights, `features.len() * labels.len()`, feature-major.
    weights: Vec<f64>,
    learning_rate: f64,
    updates: u64,
    extractor: FeatureExtractor,
}

impl PerceptronModel {
    /// A model with no features: every label scores zero.
    pub fn untrained(labels: Vec<String>, learning_rate: f64) -> Self {
        PerceptronModel {
            labels,
            features: FeatureIndex::new(),
            weights: Vec::new(),
            learning_rate,
            updates: 0,
            extractor: FeatureExtractor::default(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Number of weight updates applied during training.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn with_extractor(mut self, extractor: FeatureExtractor) -> Self {
        self.extractor = extractor;
        self
    }

    /// Averaged weights keyed by feature name, one entry per label.
    pub fn weight_map(&self) -> BTreeMap<String, Vec<f64>> {
        let l = self.labels.len();
        self.features
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), self.weights[i * l..(i + 1) * l].to_vec()))
            .collect()
    }

    pub fn scores(&self, features: &[String]) -> Vec<f64> {
        let l = self.labels.len();
        let mut scores = vec![0.0; l];
        for f in features {
            if let Some(id) = self.features.get(f) {
                let row = &self.weights[id as usize * l..(id as usize + 1) * l];
                for (s, w) in scores.iter_mut().zip(row) {
                    *s += w;
                }
            }
        }
        scores
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_file())?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let file: PerceptronFile = serde_json::from_reader(r)?;
        Self::from_file(file)
    }

    pub(crate) fn to_file(&self) -> PerceptronFile {
        let clusters = self.extractor.clusters().map(|c| {
            let mut v: Vec<(String, String)> = c.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            v.sort();
            v
        });
        PerceptronFile {
            format: FORMAT.into(),
            version: VERSION,
            labels: self.labels.clone(),
            learning_rate: self.learning_rate,
            updates: self.updates,
            features: self.features.names().to_vec(),
            weights: self.weights.clone(),
            clusters,
        }
    }

    pub(crate) fn from_file(file: PerceptronFile) -> Result<Self> {
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if file.weights.len() != file.features.len() * file.labels.len() {
            return Err(Error::Model("weight table size mismatch".into()));
        }
        let extractor = FeatureExtractor::new(
            file.clusters
                .map(|c| Clusters::new(c.into_iter().collect::<HashMap<_, _>>())),
        );
        Ok(PerceptronModel {
            labels: file.labels,
            features: FeatureIndex::from_names(file.features),
            weights: file.weights,
            learning_rate: file.learning_rate,
            updates: file.updates,
            extractor,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct PerceptronFile {
    format: String,
    version: u32,
    labels: Vec<String>,
    learning_rate: f64,
    updates: u64,
    features: Vec<String>,
    weights: Vec<f64>,
    clusters: Option<Vec<(String, String)>>,
}

impl Tagger for PerceptronModel {
    fn label_names(&self) -> &[String] {
        &self.labels
    }

    fn predict_sentence(&self, tokens: &[String]) -> (Vec<usize>, Vec<Vec<f64>>) {
        let mut labels: Vec<usize> = Vec::with_capacity(tokens.len());
        let mut dists = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let prev = if i == 0 { START_TAG } else { self.labels[labels[i - 1]].as_str() };
            let mut feats = self.extractor.context_features(tokens, i);
            feats.push(prev_tag_feature(prev));
            let scores = self.scores(&feats);
            labels.push(argmax(&scores));
            dists.push(softmax(&scores));
        }
        (labels, dists)
    }
}

/// Trains on explicit instances. Sentence order is reshuffled each epoch
/// from `seed`; instance order within a sentence is kept.
pub fn train_instances(
    instances: &InstanceSet,
    labels: Vec<String>,
    cfg: &PerceptronConfig,
    seed: u64,
) -> Result<PerceptronModel> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be at least 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if instances.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }
    let l = labels.len();

    // Intern every feature up front for speed; only features touched by an
    // update survive into the model, in name order.
    let mut index = FeatureIndex::new();
    let encoded: Vec<Vec<(Vec<u32>, usize, f64)>> = instances
        .iter()
        .map(|sent| {
            sent.iter()
                .map(|inst| {
                    let ids = inst.features.0.iter().map(|f| index.intern(f)).collect();
                    (ids, inst.label, inst.weight)
                })
                .collect()
        })
        .collect();

    let n = index.len();
    let mut w = vec![0.0f64; n * l];
    let mut acc = vec![0.0f64; n * l];
    let mut touched = vec![false; n];
    let mut updates: u64 = 0;
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = vec![0.0; l];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &s in &order {
            for (ids, gold, v) in &encoded[s] {
                scores.iter_mut().for_each(|x| *x = 0.0);
                for &f in ids {
                    let row = &w[f as usize * l..(f as usize + 1) * l];
                    for (x, y) in scores.iter_mut().zip(row) {
                        *x += y;
                    }
                }
                let guess = argmax(&scores);
                if guess == *gold || *v == 0.0 {
                    continue;
                }
                updates += 1;
                let step = cfg.learning_rate * v;
                let stamped = updates as f64 * step;
                for &f in ids {
                    let f = f as usize;
                    touched[f] = true;
                    w[f * l + gold] += step;
                    w[f * l + guess] -= step;
                    acc[f * l + gold] += stamped;
                    acc[f * l + guess] -= stamped;
                }
            }
        }
    }

    let mut kept: Vec<(&str, usize)> = index
        .names()
        .iter()
        .enumerate()
        .filter(|(i, _)| touched[*i])
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    kept.sort();
    let k = updates as f64;
    let mut weights = Vec::with_capacity(kept.len() * l);
    for &(_, i) in &kept {
        for j in 0..l {
            // mean of snapshots 1..=K: ((K + 1) w_K - sum_k k * delta_k) / K
            weights.push(((k + 1.0) * w[i * l + j] - acc[i * l + j]) / k);
        }
    }
    Ok(PerceptronModel {
        labels,
        features: FeatureIndex::from_names(kept.into_iter().map(|(n, _)| n.to_string()).collect()),
        weights,
        learning_rate: cfg.learning_rate,
        updates,
        extractor: FeatureExtractor::default(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct PerceptronTrainer {
    pub config: PerceptronConfig,
    pub extractor: FeatureExtractor,
}

impl PerceptronTrainer {
    pub fn new(config: PerceptronConfig) -> Self {
        PerceptronTrainer {
            config,
            extractor: FeatureExtractor::default(),
        }
    }
}

impl Trainer for PerceptronTrainer {
    type Model = PerceptronModel;

    fn train(&self, data: &LabeledCorpus, weights: &WeightVector, seed: u64) -> Result<PerceptronModel> {
        let instances = build_instances(data, weights, &self.extractor)?;
        let model = train_instances(&instances, data.label_names().to_vec(), &self.config, seed)?;
        Ok(model.with_extractor(self.extractor.clone()))
    }
}
