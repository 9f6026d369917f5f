//! Linear-chain CRF trained with a soft-labeled marginal likelihood.
//!
//! Each token carries a soft gold distribution `G_i` over the labels and a
//! label sequence is weighted by `q(y) = prod_i G_i[y_i]`. The per-sentence
//! loss is
//!
//! ```text
//! -log sum_y q(y) P(y | x) = log Z - log Z_q
//! ```
//!
//! where `Z_q` is the partition function of a lattice whose node scores are
//! shifted by `log G_i[l]`. Its gradient is the difference between feature
//! expectations under the free lattice and under the `q`-clamped lattice.
//! One-hot rows recover the ordinary CRF likelihood; uniform rows make the
//! loss constant.
//!
//! Emissions are linear in the shared sparse context features.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, LabeledCorpus};
use crate::error::{Error, Result};
use crate::features::{Clusters, FeatureExtractor, FeatureIndex};
use crate::model::{Tagger, Trainer};
use crate::weighting::WeightVector;

const FORMAT: &str = "cbl-ner/crf";
const VERSION: u32 = 1;

/// Soft gold distributions, indexed `[sentence][token][label]`, `O` at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    rows: Vec<Vec<Vec<f64>>>,
    num_labels: usize,
}

impl SoftLabelMatrix {
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>, num_labels: usize) -> Self {
        SoftLabelMatrix { rows, num_labels }
    }

    pub fn sentence(&self, s: usize) -> &[Vec<f64>] {
        &self.rows[s]
    }

    pub fn row(&self, s: usize, t: usize) -> &[f64] {
        &self.rows[s][t]
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Soft gold row for a negative token with weight `v` over `num_labels`.
pub fn soft_label_row(v: f64, num_labels: usize) -> Vec<f64> {
    let outside = (1.0 / num_labels as f64).max(v);
    let rest = (1.0 - outside) / (num_labels - 1) as f64;
    let mut row = vec![rest; num_labels];
    row[0] = outside;
    row
}

/// Positive tokens get a one-hot row at their label; negatives get
/// `G[O] = max(1/L, v)` with the remainder spread over the other labels.
pub fn soft_labels(data: &LabeledCorpus, v: &WeightVector) -> Result<SoftLabelMatrix> {
    let l = data.num_labels();
    if l < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 labels, got {l}")));
    }
    v.check_shape(data)?;
    let mut rows = Vec::with_capacity(data.num_sentences());
    for (s, labels) in data.labels().iter().enumerate() {
        let mut sent = Vec::with_capacity(labels.len());
        for (t, &label) in labels.iter().enumerate() {
            if label != 0 {
                let mut row = vec![0.0; l];
                row[label] = 1.0;
                sent.push(row);
            } else {
                let w = v.get(s, t);
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidWeight {
                        sent: s,
                        tok: t,
                        weight: w,
                    });
                }
                sent.push(soft_label_row(w, l));
            }
        }
        rows.push(sent);
    }
    Ok(SoftLabelMatrix { rows, num_labels: l })
}

/// A sentence as per-token lists of feature ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub features: Vec<Vec<u32>>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Forward/backward tables for one lattice.
struct Lattice {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    log_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    labels: Vec<String>,
    features: FeatureIndex,
    /// `[transitions L*L (from-major) | start L | stop L | emissions F*L]`
    params: Vec<f64>,
    l2: f64,
    extractor: FeatureExtractor,
}

impl CrfModel {
    /// All-zero model over `labels` and `features`.
    pub fn zeros(labels: Vec<String>, features: FeatureIndex) -> Self {
        let l = labels.len();
        let n = l * l + 2 * l + features.len() * l;
        CrfModel {
            labels,
            features,
            params: vec![0.0; n],
            l2: 0.0,
            extractor: FeatureExtractor::default(),
        }
    }

    pub fn from_params(labels: Vec<String>, features: FeatureIndex, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(labels, features);
        if params.len() != m.params.len() {
            return Err(Error::Model(format!(
                "expected {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self
    }

    pub fn with_extractor(mut self, extractor: FeatureExtractor) -> Self {
        self.extractor = extractor;
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.params[from * self.num_labels() + to]
    }

    fn start_offset(&self) -> usize {
        self.num_labels() * self.num_labels()
    }

    fn stop_offset(&self) -> usize {
        self.start_offset() + self.num_labels()
    }

    fn emission_offset(&self) -> usize {
        self.stop_offset() + self.num_labels()
    }

    pub fn start(&self, l: usize) -> f64 {
        self.params[self.start_offset() + l]
    }

    pub fn stop(&self, l: usize) -> f64 {
        self.params[self.stop_offset() + l]
    }

    /// Maps surfaces to known feature ids; unknown features are dropped.
    pub fn encode(&self, tokens: &[String]) -> EncodedSentence {
        EncodedSentence {
            features: (0..tokens.len())
                .map(|i| {
                    self.extractor
                        .context_features(tokens, i)
                        .iter()
                        .filter_map(|f| self.features.get(f))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn emissions(&self, sent: &EncodedSentence) -> Vec<Vec<f64>> {
        let l = self.num_labels();
        let off = self.emission_offset();
        sent.features
            .iter()
            .map(|feats| {
                let mut e = vec![0.0; l];
                for &f in feats {
                    let base = off + f as usize * l;
                    for (x, w) in e.iter_mut().zip(&self.params[base..base + l]) {
                        *x += w;
                    }
                }
                e
            })
            .collect()
    }

    /// Unnormalized score of one label path.
    pub fn path_score(&self, sent: &EncodedSentence, path: &[usize]) -> f64 {
        assert_eq!(sent.len(), path.len());
        if path.is_empty() {
            return 0.0;
        }
        let e = self.emissions(sent);
        let mut score = self.start(path[0]) + self.stop(path[path.len() - 1]);
        for (i, &y) in path.iter().enumerate() {
            score += e[i][y];
            if i > 0 {
                score += self.transition(path[i - 1], y);
            }
        }
        score
    }

    fn lattice(&self, nodes: &[Vec<f64>]) -> Lattice {
        let n = nodes.len();
        let l = self.num_labels();
        let mut alpha = vec![vec![0.0; l]; n];
        let mut beta = vec![vec![0.0; l]; n];
        for y in 0..l {
            alpha[0][y] = self.start(y) + nodes[0][y];
        }
        for i in 1..n {
            for y in 0..l {
                let prev = &alpha[i - 1];
                alpha[i][y] =
                    log_sum_exp((0..l).map(|k| prev[k] + self.transition(k, y))) + nodes[i][y];
            }
        }
        for y in 0..l {
            beta[n - 1][y] = self.stop(y);
        }
        for i in (0..n - 1).rev() {
            for k in 0..l {
                let next = &beta[i + 1];
                let node = &nodes[i + 1];
                beta[i][k] =
                    log_sum_exp((0..l).map(|y| self.transition(k, y) + node[y] + next[y]));
            }
        }
        let log_z = log_sum_exp((0..l).map(|y| alpha[n - 1][y] + self.stop(y)));
        Lattice { alpha, beta, log_z }
    }

    /// Log partition function of the free lattice.
    pub fn log_partition(&self, sent: &EncodedSentence) -> f64 {
        if sent.is_empty() {
            return 0.0;
        }
        self.lattice(&self.emissions(sent)).log_z
    }

    /// Adds `sign * E[phi]` under the lattice to `sink`.
    /// Node marginals `[i][y]` and edge marginals `[i][k * L + y]` (row 0 unused).
    fn marginal_tables(&self, nodes: &[Vec<f64>], lat: &Lattice) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = nodes.len();
        let l = self.num_labels();
        let mut mu = vec![vec![0.0; l]; n];
        let mut xi = vec![vec![0.0; l * l]; n];
        for i in 0..n {
            for y in 0..l {
                mu[i][y] = (lat.alpha[i][y] + lat.beta[i][y] - lat.log_z).exp();
            }
            if i > 0 {
                for k in 0..l {
                    for y in 0..l {
                        xi[i][k * l + y] = (lat.alpha[i - 1][k]
                            + self.transition(k, y)
                            + nodes[i][y]
                            + lat.beta[i][y]
                            - lat.log_z)
                            .exp();
                    }
                }
            }
        }
        (mu, xi)
    }

    /// Feeds parameter-space counts implied by node and edge tables.
    fn emit_counts(
        &self,
        sent: &EncodedSentence,
        mu: &[Vec<f64>],
        xi: &[Vec<f64>],
        sink: &mut impl FnMut(usize, f64),
    ) {
        let n = mu.len();
        let l = self.num_labels();
        let emit = self.emission_offset();
        for i in 0..n {
            for y in 0..l {
                let m = mu[i][y];
                if m == 0.0 {
                    continue;
                }
                for &f in &sent.features[i] {
                    sink(emit + f as usize * l + y, m);
                }
                if i == 0 {
                    sink(self.start_offset() + y, m);
                }
                if i == n - 1 {
                    sink(self.stop_offset() + y, m);
                }
            }
            if i > 0 {
                for (j, &x) in xi[i].iter().enumerate() {
                    if x != 0.0 {
                        sink(j, x);
                    }
                }
            }
        }
    }

    fn check_soft(&self, sent: &EncodedSentence, g: &[Vec<f64>]) -> Result<()> {
        if g.len() != sent.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} soft rows for {} tokens",
                g.len(),
                sent.len()
            )));
        }
        for (i, row) in g.iter().enumerate() {
            if row.len() != self.num_labels() {
                return Err(Error::ShapeMismatch(format!("soft row {i} has {} entries", row.len())));
            }
            if row.iter().any(|x| x.is_nan() || *x < 0.0) {
                return Err(Error::InvalidArgument(format!("soft row {i} has NaN or negative entries")));
            }
        }
        if self.params.iter().any(|p| p.is_nan()) {
            return Err(Error::Model("NaN parameter".into()));
        }
        Ok(())
    }

    /// Node scores of the q-clamped lattice. Each row of `log G` is shifted
    /// by its maximum (returned summed) so uniform rows add exactly nothing.
    fn clamped_nodes(emissions: &[Vec<f64>], g: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
        let mut shift = 0.0;
        let nodes = emissions
            .iter()
            .zip(g)
            .map(|(e, row)| {
                let logs: Vec<f64> = row.iter().map(|p| p.ln()).collect();
                let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                shift += max;
                e.iter().zip(&logs).map(|(x, lg)| x + (lg - max)).collect()
            })
            .collect();
        (nodes, shift)
    }

    /// Data term `log Z - log Z_q` and a callback fed with its gradient.
    fn marginal_nll(
        &self,
        sent: &EncodedSentence,
        g: &[Vec<f64>],
        sink: Option<&mut dyn FnMut(usize, f64)>,
    ) -> f64 {
        if sent.is_empty() {
            return 0.0;
        }
        let e = self.emissions(sent);
        let free = self.lattice(&e);
        let (nodes, shift) = Self::clamped_nodes(&e, g);
        let clamped = self.lattice(&nodes);
        if let Some(sink) = sink {
            let (mu_f, xi_f) = self.marginal_tables(&e, &free);
            let (mu_c, xi_c) = self.marginal_tables(&nodes, &clamped);
            let diff = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                    .collect()
            };
            let mut f = |i: usize, x: f64| sink(i, x);
            self.emit_counts(sent, &diff(&mu_f, &mu_c), &diff(&xi_f, &xi_c), &mut f);
        }
        free.log_z - (clamped.log_z + shift)
    }

    fn l2_term(&self) -> f64 {
        if self.l2 == 0.0 {
            0.0
        } else {
            0.5 * self.l2 * self.params.iter().map(|p| p * p).sum::<f64>()
        }
    }

    /// `-log sum_y q(y|x) P(y|x)` plus `l2/2 * |theta|^2`.
    pub fn loss(&self, sent: &EncodedSentence, g: &[Vec<f64>]) -> Result<f64> {
        self.check_soft(sent, g)?;
        Ok(self.marginal_nll(sent, g, None) + self.l2_term())
    }

    /// Dense gradient of [`CrfModel::loss`].
    pub fn gradient(&self, sent: &EncodedSentence, g: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_soft(sent, g)?;
        let mut grad: Vec<f64> = self.params.iter().map(|p| self.l2 * p).collect();
        let mut sink = |i: usize, x: f64| grad[i] += x;
        self.marginal_nll(sent, g, Some(&mut sink));
        Ok(grad)
    }

    /// Ordinary CRF negative log-likelihood of a fully labeled path.
    pub fn nll(&self, sent: &EncodedSentence, gold: &[usize]) -> f64 {
        self.log_partition(sent) - self.path_score(sent, gold) + self.l2_term()
    }

    /// Ordinary CRF gradient: free expectations minus gold path counts.
    pub fn nll_gradient(&self, sent: &EncodedSentence, gold: &[usize]) -> Vec<f64> {
        let mut grad: Vec<f64> = self.params.iter().map(|p| self.l2 * p).collect();
        if sent.is_empty() {
            return grad;
        }
        let l = self.num_labels();
        let e = self.emissions(sent);
        let free = self.lattice(&e);
        let (mu, xi) = self.marginal_tables(&e, &free);
        self.emit_counts(sent, &mu, &xi, &mut |i: usize, x: f64| grad[i] += x);
        let emit = self.emission_offset();
        for (i, &y) in gold.iter().enumerate() {
            for &f in &sent.features[i] {
                grad[emit + f as usize * l + y] -= 1.0;
            }
            if i > 0 {
                grad[gold[i - 1] * l + y] -= 1.0;
            }
        }
        grad[self.start_offset() + gold[0]] -= 1.0;
        grad[self.stop_offset() + gold[gold.len() - 1]] -= 1.0;
        grad
    }

    /// Per-token label marginals under the free lattice.
    pub fn marginals(&self, sent: &EncodedSentence) -> Vec<Vec<f64>> {
        if sent.is_empty() {
            return Vec::new();
        }
        let lat = self.lattice(&self.emissions(sent));
        lat.alpha
            .iter()
            .zip(&lat.beta)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - lat.log_z).exp()).collect())
            .collect()
    }

    /// Highest-scoring path and its score; ties go to the lower label id.
    pub fn viterbi(&self, sent: &EncodedSentence) -> (Vec<usize>, f64) {
        let n = sent.len();
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        let l = self.num_labels();
        let e = self.emissions(sent);
        let mut delta: Vec<f64> = (0..l).map(|y| self.start(y) + e[0][y]).collect();
        let mut back = vec![vec![0usize; l]; n];
        for i in 1..n {
            let mut next = vec![0.0; l];
            for y in 0..l {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for k in 0..l {
                    let s = delta[k] + self.transition(k, y);
                    if s > best_score {
                        best_score = s;
                        best = k;
                    }
                }
                next[y] = best_score + e[i][y];
                back[i][y] = best;
            }
            delta = next;
        }
        let mut last = 0;
        let mut best = f64::NEG_INFINITY;
        for (y, d) in delta.iter().enumerate() {
            let s = d + self.stop(y);
            if s > best {
                best = s;
                last = y;
            }
        }
        let mut path = vec![last; n];
        for i in (1..n).rev() {
            path[i - 1] = back[i][path[i]];
        }
        (path, best)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_file())?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        Self::from_file(serde_json::from_reader(r)?)
    }

    pub(crate) fn to_file(&self) -> CrfFile {
        let clusters = self.extractor.clusters().map(|c| {
            let mut v: Vec<(String, String)> =
                c.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
            v.sort();
            v
        });
        CrfFile {
            format: FORMAT.into(),
            version: VERSION,
            labels: self.labels.clone(),
            l2: self.l2,
            features: self.features.names().to_vec(),
            params: self.params.clone(),
            clusters,
        }
    }

    pub(crate) fn from_file(file: CrfFile) -> Result<Self> {
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let extractor = FeatureExtractor::new(
            file.clusters
                .map(|c| Clusters::new(c.into_iter().collect::<HashMap<_, _>>())),
        );
        Ok(CrfModel::from_params(file.labels, FeatureIndex::from_names(file.features), file.params)?
            .with_l2(file.l2)
            .with_extractor(extractor))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct CrfFile {
    format: String,
    version: u32,
    labels: Vec<String>,
    l2: f64,
    features: Vec<String>,
    params: Vec<f64>,
    clusters: Option<Vec<(String, String)>>,
}

impl Tagger for CrfModel {
    fn label_names(&self) -> &[String] {
        &self.labels
    }

    fn predict_sentence(&self, tokens: &[String]) -> (Vec<usize>, Vec<Vec<f64>>) {
        let enc = self.encode(tokens);
        (self.viterbi(&enc).0, self.marginals(&enc))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfConfig {
    pub epochs: usize,
    /// Base AdaGrad step.
    pub step_size: f64,
    pub l2: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            epochs: 5,
            step_size: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CrfTrainer {
    pub config: CrfConfig,
    pub extractor: FeatureExtractor,
}

impl CrfTrainer {
    pub fn new(config: CrfConfig) -> Self {
        CrfTrainer {
            config,
            extractor: FeatureExtractor::default(),
        }
    }

    /// Trains and returns the summed data loss seen during each epoch.
    pub fn train_with_history(
        &self,
        data: &LabeledCorpus,
        weights: &WeightVector,
        seed: u64,
    ) -> Result<(CrfModel, Vec<f64>)> {
        let cfg = &self.config;
        if cfg.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(cfg.step_size > 0.0) || !(cfg.l2 >= 0.0) {
            return Err(Error::InvalidArgument("step size must be positive, l2 nonnegative".into()));
        }
        if data.token_count() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let g = soft_labels(data, &weights.clamped())?;

        let mut index = FeatureIndex::new();
        let encoded: Vec<EncodedSentence> = data
            .tokens()
            .iter()
            .map(|toks| EncodedSentence {
                features: (0..toks.len())
                    .map(|i| {
                        self.extractor
                            .context_features(toks, i)
                            .iter()
                            .map(|f| index.intern(f))
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        let mut model = CrfModel::zeros(data.label_names().to_vec(), index)
            .with_l2(cfg.l2)
            .with_extractor(self.extractor.clone());

        let n_params = model.params.len();
        let mut grad = vec![0.0; n_params];
        let mut touched: Vec<usize> = Vec::new();
        let mut is_touched = vec![false; n_params];
        let mut hist = vec![0.0; n_params];
        let reg = cfg.l2 / encoded.len().max(1) as f64;
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut history = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &s in &order {
                let sent = &encoded[s];
                if sent.is_empty() {
                    continue;
                }
                let mut sink = |i: usize, x: f64| {
                    if !is_touched[i] {
                        is_touched[i] = true;
                        touched.push(i);
                    }
                    grad[i] += x;
                };
                let loss = model.marginal_nll(sent, g.sentence(s), Some(&mut sink));
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "loss {loss} in epoch {epoch}; try a smaller step size"
                    )));
                }
                total += loss;
                for &i in &touched {
                    let gi = grad[i] + reg * model.params[i];
                    if gi != 0.0 {
                        hist[i] += gi * gi;
                        model.params[i] -= cfg.step_size * gi / (1e-8 + hist[i].sqrt());
                    }
                    grad[i] = 0.0;
                    is_touched[i] = false;
                }
                touched.clear();
            }
            if !total.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite state after epoch {epoch}; try a smaller step size"
                )));
            }
            history.push(total);
        }
        Ok((model, history))
    }
}

impl Trainer for CrfTrainer {
    type Model = CrfModel;

    fn train(&self, data: &LabeledCorpus, weights: &WeightVector, seed: u64) -> Result<CrfModel> {
        Ok(self.train_with_history(data, weights, seed)?.0)
    }
}
