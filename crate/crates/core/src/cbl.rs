//! Constrained binary learning.
//!
//! Phase 1 learns a binary entity detector with a train-predict-infer loop:
//! weights are balanced to a target entity ratio, a weighted binary model
//! is trained and run over the whole corpus, and an exact solver picks the
//! highest-scoring entity/non-entity labeling whose positive count lies in
//! a window around a ratio `b` that grows every round. Solver positives
//! become `ENT` with weight 1; everything else takes the model's `P(O)` as
//! its weight. The loop stops once the solver selects as many positives as
//! the target ratio requires.
//!
//! Phase 2 weighs every unannotated token by the final detector's `P(O)`
//! and trains the multiclass tagger on the original partial labels.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::corpus::{entity_ratio, weighted_entity_ratio, Annotation, Corpus, LabeledCorpus};
use crate::error::{Error, Result};
use crate::model::{Tagger, Trainer};
use crate::weighting::{format_significant, WeightVector};
use crate::derive_seed;

/// Scales every negative weight by `gamma = (1 - b*) |P| / (b* sum_N v)` so
/// the weighted entity ratio becomes `b*`. Returns the weights and `gamma`.
pub fn balance<A: Annotation + ?Sized>(
    v: &WeightVector,
    pa: &A,
    b_star: f64,
) -> Result<(WeightVector, f64)> {
    if !(b_star > 0.0 && b_star < 1.0) {
        return Err(Error::InvalidArgument(format!("target ratio must be in (0, 1), got {b_star}")));
    }
    v.check_shape(pa)?;
    v.check_nonnegative()?;
    if pa.positive_count() == 0 {
        return Err(Error::InvalidArgument("cannot balance without positive tokens".into()));
    }
    let mass = v.negative_mass(pa);
    if mass == 0.0 {
        return Err(Error::ZeroNegativeMass);
    }
    let gamma = (1.0 - b_star) * pa.positive_count() as f64 / (b_star * mass);
    let mut out = v.clone();
    for (s, t, w) in v.iter() {
        if !pa.is_positive(s, t) {
            out.set(s, t, gamma * w);
        }
    }
    Ok((out, gamma))
}

/// The binary labeling problem solved at each round, over tokens in corpus
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceProblem {
    /// Score for labeling each token negative.
    pub c0: Vec<f64>,
    /// Score for labeling each token positive.
    pub c1: Vec<f64>,
    /// Tokens annotated positive.
    pub p_mask: Vec<bool>,
    /// Required entity ratio.
    pub b: f64,
    /// Slack on the ratio.
    pub delta: f64,
    /// Fraction of annotated positives that must stay positive.
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSolution {
    pub positive: Vec<bool>,
    pub objective: f64,
    pub positive_count: usize,
}

impl InferenceProblem {
    pub fn len(&self) -> usize {
        self.c0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyCorpus);
        }
        if self.c1.len() != n || self.p_mask.len() != n {
            return Err(Error::ShapeMismatch("c0, c1 and p_mask lengths differ".into()));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::InvalidArgument(format!("b must be in (0, 1), got {}", self.b)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::InvalidArgument(format!("xi must be in [0, 1], got {}", self.xi)));
        }
        if self.c0.iter().chain(&self.c1).any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument("NaN score".into()));
        }
        Ok(())
    }

    /// Whether `count` positives satisfy `b - delta <= count / |T| <= b + delta`.
    pub fn count_in_window(&self, count: usize) -> bool {
        let r = count as f64 / self.len() as f64;
        self.b - self.delta <= r && r <= self.b + self.delta
    }

    /// Whether keeping `kept` annotated positives satisfies `kept >= xi |P|`.
    pub fn retains_enough(&self, kept: usize) -> bool {
        kept as f64 >= self.xi * self.p_mask.iter().filter(|&&p| p).count() as f64
    }

    /// Objective value of an assignment, summed in token order.
    pub fn objective(&self, positive: &[bool]) -> f64 {
        positive
            .iter()
            .enumerate()
            .map(|(i, &y)| if y { self.c1[i] } else { self.c0[i] })
            .sum()
    }

    /// Whether an assignment satisfies every constraint.
    pub fn is_feasible(&self, positive: &[bool]) -> bool {
        let count = positive.iter().filter(|&&y| y).count();
        let kept = positive
            .iter()
            .zip(&self.p_mask)
            .filter(|(&y, &p)| y && p)
            .count();
        positive.len() == self.len() && self.count_in_window(count) && self.retains_enough(kept)
    }
}

/// Indices sorted by margin descending, ties by index ascending.
fn ranked(indices: Vec<usize>, margin: &[f64]) -> Vec<usize> {
    let mut idx = indices;
    idx.sort_by(|&a, &b| margin[b].total_cmp(&margin[a]).then(a.cmp(&b)));
    idx
}

/// Exact maximizer of `sum_i C0_i y0_i + C1_i y1_i` subject to one label
/// per token, the positive-count window and annotated-positive retention.
///
/// With margins `m_i = C1_i - C0_i` the objective is `sum C0 + sum_{pos} m_i`,
/// so for any count `j` of retained annotated positives and total count `k`
/// the best choice is the top-`j` annotated and top-`(k - j)` unannotated
/// margins. Every feasible `(j, k)` is scanned; on equal objectives the
/// larger `j` and then the smaller `k` win.
pub fn solve_inference(prob: &InferenceProblem) -> Result<InferenceSolution> {
    prob.validate()?;
    let n = prob.len();
    let margin: Vec<f64> = prob.c1.iter().zip(&prob.c0).map(|(a, b)| a - b).collect();
    let p_idx = ranked((0..n).filter(|&i| prob.p_mask[i]).collect(), &margin);
    let n_idx = ranked((0..n).filter(|&i| !prob.p_mask[i]).collect(), &margin);

    let counts: Vec<usize> = (0..=n).filter(|&k| prob.count_in_window(k)).collect();
    let (Some(&lo), Some(&hi)) = (counts.first(), counts.last()) else {
        return Err(Error::Infeasible(format!(
            "ratio window [{}, {}] contains no positive count for {n} tokens",
            prob.b - prob.delta,
            prob.b + prob.delta
        )));
    };
    let j_min = (0..=p_idx.len())
        .find(|&j| prob.retains_enough(j))
        .expect("retaining every annotated positive always suffices");
    if hi < j_min {
        return Err(Error::Infeasible(format!(
            "ratio upper bound allows at most {hi} positives but {j_min} annotated positives must be kept"
        )));
    }

    let prefix = |idx: &[usize]| -> Vec<f64> {
        let mut out = Vec::with_capacity(idx.len() + 1);
        out.push(0.0);
        let mut acc = 0.0;
        for &i in idx {
            acc += margin[i];
            out.push(acc);
        }
        out
    };
    let p_pre = prefix(&p_idx);
    let n_pre = prefix(&n_idx);

    let mut best: Option<(f64, usize, usize)> = None;
    for j in (j_min..=p_idx.len()).rev() {
        for k in lo.max(j)..=hi {
            let rest = k - j;
            if rest > n_idx.len() {
                break;
            }
            if !prob.count_in_window(k) {
                continue;
            }
            let value = p_pre[j] + n_pre[rest];
            if best.map_or(true, |(b, _, _)| value > b) {
                best = Some((value, j, k));
            }
        }
    }
    let (_, j, k) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no count in [{lo}, {hi}] is reachable with {} annotated and {} unannotated tokens",
            p_idx.len(),
            n_idx.len()
        ))
    })?;

    let mut positive = vec![false; n];
    for &i in p_idx[..j].iter().chain(&n_idx[..k - j]) {
        positive[i] = true;
    }
    Ok(InferenceSolution {
        objective: prob.objective(&positive),
        positive_count: k,
        positive,
    })
}

/// Solver positives weigh 1; everything else takes its `P(O)`.
pub fn assign_weights_inner(solution: &InferenceSolution, conf_o: &WeightVector) -> Result<WeightVector> {
    if solution.positive.len() != conf_o.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} solution entries for {} tokens",
            solution.positive.len(),
            conf_o.len()
        )));
    }
    let mut flat = solution.positive.iter();
    Ok(WeightVector::from_rows(
        conf_o
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&c| if *flat.next().expect("length checked") { 1.0 } else { c })
                    .collect()
            })
            .collect(),
    ))
}

/// Annotated positives weigh 1; every other token takes its `P(O)`.
pub fn assign_weights_final<A: Annotation + ?Sized>(pa: &A, conf_o: &WeightVector) -> Result<WeightVector> {
    conf_o.check_shape(pa)?;
    let mut v = conf_o.clone();
    for (s, t, _) in conf_o.iter() {
        if pa.is_positive(s, t) {
            v.set(s, t, 1.0);
        }
    }
    Ok(v)
}

/// Weight 0 on unannotated tokens that are entities in `gold`, 1 elsewhere.
pub fn oracle_weights(partial: &Corpus, gold: &Corpus) -> Result<WeightVector> {
    partial.check_aligned(gold)?;
    Ok(WeightVector::from_rows(
        (0..partial.num_sentences())
            .map(|s| {
                (0..partial.sentence_len(s))
                    .map(|t| {
                        if !partial.is_positive(s, t) && gold.is_positive(s, t) {
                            0.0
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect(),
    ))
}

/// How the target entity ratio is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioTarget {
    /// The ratio of a gold corpus.
    Gold,
    /// A fixed value used regardless of the data.
    Flat(f64),
    Value(f64),
}

impl RatioTarget {
    pub fn resolve(&self, gold: Option<&Corpus>) -> Result<f64> {
        match *self {
            RatioTarget::Gold => {
                let gold = gold.ok_or_else(|| {
                    Error::InvalidArgument("gold ratio target needs a gold corpus".into())
                })?;
                entity_ratio(gold)
            }
            RatioTarget::Flat(b) | RatioTarget::Value(b) => Ok(b),
        }
    }
}

impl FromStr for RatioTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad ratio target {s:?} (gold|flat:X|X)"));
        if s == "gold" {
            return Ok(RatioTarget::Gold);
        }
        if let Some(x) = s.strip_prefix("flat:") {
            return x.parse().map(RatioTarget::Flat).map_err(|_| bad());
        }
        s.parse().map(RatioTarget::Value).map_err(|_| bad())
    }
}

impl fmt::Display for RatioTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatioTarget::Gold => f.write_str("gold"),
            RatioTarget::Flat(b) => write!(f, "flat:{b}"),
            RatioTarget::Value(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CblConfig {
    /// Target entity ratio; sets the stopping point and, by default, the
    /// in-loop balancing target.
    pub b_target: f64,
    pub delta: f64,
    pub xi: f64,
    /// Growth of the required ratio per round.
    pub b_step: f64,
    pub max_iterations: usize,
    /// Balancing target inside the loop; `None` uses `b_target`.
    pub balance_target: Option<f64>,
    pub seed: u64,
}

impl Default for CblConfig {
    fn default() -> Self {
        CblConfig {
            b_target: 0.15,
            delta: 0.001,
            xi: 1.0,
            b_step: 0.0025,
            max_iterations: 50,
            balance_target: None,
            seed: 0,
        }
    }
}

impl CblConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_target > 0.0 && self.b_target < 1.0) {
            return Err(Error::Config(format!("b_target must be in (0, 1), got {}", self.b_target)));
        }
        if !(self.b_step > 0.0) {
            return Err(Error::Config(format!("b_step must be positive, got {}", self.b_step)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(0.99..=1.0).contains(&self.xi) {
            return Err(Error::Config(format!("xi must be in [0.99, 1], got {}", self.xi)));
        }
        if let Some(b) = self.balance_target {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("balance_target must be in (0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub b: f64,
    pub positives_required: usize,
    pub positives_selected: usize,
    pub objective: f64,
    /// Weighted entity ratio of the relabeled, reweighted corpus.
    pub weighted_ratio: f64,
}

pub fn write_iteration_log<W: Write>(log: &[IterationRecord], mut w: W) -> Result<()> {
    writeln!(w, "iter\tb\tpositives_required\tpositives_selected\tobjective\tweighted_ratio")?;
    for r in log {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.iteration,
            format_significant(r.b, 9),
            r.positives_required,
            r.positives_selected,
            format_significant(r.objective, 9),
            format_significant(r.weighted_ratio, 9)
        )?;
    }
    Ok(())
}

pub struct PhaseOne<M> {
    pub model: M,
    pub log: Vec<IterationRecord>,
    /// Binary labeling after the last round.
    pub labels: LabeledCorpus,
    /// Weights after the last round.
    pub weights: WeightVector,
}

fn flatten(v: &WeightVector) -> Vec<f64> {
    v.rows().iter().flatten().copied().collect()
}

fn log_prob(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

/// Runs the train-predict-infer loop from initial weights `init`.
pub fn cbl_phase1<T: Trainer>(
    pa: &Corpus,
    init: &WeightVector,
    cfg: &CblConfig,
    trainer: &T,
) -> Result<PhaseOne<T::Model>> {
    cfg.validate()?;
    init.check_shape(pa)?;
    let total = pa.token_count();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let annotated = pa.positive_count();
    if annotated == 0 {
        return Err(Error::InvalidArgument("partial annotation has no positive tokens".into()));
    }
    let mut data = LabeledCorpus::binary(pa);
    let p_mask: Vec<bool> = data.labels().iter().flatten().map(|&l| l != 0).collect();
    let b0 = annotated as f64 / total as f64;
    let required = (cfg.b_target * total as f64).floor() as usize;
    let balance_to = cfg.balance_target.unwrap_or(cfg.b_target);

    let mut weights = init.clone();
    let mut log = Vec::new();
    let mut model = None;
    for iteration in 0..cfg.max_iterations {
        let b = b0 + iteration as f64 * cfg.b_step;
        let (balanced, _) = balance(&weights, &data, balance_to)?;
        let lambda = trainer.train(&data, &balanced, derive_seed(cfg.seed, iteration as u64))?;

        let pred = lambda.predict(data.tokens());
        let dists: Vec<&Vec<f64>> = pred.distributions.iter().flatten().collect();
        let prob = InferenceProblem {
            c0: dists.iter().map(|d| log_prob(d[0])).collect(),
            c1: dists.iter().map(|d| log_prob(1.0 - d[0])).collect(),
            p_mask: p_mask.clone(),
            b: b.min(1.0 - f64::EPSILON),
            delta: cfg.delta,
            xi: cfg.xi,
        };
        let sol = solve_inference(&prob).map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(format!("iteration {iteration} (b = {b}): {msg}")),
            other => other,
        })?;

        let conf_o = pred.outside_confidence();
        weights = assign_weights_inner(&sol, &conf_o)?;
        let mut flat = sol.positive.iter();
        for s in 0..data.num_sentences() {
            for t in 0..data.sentence_len(s) {
                let pos = *flat.next().expect("one entry per token");
                data.set_label(crate::corpus::TokenRef { sent: s, tok: t }, usize::from(pos));
            }
        }
        log.push(IterationRecord {
            iteration,
            b,
            positives_required: required,
            positives_selected: sol.positive_count,
            objective: sol.objective,
            weighted_ratio: weighted_entity_ratio(&data, &weights)?,
        });
        model = Some(lambda);
        if sol.positive_count >= required {
            break;
        }
    }
    Ok(PhaseOne {
        model: model.expect("at least one iteration"),
        log,
        labels: data,
        weights,
    })
}

/// Weighs the partial corpus with the detector's `P(O)` and trains the
/// multiclass tagger on the original labels.
pub fn cbl_phase2<L: Tagger, T: Trainer>(
    pa: &Corpus,
    detector: &L,
    trainer: &T,
    seed: u64,
) -> Result<(T::Model, WeightVector)> {
    let data = LabeledCorpus::bio(pa);
    let conf_o = detector.confidence_outside(data.tokens())?;
    let v = assign_weights_final(pa, &conf_o)?;
    let model = trainer.train(&data, &v, seed)?;
    Ok((model, v))
}

/// Flattened weights in corpus order.
pub fn flat_weights(v: &WeightVector) -> Vec<f64> {
    flatten(v)
}
