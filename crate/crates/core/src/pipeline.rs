//! Experiment harness: perturb, initialize weights, run the learning loop,
//! train final taggers, predict and evaluate, writing every artifact to an
//! output directory.
//!
//! All randomness comes from one seed. Stages draw their own seeds with
//! [`derive_seed`]: stream 1 perturbs, stream 2 seeds the binary loop,
//! stream 3 seeds every final tagger (the same seed for every row, so rows
//! differ only through their weights).

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::cbl::{cbl_phase1, cbl_phase2, oracle_weights, write_iteration_log, CblConfig, RatioTarget};
use crate::corpus::{read_conll, span_f1, write_conll, Corpus, LabeledCorpus, Scores};
use crate::crf::{CrfConfig, CrfModel, CrfTrainer};
use crate::error::{Error, Result};
use crate::features::{Clusters, FeatureExtractor};
use crate::model::{Tagger, Trainer};
use crate::perceptron::{PerceptronConfig, PerceptronModel, PerceptronTrainer};
use crate::perturb::{perturb, PerturbConfig};
use crate::weighting::{combined_weights, raw_weights, WeightVector};
use crate::derive_seed;

pub fn read_corpus_file(path: &Path) -> Result<Corpus> {
    let f = File::open(path).map_err(|e| io_context(e, path))?;
    read_conll(BufReader::new(f))
}

pub fn write_corpus_file(corpus: &Corpus, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| io_context(e, path))?;
    let mut w = BufWriter::new(f);
    write_conll(corpus, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_weights_file(path: &Path, corpus: &Corpus) -> Result<WeightVector> {
    let f = File::open(path).map_err(|e| io_context(e, path))?;
    WeightVector::read_tsv(BufReader::new(f), corpus)
}

pub fn write_weights_file(v: &WeightVector, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_context(e, path))?);
    v.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_clusters_file(path: &Path) -> Result<Clusters> {
    let f = File::open(path).map_err(|e| io_context(e, path))?;
    Clusters::read_tsv(BufReader::new(f))
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Perceptron,
    Crf,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perceptron" => Ok(ModelKind::Perceptron),
            "crf" => Ok(ModelKind::Crf),
            _ => Err(Error::InvalidArgument(format!("unknown model {s:?} (perceptron|crf)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Perceptron => "perceptron",
            ModelKind::Crf => "crf",
        })
    }
}

/// Model family plus the hyperparameters of both trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub perceptron: PerceptronConfig,
    pub crf: CrfConfig,
    pub extractor: FeatureExtractor,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            perceptron: PerceptronConfig::default(),
            crf: CrfConfig::default(),
            extractor: FeatureExtractor::default(),
        }
    }

    fn perceptron_trainer(&self) -> PerceptronTrainer {
        PerceptronTrainer {
            config: self.perceptron.clone(),
            extractor: self.extractor.clone(),
        }
    }

    fn crf_trainer(&self) -> CrfTrainer {
        CrfTrainer {
            config: self.crf.clone(),
            extractor: self.extractor.clone(),
        }
    }

    pub fn train(&self, data: &LabeledCorpus, weights: &WeightVector, seed: u64) -> Result<AnyModel> {
        Ok(match self.kind {
            ModelKind::Perceptron => AnyModel::Perceptron(self.perceptron_trainer().train(data, weights, seed)?),
            ModelKind::Crf => AnyModel::Crf(self.crf_trainer().train(data, weights, seed)?),
        })
    }
}

/// Output of a full learning-loop run.
pub struct CblRun {
    pub model: AnyModel,
    pub weights: WeightVector,
    pub log: Vec<crate::cbl::IterationRecord>,
}

/// Runs both phases with the model family of `spec` for detector and tagger.
pub fn run_cbl(
    partial: &Corpus,
    init: &WeightVector,
    cfg: &CblConfig,
    spec: &ModelSpec,
    final_seed: u64,
) -> Result<CblRun> {
    fn go<T: Trainer>(
        partial: &Corpus,
        init: &WeightVector,
        cfg: &CblConfig,
        trainer: &T,
        final_seed: u64,
    ) -> Result<(T::Model, WeightVector, Vec<crate::cbl::IterationRecord>)> {
        let one = cbl_phase1(partial, init, cfg, trainer)?;
        let (model, weights) = cbl_phase2(partial, &one.model, trainer, final_seed)?;
        Ok((model, weights, one.log))
    }
    Ok(match spec.kind {
        ModelKind::Perceptron => {
            let (m, weights, log) = go(partial, init, cfg, &spec.perceptron_trainer(), final_seed)?;
            CblRun { model: AnyModel::Perceptron(m), weights, log }
        }
        ModelKind::Crf => {
            let (m, weights, log) = go(partial, init, cfg, &spec.crf_trainer(), final_seed)?;
            CblRun { model: AnyModel::Crf(m), weights, log }
        }
    })
}

/// A trained tagger of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Perceptron(PerceptronModel),
    Crf(CrfModel),
}

impl AnyModel {
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        match self {
            AnyModel::Perceptron(m) => m.save(w),
            AnyModel::Crf(m) => m.save(w),
        }
    }

    /// Loads either family, dispatching on the file's `format` field.
    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let probe: serde_json::Value = serde_json::from_slice(&buf)?;
        match probe.get("format").and_then(|f| f.as_str()) {
            Some("cbl-ner/perceptron") => Ok(AnyModel::Perceptron(PerceptronModel::load(buf.as_slice())?)),
            Some("cbl-ner/crf") => Ok(AnyModel::Crf(CrfModel::load(buf.as_slice())?)),
            other => Err(Error::Model(format!("unrecognized model format {other:?}"))),
        }
    }

    pub fn save_file(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(|e| io_context(e, path))?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        AnyModel::load(BufReader::new(File::open(path).map_err(|e| io_context(e, path))?))
    }
}

impl Tagger for AnyModel {
    fn label_names(&self) -> &[String] {
        match self {
            AnyModel::Perceptron(m) => m.label_names(),
            AnyModel::Crf(m) => m.label_names(),
        }
    }

    fn predict_sentence(&self, tokens: &[String]) -> (Vec<usize>, Vec<Vec<f64>>) {
        match self {
            AnyModel::Perceptron(m) => m.predict_sentence(tokens),
            AnyModel::Crf(m) => m.predict_sentence(tokens),
        }
    }
}

/// Baselines and learning-loop variants, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Row {
    Raw,
    Combined,
    CblRaw,
    CblCombined,
    Oracle,
}

impl Row {
    pub const ALL: [Row; 5] = [Row::Raw, Row::Combined, Row::CblRaw, Row::CblCombined, Row::Oracle];

    pub fn name(&self) -> &'static str {
        match self {
            Row::Raw => "raw",
            Row::Combined => "combined",
            Row::CblRaw => "cbl-raw",
            Row::CblCombined => "cbl-combined",
            Row::Oracle => "oracle",
        }
    }
}

impl FromStr for Row {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Row::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown row {s:?}")))
    }
}

/// Flat `key = value` experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Fully annotated training corpus; perturbed unless `partial` is set.
    pub train: PathBuf,
    pub test: PathBuf,
    pub out_dir: PathBuf,
    /// Existing partial annotation of `train`, skipping perturbation.
    pub partial: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub model: ModelKind,
    pub b_target: RatioTarget,
    pub balance_target: Option<f64>,
    pub b_step: f64,
    pub delta: f64,
    pub xi: f64,
    pub max_iters: usize,
    /// Log-scaled frequency weights; `None` means on for the CRF only.
    pub log_scale: Option<bool>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub crf_epochs: usize,
    pub crf_step: f64,
    pub crf_l2: f64,
    pub rows: Vec<Row>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let cbl = CblConfig::default();
        let crf = CrfConfig::default();
        let perc = PerceptronConfig::default();
        PipelineConfig {
            train: PathBuf::new(),
            test: PathBuf::new(),
            out_dir: PathBuf::new(),
            partial: None,
            clusters: None,
            seed: 0,
            precision: 0.9,
            recall: 0.5,
            model: ModelKind::Perceptron,
            b_target: RatioTarget::Gold,
            balance_target: None,
            b_step: cbl.b_step,
            delta: cbl.delta,
            xi: cbl.xi,
            max_iters: cbl.max_iterations,
            log_scale: None,
            epochs: perc.epochs,
            learning_rate: perc.learning_rate,
            crf_epochs: crf.epochs,
            crf_step: crf.step_size,
            crf_l2: crf.l2,
            rows: Row::ALL.to_vec(),
        }
    }
}

pub const CONFIG_KEYS: [&str; 23] = [
    "train",
    "test",
    "out_dir",
    "partial",
    "clusters",
    "seed",
    "precision",
    "recall",
    "model",
    "b_target",
    "balance_target",
    "b_step",
    "delta",
    "xi",
    "max_iters",
    "log_scale",
    "epochs",
    "learning_rate",
    "crf_epochs",
    "crf_step",
    "crf_l2",
    "rows",
    "note",
];

fn parse_switch(v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("expected on|off, got {v:?}"))),
    }
}

fn optional_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl PipelineConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_context(e, path))?;
        let mut cfg = Self::parse(&text)?;
        // relative corpus paths are taken from the config file's directory
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.train, &mut cfg.test, &mut cfg.out_dir] {
                if !p.as_os_str().is_empty() && p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            for p in [&mut cfg.partial, &mut cfg.clusters].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.parse().map_err(|_| Error::Config(format!("{key}: not a number: {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::Config(format!("{key}: not an integer: {v:?}")))
        };
        match key {
            "train" => self.train = PathBuf::from(v),
            "test" => self.test = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "partial" => self.partial = optional_path(v),
            "clusters" => self.clusters = optional_path(v),
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: not an integer: {v:?}")))?,
            "precision" => self.precision = num(v)?,
            "recall" => self.recall = num(v)?,
            "model" => self.model = v.parse()?,
            "b_target" => self.b_target = v.parse()?,
            "balance_target" => {
                self.balance_target = if v.is_empty() || v == "b_target" { None } else { Some(num(v)?) }
            }
            "b_step" => self.b_step = num(v)?,
            "delta" => self.delta = num(v)?,
            "xi" => self.xi = num(v)?,
            "max_iters" => self.max_iters = int(v)?,
            "log_scale" => self.log_scale = if v == "auto" { None } else { Some(parse_switch(v)?) },
            "epochs" => self.epochs = int(v)?,
            "learning_rate" => self.learning_rate = num(v)?,
            "crf_epochs" => self.crf_epochs = int(v)?,
            "crf_step" => self.crf_step = num(v)?,
            "crf_l2" => self.crf_l2 = num(v)?,
            "rows" => {
                self.rows = v
                    .split(',')
                    .map(|r| r.trim().parse())
                    .collect::<Result<Vec<Row>>>()?;
                self.rows.sort();
                self.rows.dedup();
            }
            "note" => {}
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn effective_log_scale(&self) -> bool {
        self.log_scale.unwrap_or(self.model == ModelKind::Crf)
    }

    /// Canonical `key = value` text of every setting.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("train", self.train.display().to_string());
        m.insert("test", self.test.display().to_string());
        m.insert("out_dir", self.out_dir.display().to_string());
        m.insert("partial", path(&self.partial));
        m.insert("clusters", path(&self.clusters));
        m.insert("seed", self.seed.to_string());
        m.insert("precision", self.precision.to_string());
        m.insert("recall", self.recall.to_string());
        m.insert("model", self.model.to_string());
        m.insert("b_target", self.b_target.to_string());
        m.insert(
            "balance_target",
            self.balance_target.map(|b| b.to_string()).unwrap_or_else(|| "b_target".into()),
        );
        m.insert("b_step", self.b_step.to_string());
        m.insert("delta", self.delta.to_string());
        m.insert("xi", self.xi.to_string());
        m.insert("max_iters", self.max_iters.to_string());
        m.insert(
            "log_scale",
            match self.log_scale {
                None => "auto",
                Some(true) => "on",
                Some(false) => "off",
            }
            .into(),
        );
        m.insert("epochs", self.epochs.to_string());
        m.insert("learning_rate", self.learning_rate.to_string());
        m.insert("crf_epochs", self.crf_epochs.to_string());
        m.insert("crf_step", self.crf_step.to_string());
        m.insert("crf_l2", self.crf_l2.to_string());
        m.insert(
            "rows",
            self.rows.iter().map(Row::name).collect::<Vec<_>>().join(","),
        );
        CONFIG_KEYS
            .iter()
            .filter_map(|k| m.get(k).map(|v| format!("{k} = {v}\n")))
            .collect()
    }

    /// Checks values and input files before anything runs.
    pub fn validate(&self) -> Result<()> {
        for (key, p) in [("train", &self.train), ("test", &self.test)] {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{key} is required")));
            }
            if !p.is_file() {
                return Err(Error::Config(format!("{key}: no such file {}", p.display())));
            }
        }
        for (key, p) in [("partial", &self.partial), ("clusters", &self.clusters)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Error::Config(format!("{key}: no such file {}", p.display())));
                }
            }
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir is required".into()));
        }
        if self.rows.is_empty() {
            return Err(Error::Config("rows is empty".into()));
        }
        if self.partial.is_none() {
            PerturbConfig::new(self.precision, self.recall, 0).validate()?;
        }
        if let RatioTarget::Flat(b) | RatioTarget::Value(b) = self.b_target {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("b_target must be in (0, 1), got {b}")));
            }
        }
        self.cbl_config(0.5).validate()?;
        if self.epochs == 0 || self.crf_epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.crf_step > 0.0 && self.crf_l2 >= 0.0) {
            return Err(Error::Config("learning rates must be positive and crf_l2 nonnegative".into()));
        }
        Ok(())
    }

    pub fn cbl_config(&self, b_target: f64) -> CblConfig {
        CblConfig {
            b_target,
            delta: self.delta,
            xi: self.xi,
            b_step: self.b_step,
            max_iterations: self.max_iters,
            balance_target: self.balance_target,
            seed: derive_seed(self.seed, 2),
        }
    }

    pub fn model_spec(&self, extractor: FeatureExtractor) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            perceptron: PerceptronConfig {
                epochs: self.epochs,
                learning_rate: self.learning_rate,
            },
            crf: CrfConfig {
                epochs: self.crf_epochs,
                step_size: self.crf_step,
                l2: self.crf_l2,
            },
            extractor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowReport {
    pub row: Row,
    pub scores: Scores,
    /// Learning-loop rounds, for loop rows.
    pub iterations: Option<usize>,
    /// Positives selected in the last round, for loop rows.
    pub positives: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Span scores of the partial annotation against the gold training set.
    pub perturbation: Scores,
    pub b_target: f64,
    pub rows: Vec<RowReport>,
    pub config: String,
    /// Wall-clock seconds per stage; not reproducible, kept apart.
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub fn row(&self, row: Row) -> Option<&RowReport> {
        self.rows.iter().find(|r| r.row == row)
    }

    /// Tab-separated report, percentages to two decimals.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "# partial annotation: precision {:.2} recall {:.2}\n",
            100.0 * self.perturbation.precision,
            100.0 * self.perturbation.recall
        ));
        s.push_str(&format!("# b_target {}\n", self.b_target));
        s.push_str("row\tprecision\trecall\tf1\titerations\tpositives\n");
        let opt = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{:.2}\t{:.2}\t{:.2}\t{}\t{}\n",
                r.row.name(),
                100.0 * r.scores.precision,
                100.0 * r.scores.recall,
                100.0 * r.scores.f1,
                opt(r.iterations),
                opt(r.positives)
            ));
        }
        s
    }
}

struct Stopwatch {
    timings: Vec<(String, f64)>,
}

impl Stopwatch {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f()?;
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64()));
        Ok(out)
    }
}

/// Runs every stage and writes artifacts under `cfg.out_dir`:
/// `config.txt`, `partial.conll`, `weights.<row>.tsv`, `cbl.<row>.log.tsv`,
/// `model.<row>.json`, `pred.<row>.conll`, `report.tsv` and `timings.tsv`.
/// Everything except `timings.tsv` is reproducible byte for byte.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| io_context(e, out))?;
    let mut clock = Stopwatch { timings: Vec::new() };

    let gold = read_corpus_file(&cfg.train)?;
    let test = read_corpus_file(&cfg.test)?;
    let extractor = match &cfg.clusters {
        Some(p) => FeatureExtractor::new(Some(read_clusters_file(p)?)),
        None => FeatureExtractor::default(),
    };
    fs::write(out.join("config.txt"), cfg.to_text())?;

    let partial_path = out.join("partial.conll");
    clock.time("perturb", || {
        let partial = match &cfg.partial {
            Some(p) => read_corpus_file(p)?,
            None => {
                perturb(&gold, &PerturbConfig::new(cfg.precision, cfg.recall, derive_seed(cfg.seed, 1)))?.corpus
            }
        };
        write_corpus_file(&partial, &partial_path)
    })?;
    // later stages read the artifact back rather than reuse memory
    let partial = read_corpus_file(&partial_path)?;
    partial.check_aligned(&gold)?;
    let perturbation = span_f1(&gold, &partial)?;

    let b_target = cfg.b_target.resolve(Some(&gold))?;
    let spec = cfg.model_spec(extractor);
    let cbl_cfg = cfg.cbl_config(b_target);
    let final_seed = derive_seed(cfg.seed, 3);
    let data = LabeledCorpus::bio(&partial);

    let mut rows = Vec::new();
    for &row in &cfg.rows {
        let name = row.name();
        let weights_path = out.join(format!("weights.{name}.tsv"));
        let model_path = out.join(format!("model.{name}.json"));
        let mut summary = (None, None);
        clock.time(&format!("train:{name}"), || {
            let (model, weights) = match row {
                Row::Raw | Row::Combined | Row::Oracle => {
                    let v = match row {
                        Row::Raw => raw_weights(&partial),
                        Row::Combined => combined_weights(&partial, cfg.effective_log_scale()),
                        _ => oracle_weights(&partial, &gold)?,
                    };
                    (spec.train(&data, &v, final_seed)?, v)
                }
                Row::CblRaw | Row::CblCombined => {
                    let init = if row == Row::CblRaw {
                        raw_weights(&partial)
                    } else {
                        combined_weights(&partial, cfg.effective_log_scale())
                    };
                    let run = run_cbl(&partial, &init, &cbl_cfg, &spec, final_seed)?;
                    let log_path = out.join(format!("cbl.{name}.log.tsv"));
                    let mut w = BufWriter::new(File::create(&log_path).map_err(|e| io_context(e, &log_path))?);
                    write_iteration_log(&run.log, &mut w)?;
                    w.flush()?;
                    let last = run.log.last().expect("at least one round");
                    summary = (Some(run.log.len()), Some(last.positives_selected));
                    (run.model, run.weights)
                }
            };
            write_weights_file(&weights, &weights_path)?;
            model.save_file(&model_path)
        })?;

        let pred_path = out.join(format!("pred.{name}.conll"));
        clock.time(&format!("predict:{name}"), || {
            let model = AnyModel::load_file(&model_path)?;
            write_corpus_file(&model.tag_corpus(&test)?, &pred_path)
        })?;
        let scores = clock.time(&format!("evaluate:{name}"), || {
            span_f1(&read_corpus_file(&cfg.test)?, &read_corpus_file(&pred_path)?)
        })?;
        rows.push(RowReport {
            row,
            scores,
            iterations: summary.0,
            positives: summary.1,
        });
    }

    let report = ExperimentReport {
        perturbation,
        b_target,
        rows,
        config: cfg.to_text(),
        timings: clock.timings,
    };
    fs::write(out.join("report.tsv"), report.to_tsv())?;
    let timings: String = report
        .timings
        .iter()
        .map(|(s, t)| format!("{s}\t{t:.3}\n"))
        .collect();
    fs::write(out.join("timings.tsv"), format!("stage\tseconds\n{timings}"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let text = "train = a.conll\ntest = b.conll # held out\nout_dir = out\nmodel = crf\nb_target = flat:0.15\nrows = oracle, raw\nlog_scale = on\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.model, ModelKind::Crf);
        assert_eq!(cfg.b_target, RatioTarget::Flat(0.15));
        assert_eq!(cfg.rows, vec![Row::Raw, Row::Oracle]);
        assert_eq!(cfg.log_scale, Some(true));
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn bad_config_lines() {
        match PipelineConfig::parse("train = x\nbogus = 1\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(PipelineConfig::parse("seed = -1\n").is_err());
        assert!(PipelineConfig::parse("just words\n").is_err());
        assert!(PipelineConfig::parse("rows = raw,best\n").is_err());
    }

    #[test]
    fn missing_inputs_fail_validation() {
        let cfg = PipelineConfig {
            train: "/nonexistent/train.conll".into(),
            test: "/nonexistent/test.conll".into(),
            out_dir: "/tmp/x".into(),
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("train")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = PipelineConfig::default();
        let values = [
            ("train", "a"),
            ("test", "b"),
            ("out_dir", "c"),
            ("partial", "d"),
            ("clusters", "e"),
            ("seed", "3"),
            ("precision", "0.8"),
            ("recall", "0.4"),
            ("model", "crf"),
            ("b_target", "0.1"),
            ("balance_target", "0.12"),
            ("b_step", "0.01"),
            ("delta", "0.002"),
            ("xi", "0.99"),
            ("max_iters", "7"),
            ("log_scale", "on"),
            ("epochs", "3"),
            ("learning_rate", "0.5"),
            ("crf_epochs", "2"),
            ("crf_step", "0.2"),
            ("crf_l2", "0"),
            ("rows", "raw"),
            ("note", "free text"),
        ];
        assert_eq!(values.len(), CONFIG_KEYS.len());
        for (k, v) in values {
            cfg.set(k, v).unwrap();
        }
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.balance_target, Some(0.12));
    }
}
