use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbl_ner::cbl::{write_iteration_log, CblConfig, RatioTarget};
use cbl_ner::corpus::{span_f1, LabeledCorpus};
use cbl_ner::crf::CrfConfig;
use cbl_ner::derive_seed;
use cbl_ner::error::{Error, Result};
use cbl_ner::features::FeatureExtractor;
use cbl_ner::model::Tagger;
use cbl_ner::perceptron::PerceptronConfig;
use cbl_ner::perturb::{perturb, PerturbConfig};
use cbl_ner::pipeline::{
    read_clusters_file, read_corpus_file, read_weights_file, run_cbl, run_pipeline, write_corpus_file,
    write_weights_file, AnyModel, ModelKind, ModelSpec, PipelineConfig,
};
use cbl_ner::weighting::{initial_weights, raw_weights, FrequencyTable, Scheme};

#[derive(Parser)]
#[command(name = "cbl-ner", version, about = "NER from partially annotated corpora")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower the precision and recall of a gold corpus.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        precision: f64,
        #[arg(long, default_value_t = 0.5)]
        recall: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write initial instance weights for a partial corpus.
    WeightsInit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "raw")]
        scheme: Scheme,
        #[arg(long, default_value = "off")]
        log_scale: Switch,
        /// `surface<TAB>count` table overriding in-corpus counts.
        #[arg(long)]
        freq_table: Option<PathBuf>,
    },
    /// Learn instance weights and a tagger with the constrained loop.
    Cbl {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value = "raw")]
        weights_init: Scheme,
        /// Defaults to on for the CRF, off for the perceptron.
        #[arg(long)]
        log_scale: Option<Switch>,
        #[arg(long, default_value = "flat:0.15")]
        b_target: RatioTarget,
        /// Gold version of the training corpus, for `--b-target gold`.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        balance_target: Option<f64>,
        #[arg(long, default_value_t = 0.0025)]
        b_step: f64,
        #[arg(long, default_value_t = 0.001)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out_weights: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train a weighted tagger.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// Weight sidecar; all weights 1 when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Tag a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Span-level precision, recall and F1.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Run a full experiment from a key = value config; any key can be
    /// overridden with `--key value`.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "perceptron")]
    model: ModelKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    crf_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    crf_step: f64,
    #[arg(long, default_value_t = 1e-4)]
    crf_l2: f64,
    /// `surface<TAB>bitpath` word clusters.
    #[arg(long)]
    clusters: Option<PathBuf>,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        let extractor = match &self.clusters {
            Some(p) => FeatureExtractor::new(Some(read_clusters_file(p)?)),
            None => FeatureExtractor::default(),
        };
        Ok(ModelSpec {
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
        })
    }
}

#[derive(Clone, Copy)]
struct Switch(bool);

impl std::str::FromStr for Switch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "on" => Ok(Switch(true)),
            "off" => Ok(Switch(false)),
            _ => Err(format!("expected on|off, got {s:?}")),
        }
    }
}

fn frequency_table(path: &Path) -> Result<FrequencyTable> {
    FrequencyTable::read_tsv(BufReader::new(File::open(path)?))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Perturb {
            input,
            out,
            precision,
            recall,
            seed,
        } => {
            let gold = read_corpus_file(&input)?;
            let p = perturb(&gold, &PerturbConfig::new(precision, recall, seed))?;
            write_corpus_file(&p.corpus, &out)?;
            println!("precision {:.2} recall {:.2}", p.precision, p.recall);
        }
        Command::WeightsInit {
            input,
            out,
            scheme,
            log_scale,
            freq_table,
        } => {
            let pa = read_corpus_file(&input)?;
            let table = freq_table.as_deref().map(frequency_table).transpose()?;
            write_weights_file(&initial_weights(&pa, scheme, log_scale.0, table.as_ref()), &out)?;
        }
        Command::Cbl {
            train,
            weights_init,
            log_scale,
            b_target,
            gold,
            balance_target,
            b_step,
            delta,
            xi,
            max_iters,
            model,
            out_weights,
            out_model,
            log,
        } => {
            let pa = read_corpus_file(&train)?;
            let gold = gold.as_deref().map(read_corpus_file).transpose()?;
            if let Some(g) = &gold {
                pa.check_aligned(g)?;
            }
            let cfg = CblConfig {
                b_target: b_target.resolve(gold.as_ref())?,
                delta,
                xi,
                b_step,
                max_iterations: max_iters,
                balance_target,
                seed: derive_seed(model.seed, 2),
            };
            let log_scale = log_scale.map_or(model.model == ModelKind::Crf, |s| s.0);
            let init = initial_weights(&pa, weights_init, log_scale, None);
            let run = run_cbl(&pa, &init, &cfg, &model.spec()?, derive_seed(model.seed, 3))?;
            write_weights_file(&run.weights, &out_weights)?;
            run.model.save_file(&out_model)?;
            if let Some(path) = log {
                write_iteration_log(&run.log, File::create(path)?)?;
            }
        }
        Command::Train {
            train,
            weights,
            model,
            out_model,
        } => {
            let pa = read_corpus_file(&train)?;
            let v = match weights {
                Some(p) => read_weights_file(&p, &pa)?,
                None => raw_weights(&pa),
            };
            let trained = model.spec()?.train(&LabeledCorpus::bio(&pa), &v, derive_seed(model.seed, 3))?;
            trained.save_file(&out_model)?;
        }
        Command::Predict { model, input, out } => {
            let m = AnyModel::load_file(&model)?;
            let corpus = read_corpus_file(&input)?;
            write_corpus_file(&m.tag_corpus(&corpus)?, &out)?;
        }
        Command::Evaluate { gold, pred } => {
            let scores = span_f1(&read_corpus_file(&gold)?, &read_corpus_file(&pred)?)?;
            println!("{scores}");
        }
        Command::Pipeline { config, overrides } => {
            let mut cfg = PipelineConfig::load(&config)?;
            let mut it = overrides.iter();
            while let Some(flag) = it.next() {
                let key = flag
                    .strip_prefix("--")
                    .ok_or_else(|| Error::Config(format!("expected --key value, got {flag:?}")))?
                    .replace('-', "_");
                let (key, value) = match key.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => {
                        let v = it
                            .next()
                            .ok_or_else(|| Error::Config(format!("missing value for --{key}")))?;
                        (key, v.clone())
                    }
                };
                cfg.set(&key, &value)?;
            }
            let report = run_pipeline(&cfg)?;
            print!("{}", report.to_tsv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&text).trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
