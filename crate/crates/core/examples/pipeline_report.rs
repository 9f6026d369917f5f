//! Generates a synthetic corpus and runs every baseline row end to end.
//!
//! cargo run --release --example pipeline_report -- [perceptron|crf] [out_dir]

use std::path::PathBuf;

use cbl_ner::pipeline::{run_pipeline, write_corpus_file, PipelineConfig};
use cbl_ner::synth::{generate, SynthConfig};

fn main() -> cbl_ner::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = args.first().map(String::as_str).unwrap_or("perceptron");
    let out = PathBuf::from(args.get(1).map(String::as_str).unwrap_or("target/pipeline-report"));
    std::fs::create_dir_all(&out)?;

    let data = generate(&SynthConfig::default())?;
    let (train, test) = (out.join("train.gold.conll"), out.join("test.gold.conll"));
    write_corpus_file(&data.train, &train)?;
    write_corpus_file(&data.test, &test)?;

    let mut cfg = PipelineConfig {
        train,
        test,
        out_dir: out.join(model),
        seed: 7,
        ..Default::default()
    };
    cfg.set("model", model)?;
    for pair in args.iter().skip(2) {
        if let Some((k, v)) = pair.split_once('=') {
            cfg.set(k, v)?;
        }
    }
    let report = run_pipeline(&cfg)?;
    print!("{}", report.to_tsv());
    for (stage, secs) in &report.timings {
        eprintln!("{stage}\t{secs:.2}s");
    }
    Ok(())
}
