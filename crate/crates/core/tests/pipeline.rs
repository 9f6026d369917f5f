use std::fs;
use std::path::Path;

use cbl_ner::corpus::{span_f1, Annotation};
use cbl_ner::pipeline::{read_corpus_file, read_weights_file, run_pipeline, write_corpus_file, PipelineConfig, Row};
use cbl_ner::synth::{generate, SynthConfig};
use tempfile::TempDir;

fn config(dir: &Path, out: &str, model: &str) -> PipelineConfig {
    let data = generate(&SynthConfig {
        train_sentences: 250,
        test_sentences: 60,
        lexicon_size: 60,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let train = dir.join("train.conll");
    let test = dir.join("test.conll");
    write_corpus_file(&data.train, &train).unwrap();
    write_corpus_file(&data.test, &test).unwrap();
    let mut cfg = PipelineConfig {
        train,
        test,
        out_dir: dir.join(out),
        seed: 21,
        max_iters: 6,
        crf_epochs: 2,
        ..Default::default()
    };
    cfg.set("model", model).unwrap();
    cfg
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.tsv")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    for model in ["perceptron", "crf"] {
        let dir = TempDir::new().unwrap();
        let a = config(dir.path(), "a", model);
        let b = PipelineConfig {
            out_dir: dir.path().join("b"),
            ..a.clone()
        };
        let ra = run_pipeline(&a).unwrap();
        let rb = run_pipeline(&b).unwrap();
        assert_eq!(ra.rows, rb.rows);
        let (fa, fb) = (artifacts(&a.out_dir), artifacts(&b.out_dir));
        assert_eq!(fa.len(), fb.len());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            if na == "config.txt" {
                continue;
            }
            assert!(ba == bb, "{model}: {na} differs between runs");
        }
        assert!(fa.iter().any(|(n, _)| n == "cbl.cbl-combined.log.tsv"));
    }
}

#[test]
fn report_matches_prediction_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "out", "perceptron");
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.rows.len(), Row::ALL.len());
    let gold = read_corpus_file(&cfg.test).unwrap();
    for r in &report.rows {
        let pred = read_corpus_file(&cfg.out_dir.join(format!("pred.{}.conll", r.row.name()))).unwrap();
        assert_eq!(span_f1(&gold, &pred).unwrap(), r.scores);
        assert_eq!(r.iterations.is_some(), matches!(r.row, Row::CblRaw | Row::CblCombined));
    }
    let tsv = fs::read_to_string(cfg.out_dir.join("report.tsv")).unwrap();
    assert_eq!(tsv, report.to_tsv());

    let train_gold = read_corpus_file(&cfg.train).unwrap();
    let partial = read_corpus_file(&cfg.out_dir.join("partial.conll")).unwrap();
    assert_eq!(span_f1(&train_gold, &partial).unwrap(), report.perturbation);
}

#[test]
fn weight_rows_follow_their_rules() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(dir.path(), "out", "perceptron");
    cfg.rows = vec![Row::Raw, Row::Combined, Row::Oracle];
    run_pipeline(&cfg).unwrap();
    let gold = read_corpus_file(&cfg.train).unwrap();
    let pa = read_corpus_file(&cfg.out_dir.join("partial.conll")).unwrap();
    let load = |row: &str| read_weights_file(&cfg.out_dir.join(format!("weights.{row}.tsv")), &pa).unwrap();

    let oracle = load("oracle");
    let mut zeros = 0;
    for (s, t, w) in oracle.iter() {
        let missed = !pa.is_positive(s, t) && !gold.sentences()[s].tags()[t].is_outside();
        assert_eq!(w, if missed { 0.0 } else { 1.0 }, "({s}, {t})");
        zeros += missed as usize;
    }
    assert!(zeros > 0);
    assert!(load("raw").iter().all(|(_, _, w)| w == 1.0));
    let combined = load("combined");
    assert!(combined.iter().any(|(_, _, w)| w < 1.0));
    // the raw row's model never saw the combined weights
    assert_ne!(
        fs::read(cfg.out_dir.join("model.raw.json")).unwrap(),
        fs::read(cfg.out_dir.join("model.combined.json")).unwrap()
    );
}

#[test]
fn given_partial_skips_perturbation() {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(dir.path(), "out", "perceptron");
    cfg.rows = vec![Row::Raw];
    // the gold set as its own partial annotation
    cfg.partial = Some(cfg.train.clone());
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.perturbation.f1, 1.0);
    assert_eq!(
        fs::read_to_string(&cfg.train).unwrap(),
        fs::read_to_string(cfg.out_dir.join("partial.conll")).unwrap()
    );
}
