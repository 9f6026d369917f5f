//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use cbl_ner::cbl::{balance, solve_inference, InferenceProblem, RatioTarget};
use cbl_ner::corpus::{
    span_f1, weighted_entity_ratio, write_conll_string, Annotation, Corpus, LabeledCorpus, Sentence, Tag,
};
use cbl_ner::crf::{soft_label_row, soft_labels, CrfModel, EncodedSentence};
use cbl_ner::features::{FeatureExtractor, FeatureIndex};
use cbl_ner::perceptron::{build_instances, train_instances, PerceptronConfig};
use cbl_ner::perturb::{perturb, PerturbConfig};
use cbl_ner::pipeline::{run_pipeline, write_corpus_file, ExperimentReport, PipelineConfig, Row};
use cbl_ner::synth::{generate, SynthConfig};
use cbl_ner::weighting::WeightVector;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- 1: solver

fn brute_force(p: &InferenceProblem) -> Option<f64> {
    let n = p.c0.len();
    let n_pos = p.p_mask.iter().filter(|&&x| x).count();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let count = mask.count_ones() as usize;
        let ratio = count as f64 / n as f64;
        if ratio < p.b - p.delta || ratio > p.b + p.delta {
            continue;
        }
        let kept = (0..n).filter(|&i| p.p_mask[i] && mask >> i & 1 == 1).count();
        if (kept as f64) < p.xi * n_pos as f64 {
            continue;
        }
        let obj: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { p.c1[i] } else { p.c0[i] }).sum();
        if best.map_or(true, |b| obj > b) {
            best = Some(obj);
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut checked, mut mismatches, mut violations, mut infeasible) = (0, 0, 0, 0);
    while checked < 250 {
        let n = rng.gen_range(1..=15);
        let k = rng.gen_range(0..=n.min(4));
        let mut p_mask = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, k) {
            p_mask[i] = true;
        }
        let prob = InferenceProblem {
            c0: (0..n).map(|_| rng.gen_range(-5.0..=5.0)).collect(),
            c1: (0..n).map(|_| rng.gen_range(-5.0..=5.0)).collect(),
            p_mask,
            b: rng.gen_range(0.02..0.98),
            delta: rng.gen_range(0.0..0.25),
            xi: if rng.gen_bool(0.75) { 1.0 } else { rng.gen_range(0.5..1.0) },
        };
        let Some(best) = brute_force(&prob) else {
            infeasible += 1;
            if solve_inference(&prob).is_ok() {
                mismatches += 1;
            }
            continue;
        };
        checked += 1;
        match solve_inference(&prob) {
            Ok(sol) => {
                if sol.objective != best {
                    mismatches += 1;
                }
                let count = sol.positive.iter().filter(|&&y| y).count();
                let kept = sol.positive.iter().zip(&prob.p_mask).filter(|(&y, &p)| y && p).count();
                let ratio = count as f64 / n as f64;
                if count != sol.positive_count
                    || ratio < prob.b - prob.delta
                    || ratio > prob.b + prob.delta
                    || (kept as f64) < prob.xi * k as f64
                {
                    violations += 1;
                }
            }
            Err(_) => mismatches += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && violations == 0 && secs < 30.0,
        format!("{checked} feasible and {infeasible} infeasible problems, {mismatches} mismatches, {violations} constraint violations, {secs:.1}s"),
    )
}

// ------------------------------------------------------------ 2: balancing

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_gamma: f64 = 0.0;
    let mut p_touched = 0;
    for _ in 0..100 {
        let sentences: Vec<Sentence> = (0..rng.gen_range(1..6))
            .map(|_| {
                let len = rng.gen_range(1..15);
                let tags = (0..len)
                    .map(|_| if rng.gen_bool(0.2) { Tag::Begin("PER".into()) } else { Tag::Outside })
                    .collect();
                Sentence::new((0..len).map(|i| format!("w{i}")).collect(), tags).unwrap()
            })
            .collect();
        let mut pa = Corpus::new(sentences);
        if pa.positive_count() == 0 || pa.positive_count() == pa.token_count() {
            // force both classes to be present
            let s = &pa.sentences()[0];
            let mut tags = s.tags().to_vec();
            tags[0] = if pa.positive_count() == 0 { Tag::Begin("PER".into()) } else { Tag::Outside };
            let fixed = s.with_tags(tags).unwrap();
            let mut all = pa.sentences().to_vec();
            all[0] = fixed;
            pa = Corpus::new(all);
            if pa.positive_count() == 0 || pa.positive_count() == pa.token_count() {
                continue;
            }
        }
        let v = WeightVector::from_rows(
            (0..pa.num_sentences())
                .map(|s| (0..pa.sentence_len(s)).map(|_| rng.gen_range(0.01..1.0)).collect())
                .collect(),
        );
        let b: f64 = rng.gen_range(0.01..0.99);
        let (out, gamma) = balance(&v, &pa, b).unwrap();
        let ratio = weighted_entity_ratio(&pa, &out).unwrap();
        worst_ratio = worst_ratio.max((ratio - b).abs());

        let mut mass = 0.0;
        for (s, t, w) in v.iter() {
            if !pa.is_positive(s, t) {
                mass += w;
            }
        }
        let expected = (1.0 - b) * pa.positive_count() as f64 / (b * mass);
        worst_gamma = worst_gamma.max(((gamma - expected) / expected).abs());
        for (s, t, w) in v.iter() {
            let got = out.get(s, t);
            if pa.is_positive(s, t) {
                if got != w {
                    p_touched += 1;
                }
            } else {
                worst_gamma = worst_gamma.max(((got - expected * w) / (expected * w)).abs());
            }
        }
    }
    outcome(
        worst_ratio <= 1e-9 && worst_gamma <= 1e-12 && p_touched == 0,
        format!("max |ratio - b*| {worst_ratio:.2e}, max relative gamma/weight deviation {worst_gamma:.2e}, P weights changed {p_touched}"),
    )
}

// ------------------------------------------------------------ 3: marginal CRF

struct Triple {
    model: CrfModel,
    sent: EncodedSentence,
    g: Vec<Vec<f64>>,
}

const FEATURES: usize = 6;

fn random_triple(rng: &mut ChaCha8Rng, g_kind: u8) -> Triple {
    let l = rng.gen_range(2..=4);
    let n = rng.gen_range(1..=8);
    let labels: Vec<String> = (0..l).map(|i| format!("L{i}")).collect();
    let index = FeatureIndex::from_names((0..FEATURES).map(|i| format!("f{i}")).collect());
    let params: Vec<f64> = (0..l * l + 2 * l + FEATURES * l).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let model = CrfModel::from_params(labels, index, params).unwrap();
    let sent = EncodedSentence {
        features: (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=3);
                rand::seq::index::sample(rng, FEATURES, k).into_iter().map(|f| f as u32).collect()
            })
            .collect(),
    };
    let g = (0..n)
        .map(|_| match g_kind {
            0 => {
                let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(0.01..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / z).collect()
            }
            1 => {
                let y = rng.gen_range(0..l);
                (0..l).map(|j| if j == y { 1.0 } else { 0.0 }).collect()
            }
            2 => vec![1.0 / l as f64; l],
            _ => soft_label_row(rng.gen_range(0.0..1.0), l),
        })
        .collect();
    Triple { model, sent, g }
}

/// Path score from the documented parameter layout:
/// transitions `L*L`, start `L`, stop `L`, then emissions `F*L`.
fn oracle_path_score(t: &Triple, path: &[usize]) -> f64 {
    let p = t.model.params();
    let l = t.model.num_labels();
    let emit = |i: usize, y: usize| -> f64 {
        t.sent.features[i].iter().map(|&f| p[l * l + 2 * l + f as usize * l + y]).sum()
    };
    let mut s = p[l * l + path[0]] + p[l * l + l + path[path.len() - 1]];
    for (i, &y) in path.iter().enumerate() {
        s += emit(i, y);
        if i > 0 {
            s += p[path[i - 1] * l + y];
        }
    }
    s
}

fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `-log sum_y q(y) P(y|x)` by explicit enumeration.
fn oracle_loss(t: &Triple) -> f64 {
    let paths = all_paths(t.sent.len(), t.model.num_labels());
    let scores: Vec<f64> = paths.iter().map(|p| oracle_path_score(t, p)).collect();
    let weighted: Vec<f64> = paths
        .iter()
        .zip(&scores)
        .map(|(p, s)| s + p.iter().enumerate().map(|(i, &y)| t.g[i][y].ln()).sum::<f64>())
        .collect();
    log_sum_exp(&scores) - log_sum_exp(&weighted)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);

    let mut worst_a: f64 = 0.0;
    for i in 0..50 {
        let t = random_triple(&mut rng, if i % 2 == 0 { 0 } else { 3 });
        let got = t.model.loss(&t.sent, &t.g).unwrap();
        worst_a = worst_a.max((got - oracle_loss(&t)).abs());
    }

    let mut worst_b: f64 = 0.0;
    for _ in 0..50 {
        let t = random_triple(&mut rng, 1);
        let gold: Vec<usize> = t.g.iter().map(|r| r.iter().position(|&x| x == 1.0).unwrap()).collect();
        let marginal = t.model.loss(&t.sent, &t.g).unwrap();
        worst_b = worst_b.max((marginal - t.model.nll(&t.sent, &gold)).abs());
        let paths = all_paths(t.sent.len(), t.model.num_labels());
        let scores: Vec<f64> = paths.iter().map(|p| oracle_path_score(&t, p)).collect();
        let enumerated = log_sum_exp(&scores) - oracle_path_score(&t, &gold);
        worst_b = worst_b.max((marginal - enumerated).abs());
    }

    let (mut worst_c_loss, mut worst_c_grad): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let t = random_triple(&mut rng, 2);
        let expected = t.sent.len() as f64 * (t.model.num_labels() as f64).ln();
        worst_c_loss = worst_c_loss.max((t.model.loss(&t.sent, &t.g).unwrap() - expected).abs());
        let grad = t.model.gradient(&t.sent, &t.g).unwrap();
        worst_c_grad = worst_c_grad.max(grad.iter().fold(0.0, |m, x| m.max(x.abs())));
    }

    let h = 1e-5;
    let mut worst_d: f64 = 0.0;
    for i in 0..100 {
        let mut t = random_triple(&mut rng, if i % 2 == 0 { 0 } else { 3 });
        if i % 4 == 1 {
            t.model = t.model.clone().with_l2(0.1);
        }
        let analytic = t.model.gradient(&t.sent, &t.g).unwrap();
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = t.model.clone();
            plus.params_mut()[j] += h;
            let mut minus = t.model.clone();
            minus.params_mut()[j] -= h;
            let fd = (plus.loss(&t.sent, &t.g).unwrap() - minus.loss(&t.sent, &t.g).unwrap()) / (2.0 * h);
            let rel = (fd - a).abs() / a.abs().max(fd.abs()).max(1e-4);
            worst_d = worst_d.max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_a <= 1e-8
        && worst_b <= 1e-10
        && worst_c_loss <= 1e-10
        && worst_c_grad < 1e-10
        && worst_d < 1e-4
        && secs < 120.0;
    outcome(
        pass,
        format!(
            "(a) {worst_a:.1e} (b) {worst_b:.1e} (c) loss {worst_c_loss:.1e} grad {worst_c_grad:.1e} (d) rel {worst_d:.1e}; {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------- 4: soft labels

fn criterion_4() -> Outcome {
    let zero = soft_label_row(0.0, 2);
    let six = soft_label_row(0.6, 2);
    let pa = cbl_ner::corpus::read_conll_str("Arsenal O\nsaid O\n").unwrap();
    let data = LabeledCorpus::binary(&pa);
    let g = soft_labels(&data, &WeightVector::from_rows(vec![vec![0.0, 0.6]])).unwrap();
    let pass = zero == [0.5, 0.5] && six == [0.6, 0.4] && g.row(0, 0) == [0.5, 0.5] && g.row(0, 1) == [0.6, 0.4];
    outcome(pass, format!("v=0 -> {zero:?}, v=0.6 -> {six:?}"))
}

// ---------------------------------------------------------- 5: perturbation

fn criterion_5(gold: &Corpus) -> Outcome {
    let cfg = PerturbConfig::new(0.9, 0.5, 17);
    let a = perturb(gold, &cfg).unwrap();
    let b = perturb(gold, &cfg).unwrap();
    let same = write_conll_string(&a.corpus) == write_conll_string(&b.corpus);
    let measured = span_f1(gold, &a.corpus).unwrap();
    let pass = (measured.precision - 0.9).abs() <= 0.02
        && (0.40..=0.50).contains(&measured.recall)
        && same
        && measured.precision == a.precision;
    outcome(
        pass,
        format!(
            "{} sentences: precision {:.4} recall {:.4}, identical reruns {same}",
            gold.len(),
            measured.precision,
            measured.recall
        ),
    )
}

// --------------------------------------------------- 6: deletion equivalence

fn criterion_6(gold: &Corpus) -> Outcome {
    let partial = perturb(gold, &PerturbConfig::new(0.9, 0.5, 5)).unwrap().corpus;
    let data = LabeledCorpus::bio(&partial);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut zeroed = WeightVector::uniform(&data, 1.0);
    let mut dropped = vec![Vec::new(); data.num_sentences()];
    let mut n_neg = 0;
    for s in 0..data.num_sentences() {
        for t in 0..data.sentence_len(s) {
            if !data.is_positive(s, t) {
                n_neg += 1;
                if rng.gen_bool(0.3) {
                    zeroed.set(s, t, 0.0);
                    dropped[s].push(t);
                }
            }
        }
    }
    let fx = FeatureExtractor::default();
    let cfg = PerceptronConfig::default();
    let with_zeros = build_instances(&data, &zeroed, &fx).unwrap();
    let mut deleted = build_instances(&data, &WeightVector::uniform(&data, 1.0), &fx).unwrap();
    for (s, drop) in dropped.iter().enumerate() {
        for &t in drop.iter().rev() {
            deleted[s].remove(t);
        }
    }
    let a = train_instances(&with_zeros, data.label_names().to_vec(), &cfg, 9).unwrap();
    let b = train_instances(&deleted, data.label_names().to_vec(), &cfg, 9).unwrap();
    let (wa, wb) = (a.weight_map(), b.weight_map());
    let bitwise = wa.len() == wb.len()
        && wa.iter().zip(&wb).all(|((ka, va), (kb, vb))| {
            ka == kb && va.len() == vb.len() && va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let removed: usize = dropped.iter().map(Vec::len).sum();
    outcome(
        bitwise && a.updates() == b.updates(),
        format!("{removed} of {n_neg} negatives zeroed; {} features compared bitwise, equal {bitwise}", wa.len()),
    )
}

// ------------------------------------------------------- 7-9: end to end

struct EndToEnd {
    perceptron: ExperimentReport,
    crf: ExperimentReport,
    perceptron_flat: ExperimentReport,
    crf_flat: ExperimentReport,
    secs: f64,
}

fn run_end_to_end(data: &cbl_ner::synth::SynthCorpus) -> EndToEnd {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.conll");
    let test = dir.path().join("test.conll");
    write_corpus_file(&data.train, &train).unwrap();
    write_corpus_file(&data.test, &test).unwrap();
    let run = |model: &str, target: RatioTarget, rows: &str| {
        let mut cfg = PipelineConfig {
            train: train.clone(),
            test: test.clone(),
            out_dir: dir.path().join(format!("{model}-{target}")),
            seed: 7,
            b_target: target,
            ..Default::default()
        };
        cfg.set("model", model).unwrap();
        cfg.set("rows", rows).unwrap();
        run_pipeline(&cfg).unwrap()
    };
    let main_rows = "raw,cbl-raw,oracle";
    let perceptron = run("perceptron", RatioTarget::Gold, main_rows);
    let crf = run("crf", RatioTarget::Gold, main_rows);
    let secs = start.elapsed().as_secs_f64();
    let perceptron_flat = run("perceptron", RatioTarget::Flat(0.15), "cbl-raw");
    let crf_flat = run("crf", RatioTarget::Flat(0.15), "cbl-raw");
    EndToEnd {
        perceptron,
        crf,
        perceptron_flat,
        crf_flat,
        secs,
    }
}

fn f1(r: &ExperimentReport, row: Row) -> f64 {
    100.0 * r.row(row).expect("row present").scores.f1
}

fn criterion_7(e: &EndToEnd) -> Outcome {
    let (pr, pc, po) = (f1(&e.perceptron, Row::Raw), f1(&e.perceptron, Row::CblRaw), f1(&e.perceptron, Row::Oracle));
    let (cr, cc, co) = (f1(&e.crf, Row::Raw), f1(&e.crf, Row::CblRaw), f1(&e.crf, Row::Oracle));
    let perceptron_ok = pr < pc && pc <= po + 2.0 && pc - pr >= 5.0;
    let crf_ok = cr < cc && cc <= co + 2.0;
    outcome(
        perceptron_ok && crf_ok && e.secs < 600.0,
        format!(
            "perceptron raw {pr:.2} < cbl-raw {pc:.2} <= oracle {po:.2} + 2 (gain {:.2}); crf raw {cr:.2} < cbl-raw {cc:.2} <= oracle {co:.2} + 2 (gain {:.2}); {:.0}s",
            pc - pr,
            cc - cr,
            e.secs
        ),
    )
}

fn criterion_8(e: &EndToEnd) -> Outcome {
    let p = (f1(&e.perceptron, Row::CblRaw), f1(&e.perceptron_flat, Row::CblRaw));
    let c = (f1(&e.crf, Row::CblRaw), f1(&e.crf_flat, Row::CblRaw));
    outcome(
        (p.0 - p.1).abs() <= 2.0 && (c.0 - c.1).abs() <= 2.0,
        format!(
            "cbl-raw F1 true ratio {:.4} vs flat 0.15: perceptron {:.2} vs {:.2}, crf {:.2} vs {:.2}",
            e.perceptron.b_target, p.0, p.1, c.0, c.1
        ),
    )
}

fn criterion_9(e: &EndToEnd) -> Outcome {
    let p = e.perceptron.row(Row::Raw).unwrap().scores;
    let c = e.crf.row(Row::Raw).unwrap().scores;
    outcome(
        p.precision >= 1.5 * p.recall && c.precision >= 1.5 * c.recall,
        format!(
            "raw perceptron precision {:.2} recall {:.2}; raw crf precision {:.2} recall {:.2}",
            100.0 * p.precision,
            100.0 * p.recall,
            100.0 * c.precision,
            100.0 * c.recall
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters pass arguments; run regardless of
    // filters but answer listing requests with nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let synth = generate(&SynthConfig::default()).expect("synthetic corpus");
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "inference solver equals exhaustive search", criterion_1()),
        (2, "balancing hits the target ratio", criterion_2()),
        (3, "marginal CRF loss and gradient", criterion_3()),
        (4, "soft label values", criterion_4()),
        (5, "perturbation targets and determinism", criterion_5(&synth.train)),
        (6, "zero weight equals deletion", criterion_6(&synth.train)),
    ];
    let e = run_end_to_end(&synth);
    results.push((7, "end-to-end ordering", criterion_7(&e)));
    results.push((8, "flat ratio robustness", criterion_8(&e)));
    results.push((9, "raw precision/recall asymmetry", criterion_9(&e)));

    let mut failed = 0;
    for (n, name, o) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n} {status}: {name}: {}", o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
