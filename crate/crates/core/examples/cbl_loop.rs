//! The full learning loop on a perturbed synthetic corpus, compared with
//! training directly on the partial annotation.

use cbl_ner::cbl::{cbl_phase1, cbl_phase2, write_iteration_log, CblConfig};
use cbl_ner::corpus::{entity_ratio, span_f1, LabeledCorpus};
use cbl_ner::model::{Tagger, Trainer};
use cbl_ner::perceptron::{PerceptronConfig, PerceptronTrainer};
use cbl_ner::perturb::{perturb, PerturbConfig};
use cbl_ner::synth::{generate, SynthConfig};
use cbl_ner::weighting::raw_weights;

fn main() -> cbl_ner::Result<()> {
    let data = generate(&SynthConfig {
        train_sentences: 1000,
        test_sentences: 300,
        ..Default::default()
    })?;
    let partial = perturb(&data.train, &PerturbConfig::new(0.9, 0.5, 3))?;
    println!("partial annotation: precision {:.2} recall {:.2}", partial.precision, partial.recall);
    let pa = partial.corpus;

    let trainer = PerceptronTrainer::new(PerceptronConfig::default());
    let raw = trainer.train(&LabeledCorpus::bio(&pa), &raw_weights(&pa), 1)?;
    println!("raw      {}", span_f1(&data.test, &raw.tag_corpus(&data.test)?)?);

    let cfg = CblConfig {
        b_target: entity_ratio(&data.train)?,
        ..Default::default()
    };
    let one = cbl_phase1(&pa, &raw_weights(&pa), &cfg, &trainer)?;
    write_iteration_log(&one.log, std::io::stdout().lock())?;
    let (model, weights) = cbl_phase2(&pa, &one.model, &trainer, 1)?;
    println!("cbl      {}", span_f1(&data.test, &model.tag_corpus(&data.test)?)?);

    // the lowest weights should land on entity tokens the annotation missed
    let mut lowest: Vec<(f64, String, bool)> = weights
        .iter()
        .filter(|&(s, t, _)| pa.sentences()[s].tags()[t].is_outside())
        .map(|(s, t, w)| (w, pa.sentences()[s].surface(t).to_string(), !data.train.sentences()[s].tags()[t].is_outside()))
        .collect();
    lowest.sort_by(|a, b| a.0.total_cmp(&b.0));
    let hits = lowest.iter().take(500).filter(|x| x.2).count();
    println!("{hits} of the 500 lowest-weighted O tokens are missed entities");
    Ok(())
}
