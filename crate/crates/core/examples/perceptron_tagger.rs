//! Training the weighted averaged perceptron and tagging held-out text.

use cbl_ner::corpus::{span_f1, LabeledCorpus};
use cbl_ner::model::{Tagger, Trainer};
use cbl_ner::perceptron::{PerceptronConfig, PerceptronTrainer};
use cbl_ner::synth::{generate, SynthConfig};
use cbl_ner::weighting::WeightVector;

fn main() -> cbl_ner::Result<()> {
    let data = generate(&SynthConfig {
        train_sentences: 600,
        test_sentences: 200,
        ..Default::default()
    })?;
    let train = LabeledCorpus::bio(&data.train);
    let trainer = PerceptronTrainer::new(PerceptronConfig::default());
    let model = trainer.train(&train, &WeightVector::uniform(&train, 1.0), 0)?;
    println!("{} updates, {} features", model.updates(), model.weight_map().len());

    let tagged = model.tag_corpus(&data.test)?;
    println!("held-out {}", span_f1(&data.test, &tagged)?);

    let sentence: Vec<String> = "Friday the minister met Ravel Oruk in Kalomi".split(' ').map(String::from).collect();
    let (labels, dists) = model.predict_sentence(&sentence);
    for ((w, l), d) in sentence.iter().zip(labels).zip(dists) {
        println!("{w:>10} {:<7} P(O) = {:.3}", model.label_names()[l], d[0]);
    }
    Ok(())
}
