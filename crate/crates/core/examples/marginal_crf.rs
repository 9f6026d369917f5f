//! Soft gold labels and the marginal CRF: an instance weight `v` on an
//! unannotated token becomes the distribution `[max(1/L, v), ...]`, and the
//! loss sums over every labeling compatible with it.

use cbl_ner::corpus::{read_conll_str, span_f1, LabeledCorpus};
use cbl_ner::crf::{soft_label_row, soft_labels, CrfConfig, CrfTrainer};
use cbl_ner::model::Tagger;
use cbl_ner::weighting::WeightVector;

fn main() -> cbl_ner::Result<()> {
    for v in [0.0, 0.3, 0.6, 1.0] {
        println!("v = {v}: L=2 {:?}  L=3 {:?}", soft_label_row(v, 2), soft_label_row(v, 3));
    }

    let mut text = String::new();
    let cities = ["Kalomi", "Tosvor", "Belsan", "Drumar"];
    for (i, c) in cities.iter().cycle().take(40).enumerate() {
        // the last city is never annotated
        let tag = if i % 4 == 3 { "O" } else { "B-LOC" };
        text.push_str(&format!("they O\nflew O\nto O\n{c} {tag}\nyesterday O\n\n"));
    }
    let pa = read_conll_str(&text)?;
    let data = LabeledCorpus::bio(&pa);
    let trainer = CrfTrainer::new(CrfConfig {
        epochs: 10,
        ..Default::default()
    });
    let test = read_conll_str("they O\nflew O\nto O\nDrumar B-LOC\nyesterday O\n")?;
    for (name, weight) in [("full trust", 1.0), ("no trust", 0.0)] {
        // weight the untagged city token, keep every other token at 1
        let mut v = WeightVector::uniform(&data, 1.0);
        for s in (3..40).step_by(4) {
            v.set(s, 3, weight);
        }
        let g = soft_labels(&data, &v)?;
        let (model, history) = trainer.train_with_history(&data, &v, 1)?;
        let tagged = model.tag_corpus(&test)?;
        println!(
            "{name}: G for Drumar {:?}, loss {:.3} -> {:.3}, Drumar tagged {} ({})",
            g.row(3, 3),
            history[0],
            history[history.len() - 1],
            tagged.sentences()[0].tags()[3],
            span_f1(&test, &tagged)?
        );
    }
    Ok(())
}
