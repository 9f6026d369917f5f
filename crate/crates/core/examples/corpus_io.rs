//! Reading CoNLL text, inspecting spans and ratios, and scoring.

use cbl_ner::corpus::{entity_ratio, read_conll_str, span_f1, write_conll_string};

const GOLD: &str = "\
-DOCSTART- O

Arsenal B-ORG
coach O
Unai B-PER
Emery I-PER
said O
. O

Emery B-PER
left O
London B-LOC
. O
";

const PRED: &str = "\
Arsenal B-ORG
coach O
Unai B-PER
Emery O
said O
. O

Emery B-PER
left O
London B-LOC
. O
";

fn main() -> cbl_ner::Result<()> {
    let gold = read_conll_str(GOLD)?;
    let pred = read_conll_str(PRED)?;
    println!("{} sentences, labels {:?}", gold.len(), gold.label_set());
    for (i, s) in gold.sentences().iter().enumerate() {
        for span in s.spans() {
            let words = s.surfaces()[span.start..span.end].join(" ");
            println!("  sentence {i}: [{}, {}) {} {words:?}", span.start, span.end, span.etype);
        }
    }
    println!("entity ratio {:.3}", entity_ratio(&gold)?);
    // "Unai" alone is a boundary error: one false positive, one miss
    println!("{}", span_f1(&gold, &pred)?);
    print!("{}", write_conll_string(&pred));
    Ok(())
}
