//! Initial instance weights for unannotated tokens.

use cbl_ner::corpus::{read_conll_str, Annotation};
use cbl_ner::weighting::{initial_weights, Scheme};

const PARTIAL: &str = "\
the O
minister O
Ravel B-PER
Oruk O
said O
the O
talks O
failed O
";

fn main() -> cbl_ner::Result<()> {
    let pa = read_conll_str(PARTIAL)?;
    let words = pa.sentences()[0].surfaces();
    print!("{:>10}", "");
    for w in &words {
        print!("{w:>9}");
    }
    println!();
    for scheme in [Scheme::Raw, Scheme::Freq, Scheme::Window, Scheme::Combined] {
        let v = initial_weights(&pa, scheme, false, None);
        print!("{:>10}", scheme.to_string());
        for t in 0..pa.sentence_len(0) {
            print!("{:>9.3}", v.get(0, t));
        }
        println!();
    }
    // rare words lose weight unless they sit next to an annotated token
    let mut sidecar = Vec::new();
    initial_weights(&pa, Scheme::Combined, true, None).write_tsv(&mut sidecar)?;
    print!("{}", String::from_utf8_lossy(&sidecar));
    Ok(())
}
