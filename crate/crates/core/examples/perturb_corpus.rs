//! Simulating partial annotation: drop whole surface forms until recall
//! reaches the target, then add random spans to lower precision.

use cbl_ner::perturb::{perturb, PerturbConfig};
use cbl_ner::synth::{generate, SynthConfig};

fn main() -> cbl_ner::Result<()> {
    let gold = generate(&SynthConfig::default())?.train;
    println!("gold: {} sentences, {} spans", gold.len(), gold.span_count());
    for (p, r) in [(0.9, 0.5), (1.0, 0.3), (0.7, 0.9)] {
        let out = perturb(&gold, &PerturbConfig::new(p, r, 17))?;
        println!(
            "target precision {p:.2} recall {r:.2} -> achieved {:.4} {:.4} ({} spans)",
            out.precision,
            out.recall,
            out.corpus.span_count()
        );
    }
    Ok(())
}
