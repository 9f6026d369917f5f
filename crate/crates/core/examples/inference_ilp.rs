//! The constrained inference step: choose the best entity/non-entity
//! labeling whose positive count stays inside a ratio window while
//! keeping annotated positives.

use cbl_ner::cbl::{solve_inference, InferenceProblem};

fn main() -> cbl_ner::Result<()> {
    // P(entity) from some detector, for ten tokens; token 0 is annotated
    let p_ent = [0.97, 0.80, 0.10, 0.55, 0.02, 0.40, 0.05, 0.01, 0.30, 0.03];
    let words = ["Ravel", "Oruk", "said", "Kalomi", "the", "Friday", "talks", "had", "Group", "failed"];
    for b in [0.1, 0.2, 0.3, 0.5] {
        let prob = InferenceProblem {
            c0: p_ent.iter().map(|p: &f64| (1.0 - p).ln()).collect(),
            c1: p_ent.iter().map(|p: &f64| p.ln()).collect(),
            p_mask: (0..10).map(|i| i == 0).collect(),
            b,
            delta: 0.001,
            xi: 1.0,
        };
        let sol = solve_inference(&prob)?;
        let chosen: Vec<&str> = (0..10).filter(|&i| sol.positive[i]).map(|i| words[i]).collect();
        println!("b = {b}: {} positives {chosen:?}, objective {:.3}", sol.positive_count, sol.objective);
    }
    let impossible = InferenceProblem {
        c0: vec![0.0; 10],
        c1: vec![0.0; 10],
        p_mask: (0..10).map(|i| i < 3).collect(),
        b: 0.1,
        delta: 0.0,
        xi: 1.0,
    };
    if let Err(e) = solve_inference(&impossible) {
        println!("{e}");
    }
    Ok(())
}
