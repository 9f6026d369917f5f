//! Simulated partial annotation: recall is lowered by untagging whole
//! surface forms, then precision is lowered by adding random noise spans.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{span_f1, Corpus, Span, Tag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub target_precision: f64,
    pub target_recall: f64,
    pub noise_span_lengths: RangeInclusive<usize>,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            target_precision: 0.9,
            target_recall: 0.5,
            noise_span_lengths: 1..=3,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn new(target_precision: f64, target_recall: f64, seed: u64) -> Self {
        PerturbConfig {
            target_precision,
            target_recall,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction("target_precision", self.target_precision)?;
        check_fraction("target_recall", self.target_recall)?;
        let r = &self.noise_span_lengths;
        if r.is_empty() || *r.start() == 0 {
            return Err(Error::InvalidArgument(format!(
                "noise span lengths must be a nonempty positive range, got {r:?}"
            )));
        }
        Ok(())
    }
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be in (0, 1], got {x}")))
    }
}

#[derive(Debug, Clone)]
pub struct Perturbed {
    pub corpus: Corpus,
    pub precision: f64,
    pub recall: f64,
}

/// Space-joined tokens of a span; the grouping key for recall lowering.
pub fn surface_form(tokens: &[&str], span: &Span) -> String {
    tokens[span.start..span.end].join(" ")
}

/// Untags every span of uniformly chosen surface forms until the remaining
/// fraction of spans is at most `target_recall`. Returns the corpus and the
/// achieved recall.
pub fn lower_recall<R: Rng + ?Sized>(
    gold: &Corpus,
    target_recall: f64,
    rng: &mut R,
) -> Result<(Corpus, f64)> {
    check_fraction("target_recall", target_recall)?;
    let mut groups: BTreeMap<String, Vec<(usize, Span)>> = BTreeMap::new();
    for (si, sent) in gold.sentences().iter().enumerate() {
        let surfaces = sent.surfaces();
        for span in sent.spans() {
            groups
                .entry(surface_form(&surfaces, &span))
                .or_default()
                .push((si, span));
        }
    }
    let total: usize = groups.values().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("gold corpus has no spans".into()));
    }

    let mut surfaces: Vec<String> = groups.keys().cloned().collect();
    let mut remaining = total;
    let mut removed: Vec<Vec<Span>> = vec![Vec::new(); gold.len()];
    while remaining as f64 / total as f64 > target_recall {
        let pick = rng.gen_range(0..surfaces.len());
        let surface = surfaces.swap_remove(pick);
        for (si, span) in &groups[&surface] {
            removed[*si].push(span.clone());
            remaining -= 1;
        }
    }

    let corpus = gold.map_sentences(|si, sent| {
        if removed[si].is_empty() {
            return Ok(sent.clone());
        }
        let kept: Vec<Span> = sent
            .spans()
            .into_iter()
            .filter(|s| !removed[si].contains(s))
            .collect();
        sent.with_spans(&kept)
    })?;
    Ok((corpus, remaining as f64 / total as f64))
}

/// Number of noise spans needed to bring `k` true spans to precision `p`.
pub fn noise_span_count(k: usize, target_precision: f64) -> usize {
    (k as f64 * (1.0 - target_precision) / target_precision).round() as usize
}

/// Adds random noise spans over currently-`O` tokens until span precision
/// relative to the input is `target_precision` (within rounding).
pub fn lower_precision<R: Rng + ?Sized>(
    partial: &Corpus,
    target_precision: f64,
    lengths: RangeInclusive<usize>,
    rng: &mut R,
) -> Result<Corpus> {
    check_fraction("target_precision", target_precision)?;
    if lengths.is_empty() || *lengths.start() == 0 {
        return Err(Error::InvalidArgument(format!("bad span length range {lengths:?}")));
    }
    let k = partial.span_count();
    let m = noise_span_count(k, target_precision);
    if m == 0 {
        return Ok(partial.clone());
    }
    let types = partial.label_set();
    if types.is_empty() {
        return Err(Error::InvalidArgument("no entity types to draw noise from".into()));
    }
    let candidates: Vec<usize> = (0..partial.len())
        .filter(|&i| !partial.sentences()[i].is_empty())
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut tags: Vec<Vec<Tag>> = partial
        .sentences()
        .iter()
        .map(|s| s.tags().to_vec())
        .collect();
    let max_attempts = 1000 * m;
    let mut placed = 0;
    let mut attempts = 0;
    while placed < m && attempts < max_attempts {
        attempts += 1;
        let si = *candidates.choose(rng).expect("nonempty");
        let row = &mut tags[si];
        let start = rng.gen_range(0..row.len());
        let len = rng.gen_range(lengths.clone());
        let end = (start + len).min(row.len());
        let etype = types.choose(rng).expect("nonempty");
        if row[start..end].iter().all(Tag::is_outside) {
            row[start] = Tag::Begin(etype.clone());
            for t in &mut row[start + 1..end] {
                *t = Tag::Inside(etype.clone());
            }
            placed += 1;
        }
    }
    if placed < m {
        return Err(Error::PlacementShortfall {
            placed,
            requested: m,
            attempts,
        });
    }
    partial.map_sentences(|si, s| s.with_tags(std::mem::take(&mut tags[si])))
}

/// Lowers recall, then precision; achieved values are measured against `gold`.
pub fn perturb(gold: &Corpus, cfg: &PerturbConfig) -> Result<Perturbed> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (recalled, _) = lower_recall(gold, cfg.target_recall, &mut rng)?;
    let corpus = lower_precision(
        &recalled,
        cfg.target_precision,
        cfg.noise_span_lengths.clone(),
        &mut rng,
    )?;
    let scores = span_f1(gold, &corpus)?;
    Ok(Perturbed {
        corpus,
        precision: scores.precision,
        recall: scores.recall,
    })
}
