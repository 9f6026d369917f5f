//! Synthetic planted-entity corpora.
//!
//! A lexicon of made-up names (PER, ORG, LOC, MISC) is planted into
//! sentences of lowercase filler. Mentions are usually, not always, framed
//! by type-specific trigger words, and capitalized non-entities (sentence
//! starts, weekdays, months) keep capitalization from being a perfect cue.
//! Mention frequencies follow a Zipf-like curve over the lexicon.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Sentence, Span};
use crate::derive_seed;
use crate::error::{Error, Result};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ten", "vor", "bel", "dru", "san", "qui", "zel", "mar", "tos", "len",
    "gar", "fi", "nu", "pe", "sor", "wy", "ob", "ast", "rin", "hul",
];

const FILLER: &[&str] = &[
    "the", "a", "of", "and", "to", "on", "for", "was", "is", "has", "had", "will", "would", "could",
    "not", "also", "but", "more", "than", "after", "before", "during", "over", "under", "while",
    "this", "that", "these", "their", "its", "new", "old", "last", "first", "second", "next",
    "year", "week", "month", "day", "time", "game", "match", "season", "plan", "deal", "talks",
    "report", "market", "price", "rate", "profit", "loss", "vote", "election", "court", "case",
    "police", "team", "club", "league", "cup", "goal", "points", "win", "lead", "group", "company",
    "bank", "share", "stock", "oil", "trade", "growth", "budget", "tax", "law", "policy", "army",
    "troops", "border", "city", "region", "state", "country", "people", "percent", "million",
    "early", "late", "strong", "weak", "high", "low",
];

const CAPITALIZED_FILLER: [&str; 12] = [
    "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Sunday", "January", "March", "April",
    "June", "October", "December",
];

const ORG_SUFFIXES: [&str; 4] = ["Corp", "Group", "United", "Bank"];

struct TypeProfile {
    name: &'static str,
    share: f64,
    left: &'static [&'static str],
    right: &'static [&'static str],
}

const TYPES: [TypeProfile; 4] = [
    TypeProfile {
        name: "PER",
        share: 0.35,
        left: &["said", "told", "met", "with", "by", "coach", "minister", "president"],
        right: &["said", "added", "argued", "told", "was"],
    },
    TypeProfile {
        name: "ORG",
        share: 0.25,
        left: &["at", "joined", "from", "against", "beat"],
        right: &["shares", "announced", "reported", "won", "said"],
    },
    TypeProfile {
        name: "LOC",
        share: 0.25,
        left: &["in", "to", "from", "near", "visited"],
        right: &["officials", "residents", "on", "after"],
    },
    TypeProfile {
        name: "MISC",
        share: 0.15,
        left: &["the", "a", "rival"],
        right: &["festival", "language", "fans", "government", "team"],
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconEntry {
    pub tokens: Vec<String>,
    pub etype: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub lexicon_size: usize,
    /// Probability that a mention is preceded by a trigger word.
    pub left_trigger_rate: f64,
    /// Probability that a mention is followed by a trigger word.
    pub right_trigger_rate: f64,
    /// Inclusive range of filler words after each mention.
    pub filler: (usize, usize),
    /// Probability that a filler word is a capitalized non-entity.
    pub capitalized_rate: f64,
    /// Zipf exponent for name frequencies.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_sentences: 2000,
            test_sentences: 500,
            lexicon_size: 300,
            left_trigger_rate: 0.8,
            right_trigger_rate: 0.5,
            filler: (4, 11),
            capitalized_rate: 0.04,
            zipf: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Corpus,
    pub test: Corpus,
    pub lexicon: Vec<LexiconEntry>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pseudo_word<R: Rng>(rng: &mut R, syllables: usize) -> String {
    let w: String = (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("nonempty"))
        .collect();
    capitalize(&w)
}

/// Builds `size` distinct names with the type mix of [`TYPES`].
pub fn make_lexicon<R: Rng>(size: usize, rng: &mut R) -> Vec<LexiconEntry> {
    let mut seen: HashSet<String> = FILLER.iter().map(|w| capitalize(w)).collect();
    seen.extend(CAPITALIZED_FILLER.iter().map(|w| w.to_string()));
    let mut fresh = |rng: &mut R, syl: usize| loop {
        let w = pseudo_word(rng, syl);
        if seen.insert(w.clone()) {
            return w;
        }
    };
    let mut out = Vec::with_capacity(size);
    let mut counts: Vec<usize> = TYPES.iter().map(|t| (t.share * size as f64).round() as usize).collect();
    let assigned: usize = counts.iter().sum();
    counts[0] = (counts[0] + size).saturating_sub(assigned);
    for (ty, &n) in TYPES.iter().zip(&counts) {
        for _ in 0..n {
            let tokens = match ty.name {
                "PER" => vec![fresh(rng, 2), fresh(rng, 3)],
                "ORG" if rng.gen_bool(0.5) => {
                    vec![fresh(rng, 2), ORG_SUFFIXES.choose(rng).expect("nonempty").to_string()]
                }
                "MISC" => vec![format!("{}ian", fresh(rng, 2))],
                _ => {
                    let syl = rng.gen_range(2..=3);
                    vec![fresh(rng, syl)]
                }
            };
            out.push(LexiconEntry {
                tokens,
                etype: ty.name.to_string(),
            });
        }
    }
    out.shuffle(rng);
    out
}

fn filler_word<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> String {
    if rng.gen_bool(cfg.capitalized_rate) {
        CAPITALIZED_FILLER.choose(rng).expect("nonempty").to_string()
    } else {
        FILLER.choose(rng).expect("nonempty").to_string()
    }
}

fn sentence<R: Rng>(
    cfg: &SynthConfig,
    lexicon: &[LexiconEntry],
    pick: &WeightedIndex<f64>,
    rng: &mut R,
) -> Result<Sentence> {
    let mentions = *[0usize, 1, 1, 1, 2, 2, 2, 3].choose(rng).expect("nonempty");
    let mut words: Vec<String> = vec![capitalize(&filler_word(cfg, rng))];
    for _ in 0..rng.gen_range(1..=3) {
        words.push(filler_word(cfg, rng));
    }
    let mut spans = Vec::new();
    for _ in 0..mentions {
        let entry = &lexicon[pick.sample(rng)];
        let profile = TYPES.iter().find(|t| t.name == entry.etype).expect("known type");
        if rng.gen_bool(cfg.left_trigger_rate) {
            words.push(profile.left.choose(rng).expect("nonempty").to_string());
        } else {
            words.push(filler_word(cfg, rng));
        }
        let start = words.len();
        words.extend(entry.tokens.iter().cloned());
        spans.push(Span::new(start, words.len(), entry.etype.clone()));
        if rng.gen_bool(cfg.right_trigger_rate) {
            words.push(profile.right.choose(rng).expect("nonempty").to_string());
        }
        for _ in 0..rng.gen_range(cfg.filler.0..=cfg.filler.1) {
            words.push(filler_word(cfg, rng));
        }
    }
    words.push(".".to_string());
    Sentence::untagged(words)?.with_spans(&spans)
}

/// Generates a training and a test corpus over one shared lexicon.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.lexicon_size == 0 || cfg.train_sentences == 0 {
        return Err(Error::InvalidArgument("lexicon and training set must be nonempty".into()));
    }
    if cfg.filler.0 > cfg.filler.1 {
        return Err(Error::InvalidArgument("filler range is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let lexicon = make_lexicon(cfg.lexicon_size, &mut rng);
    let freqs: Vec<f64> = (0..lexicon.len()).map(|r| 1.0 / (r as f64 + 1.0).powf(cfg.zipf)).collect();
    let pick = WeightedIndex::new(&freqs).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let build = |n: usize, stream: u64| -> Result<Corpus> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream));
        let sentences = (0..n)
            .map(|_| sentence(cfg, &lexicon, &pick, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus::new(sentences))
    };
    let train = build(cfg.train_sentences, 1)?;
    let test = build(cfg.test_sentences, 2)?;
    Ok(SynthCorpus { train, test, lexicon })
}
