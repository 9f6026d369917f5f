//! Named-entity recognition from partially annotated corpora.
//!
//! Unannotated tokens in a partial corpus are a mix of true non-entities
//! and missed entities. This crate learns per-token instance weights that
//! down-weight the likely missed entities, then trains a weighted tagger
//! (averaged perceptron or a CRF with a marginal likelihood over soft
//! labels) on the partial data.

pub mod cbl;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod features;
pub mod model;
pub mod perceptron;
pub mod perturb;
pub mod pipeline;
pub mod synth;
pub mod weighting;

pub use error::{Error, Result};

/// Mixes a base seed with a stream id (splitmix64), so every stage and
/// round draws from its own generator.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
