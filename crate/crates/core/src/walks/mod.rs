//! Random walk sampling, anonymization and the training material derived from
//! walk corpora.

mod anon;
mod corpus;
mod training;

pub use anon::{
    anonymize, anonymize_into, enumerate_patterns, is_valid_pattern, receptive_radius,
    AnonPattern, PatternRegistry, MAX_ENUMERATION_LENGTH,
};
pub use corpus::{sample_walks, WalkCorpus, WalkParams};
pub use training::{
    contrast_sets, context_pairs, sample_walk_triples, PairSampler, TripleSampler, WalkTriple,
};
