//! Self-supervised claim identification: a multihead-attention network
//! that learns to regenerate an article's headline from its sentences and,
//! as a by-product, ranks sentences by headline relevance.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod extractor;
pub mod gradcheck;
pub mod model;
pub mod synth;
pub mod trainer;
