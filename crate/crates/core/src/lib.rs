//! Curved contrastive learning toolkit: training-pair generation, an
//! embedding store for `[BEFORE]`/`[AFTER]` encoded utterances, curved-space
//! scoring, and the short-term, long-term and next-utterance planning
//! evaluations built on top of it.

pub mod corpus;
pub mod curvedspace;
pub mod embedstore;
pub mod evalharness;
pub mod io;
pub mod pairgen;
