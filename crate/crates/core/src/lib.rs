//! Hateful/offensive tweet classification from three textual features:
//! contextual token embeddings, a character one-hot sequence and a multi-hot
//! encoding of hate-lexicon terms.

pub mod features;
pub mod fsutil;
pub mod lexicon;
pub mod nn;
pub mod preprocess;
pub mod label;
pub mod model;
pub mod checkpoint;
pub mod evalkit;
pub mod pipeline;
