//! Detection and removal of test-set contamination in tokenized corpora,
//! controlled contamination injection for training streams, and BLEU-based
//! impact analytics.

pub mod analytics;
pub mod corpus_io;
pub mod decontam;
pub mod error;
pub mod injector;
pub mod matcher;
pub mod metrics;
pub mod ngram_index;
pub mod rng;

pub use error::{Error, Result};
