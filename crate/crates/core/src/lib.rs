//! Reflective decoding: text generation from a product of experts, each a
//! unidirectional language model conditioned on one sampled context.
//!
//! A forward and a backward model are enough. Contexts are sampled on both
//! sides of a source text, weighted to reconstruct it, and then used to
//! decode paraphrases or to fill in text between two observations.

pub mod ensemble;
pub mod error;
pub mod lm;
pub mod logspace;
pub mod metrics;
pub mod ngram;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod vocab;
pub mod weights;

pub use ensemble::{ContextEnsemble, ReflectiveSampler, Side};
pub use error::{Error, Result};
pub use lm::{sequence_logprob, DelegateLm, Direction, LanguageModel};
pub use ngram::{load_lm, save_lm, train_pair, train_reference_lm, NgramConfig, NgramLm, Smoothing};
pub use pipeline::{abductive_infill, paraphrase, LmPair, PipelineConfig, TaskPreset};
pub use vocab::{TokenId, TokenSeq, Tokenizer, Vocabulary};
