//! Metadata-controlled patent text generation.
//!
//! Control tags and tagged records ([`tags`]), claim parsing ([`claims`]),
//! byte-level BPE ([`bpe`]), corpus building and window packing
//! ([`corpus`]), a small GPT-style language model ([`model`]), the
//! title/abstract/claim generation flow ([`flow`]) and evaluation ([`eval`]).

pub mod bpe;
pub mod claims;
pub mod corpus;
pub mod eval;
pub mod flow;
pub mod model;
pub mod synthetic;
pub mod tags;

pub use bpe::{BpeError, TokenId, Tokenizer};
pub use claims::{parse_claims, Claim, ClaimKind};
pub use corpus::{PatentDoc, Shard};
pub use eval::{rouge1, EmbeddingProvider, EvalScore};
pub use flow::{FlowResult, GenDirection, GenRequest, Generator, MapRequest, SamplingParams};
pub use model::{Model, ModelConfig, ModelError, ModelParams};
pub use tags::{Direction, MappingKind, MetadataKind, TaggedRecord};
