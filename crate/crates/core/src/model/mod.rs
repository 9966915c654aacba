//! A small GPT-2 style decoder-only transformer with hand-written backprop.
//!
//! Pre-norm blocks (layer norm, causal multi-head attention, residual; layer
//! norm, 4x GELU MLP, residual), learned positional embeddings, a final layer
//! norm, and an output head tied to the token embedding. Parameters are
//! generic over `f32`/`f64`; training and checkpoints use `f32`, the gradient
//! check runs in `f64`.

mod checkpoint;
mod forward;
mod gradcheck;
mod params;
mod sample;
mod train;

use std::fmt;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{forward, forward_last, loss, loss_and_grad, AttentionTrace, Forward};
pub use gradcheck::{grad_check, rel_error, tiny_config, tiny_setup, GradCheckReport, GradSample, FD_STEP, REL_FLOOR};
pub use params::{LayerParams, ModelParams};
pub use sample::{sample, sample_next, sample_until, top_k_indices, SampleConfig, SampleOutcome};
pub use train::{learning_rate, AdamState, ExampleSampler, StepMetrics, TrainConfig, Trainer};

use crate::bpe::TokenId;

pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + fmt::Debug
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn cst<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite constant")
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of {len} tokens exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: TokenId, vocab: usize },
    #[error("sequence needs at least 2 tokens for a next-token loss")]
    SequenceTooShort,
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("gradient check requires dropout to be disabled")]
    DropoutActive,
    #[error("checkpoint {0}")]
    File(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_len: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ModelConfig {
    /// GPT-2 small: 50,257 tokens, 1,024 context, 12 layers, 12 heads, 768 wide.
    pub fn gpt2_small() -> Self {
        Self { vocab_size: 50_257, context_len: 1024, n_layers: 12, n_heads: 12, d_model: 768, dropout: 0.1, rng_seed: 0 }
    }

    /// GPT-2 medium: 24 layers, 16 heads, 1,024 wide.
    pub fn gpt2_medium() -> Self {
        Self { n_layers: 24, n_heads: 16, d_model: 1024, ..Self::gpt2_small() }
    }

    pub fn desk(vocab_size: usize) -> Self {
        Self { vocab_size, context_len: 128, n_layers: 2, n_heads: 4, d_model: 64, dropout: 0.1, rng_seed: 0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 {
            return bad("vocab_size, n_layers, n_heads and d_model must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.context_len < 2 {
            return bad(format!("context_len {} < 2", self.context_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn n_params(&self) -> usize {
        let d = self.d_model;
        let per_layer = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d);
        self.vocab_size * d + self.context_len * d + self.n_layers * per_layer + 2 * d
    }
}

/// Frozen `f32` weights plus their shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

impl Model {
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config, config.rng_seed);
        Ok(Self { config, params })
    }

    pub fn logits(&self, ids: &[TokenId]) -> Result<ndarray::Array2<f32>, ModelError> {
        forward(&self.config, &self.params, ids)
    }

    pub fn loss(&self, batch: &[Vec<TokenId>]) -> Result<f64, ModelError> {
        loss(&self.config, &self.params, batch)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ModelError> {
        save_checkpoint(path, &self.config, &self.params)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        let (config, params) = load_checkpoint(path)?;
        Ok(Self { config, params })
    }
}
