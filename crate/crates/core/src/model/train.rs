use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cst, loss_and_grad, ModelConfig, ModelError, ModelParams, Scalar};
use crate::bpe::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl TrainConfig {
    /// Batch 8, 1M steps, 10k warmup, peak 1e-4.
    pub fn reference() -> Self {
        Self {
            batch_size: 8,
            total_steps: 1_000_000,
            warmup_steps: 10_000,
            peak_lr: 1e-4,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.warmup_steps > self.total_steps {
            return bad(format!("warmup_steps {} > total_steps {}", self.warmup_steps, self.total_steps));
        }
        if !(self.peak_lr > 0.0) || !self.peak_lr.is_finite() {
            return bad(format!("peak_lr {} must be positive", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// `peak * min(1, step / warmup)`; constant once warmup is over.
pub fn learning_rate(config: &TrainConfig, step: u64) -> f64 {
    if config.warmup_steps == 0 || step >= config.warmup_steps {
        config.peak_lr
    } else {
        config.peak_lr * step as f64 / config.warmup_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    /// Number of updates applied so far.
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: &ModelConfig) -> Self {
        Self { m: ModelParams::zeros(config), v: ModelParams::zeros(config), t: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Single-writer training loop state.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    pub step: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: ModelConfig, train: TrainConfig, params: ModelParams<T>) -> Result<Self, ModelError> {
        model.validate()?;
        train.validate()?;
        if !params.matches(&model) {
            return Err(ModelError::ConfigMismatch("parameter shapes do not match model config".into()));
        }
        let adam = AdamState::new(&model);
        let rng = ChaCha8Rng::seed_from_u64(model.rng_seed ^ 0x6472_6f70);
        Ok(Self { model, train, params, adam, step: 0, rng })
    }

    /// One Adam update at the current step, then advances the step counter.
    /// On a non-finite gradient the parameters are left untouched.
    pub fn train_step(&mut self, batch: &[Vec<TokenId>]) -> Result<StepMetrics, ModelError> {
        let step = self.step;
        let lr = learning_rate(&self.train, step);
        let (loss, grads) = loss_and_grad(&self.model, &self.params, batch, Some(&mut self.rng))?;
        let mut sq = 0.0f64;
        for (_, g) in grads.tensors() {
            for x in g {
                let x = x.to_f64().unwrap();
                sq += x * x;
            }
        }
        if !loss.is_finite() || !sq.is_finite() {
            return Err(ModelError::NonFiniteGradient { step });
        }

        self.adam.t += 1;
        let t = self.adam.t as i32;
        let (b1, b2) = (self.train.beta1, self.train.beta2);
        let step_size: T = cst(lr / (1.0 - b1.powi(t)));
        let bc2: T = cst(1.0 / (1.0 - b2.powi(t)));
        let (b1t, b2t): (T, T) = (cst(b1), cst(b2));
        let (one_b1, one_b2): (T, T) = (cst(1.0 - b1), cst(1.0 - b2));
        let eps: T = cst(self.train.eps);
        let params = self.params.tensors_mut();
        let ms = self.adam.m.tensors_mut();
        let vs = self.adam.v.tensors_mut();
        for (((p, m), v), (_, g)) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1t * m[i] + one_b1 * gi;
                v[i] = b2t * v[i] + one_b2 * gi * gi;
                p[i] -= step_size * m[i] / ((v[i] * bc2).sqrt() + eps);
            }
        }
        self.step += 1;
        Ok(StepMetrics { step, loss, lr, grad_norm: sq.sqrt() })
    }
}

/// Draws batches from a fixed example set, reshuffling (seeded) each epoch.
#[derive(Debug, Clone)]
pub struct ExampleSampler {
    examples: Vec<Vec<TokenId>>,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl ExampleSampler {
    pub fn new(examples: Vec<Vec<TokenId>>, seed: u64) -> Result<Self, ModelError> {
        if examples.is_empty() {
            return Err(ModelError::InvalidConfig("no training examples".into()));
        }
        let order = (0..examples.len()).collect();
        let mut s = Self { examples, order, pos: 0, rng: ChaCha8Rng::seed_from_u64(seed) };
        s.order.shuffle(&mut s.rng);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<Vec<TokenId>> {
        (0..batch_size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.examples[self.order[self.pos - 1]].clone()
            })
            .collect()
    }
}
