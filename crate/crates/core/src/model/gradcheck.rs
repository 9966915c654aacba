use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{loss, loss_and_grad, ModelConfig, ModelError, ModelParams};
use crate::bpe::TokenId;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative error. Gradients smaller than this are
/// compared in absolute terms, since central differences at `FD_STEP` carry
/// roughly 1e-10 of rounding and truncation noise.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub index: usize,
    pub tensor: String,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
    pub max_rel_error: f64,
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients against central differences at `n_samples`
/// uniformly drawn flat parameter indices plus any `extra` indices.
pub fn grad_check(
    config: &ModelConfig,
    params: &ModelParams<f64>,
    batch: &[Vec<TokenId>],
    n_samples: usize,
    extra: &[usize],
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    if config.dropout > 0.0 {
        return Err(ModelError::DropoutActive);
    }
    let (_, grads) = loss_and_grad(config, params, batch, None)?;
    let names: Vec<(String, usize)> = params.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let total = params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = sample_indices(&mut rng, total, n_samples.min(total)).into_vec();
    indices.extend_from_slice(extra);

    let mut probe = params.clone();
    let mut samples = Vec::with_capacity(indices.len());
    for index in indices {
        let orig = probe.get_flat(index);
        probe.set_flat(index, orig + FD_STEP);
        let up = loss(config, &probe, batch)?;
        probe.set_flat(index, orig - FD_STEP);
        let down = loss(config, &probe, batch)?;
        probe.set_flat(index, orig);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grads.get_flat(index);
        samples.push(GradSample { index, tensor: tensor_name(&names, index), analytic, numeric, rel_error: rel_error(analytic, numeric) });
    }
    let max_rel_error = samples.iter().map(|s| s.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { samples, max_rel_error })
}

fn tensor_name(names: &[(String, usize)], mut index: usize) -> String {
    for (n, len) in names {
        if index < *len {
            return n.clone();
        }
        index -= len;
    }
    unreachable!("index checked by get_flat")
}

/// Vocab 50, context 8, one layer, width 16, two heads, no dropout.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { vocab_size: 50, context_len: 8, n_layers: 1, n_heads: 2, d_model: 16, dropout: 0.0, rng_seed: 0 }
}

/// Parameters for the check: the usual init plus N(0, 0.1) noise on every
/// entry, so layer-norm gains and biases are away from their trivial values.
/// The batch is shorter than the context, leaving the last positional rows
/// without gradient.
pub fn tiny_setup(seed: u64) -> (ModelConfig, ModelParams<f64>, Vec<Vec<TokenId>>) {
    let config = tiny_config();
    let mut params = ModelParams::<f64>::init(&config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let noise = Normal::new(0.0, 0.1).unwrap();
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x += noise.sample(&mut rng);
        }
    }
    let batch = (0..3).map(|i| (0..6 - i).map(|_| rng.gen_range(0..config.vocab_size as TokenId)).collect()).collect();
    (config, params, batch)
}
