use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{forward_last, ModelConfig, ModelError, ModelParams, Scalar};
use crate::bpe::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub max_new_tokens: usize,
    pub top_k: usize,
    pub temperature: f64,
    pub rng_seed: u64,
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.top_k == 0 {
            return Err(ModelError::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(ModelError::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutcome {
    /// Newly generated ids, including any stop sequence.
    pub ids: Vec<TokenId>,
    /// True when the stop condition fired before `max_new_tokens`.
    pub stopped: bool,
}

/// Indices of the `k` largest values, largest first; equal values keep the
/// lower index first.
pub fn top_k_indices<T: Scalar>(logits: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    let cmp = |&a: &usize, &b: &usize| logits[b].partial_cmp(&logits[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b));
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Draws one id from the temperature-scaled softmax over the top `k` logits.
pub fn sample_next<T: Scalar>(logits: &[T], top_k: usize, temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    let top = top_k_indices(logits, top_k);
    if top.len() == 1 {
        return top[0] as TokenId;
    }
    let max = logits[top[0]].to_f64().unwrap();
    let weights: Vec<f64> = top.iter().map(|&i| ((logits[i].to_f64().unwrap() - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, w) in top.iter().zip(&weights) {
        if u < *w {
            return i as TokenId;
        }
        u -= w;
    }
    *top.last().unwrap() as TokenId
}

/// Samples until the generated ids end with `stop_ids` or the budget runs out.
pub fn sample<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    prompt: &[TokenId],
    sampling: &SampleConfig,
    stop_ids: Option<&[TokenId]>,
) -> Result<SampleOutcome, ModelError> {
    sample_until(config, params, prompt, sampling, |generated| match stop_ids {
        Some(stop) if !stop.is_empty() => generated.ends_with(stop),
        _ => false,
    })
}

/// Samples until `stop(generated)` returns true or the budget runs out.
/// Prompts longer than `context_len - 1` keep only their rightmost ids; the
/// model always sees the last `context_len` ids of the running sequence.
pub fn sample_until<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    prompt: &[TokenId],
    sampling: &SampleConfig,
    mut stop: impl FnMut(&[TokenId]) -> bool,
) -> Result<SampleOutcome, ModelError> {
    sampling.validate()?;
    if prompt.is_empty() {
        return Err(ModelError::SequenceTooShort);
    }
    let keep = prompt.len().min(config.context_len - 1);
    let mut seq: Vec<TokenId> = prompt[prompt.len() - keep..].to_vec();
    let start = seq.len();
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.rng_seed);
    for _ in 0..sampling.max_new_tokens {
        let window = &seq[seq.len().saturating_sub(config.context_len)..];
        let logits = forward_last(config, params, window)?;
        let id = sample_next(logits.as_slice().unwrap(), sampling.top_k, sampling.temperature, &mut rng);
        debug_assert!(top_k_indices(logits.as_slice().unwrap(), sampling.top_k).contains(&(id as usize)));
        seq.push(id);
        if stop(&seq[start..]) {
            return Ok(SampleOutcome { ids: seq.split_off(start), stopped: true });
        }
    }
    Ok(SampleOutcome { ids: seq.split_off(start), stopped: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_order_and_ties() {
        let l = [0.5f32, 2.0, 2.0, -1.0, 3.0];
        assert_eq!(top_k_indices(&l, 1), vec![4]);
        assert_eq!(top_k_indices(&l, 3), vec![4, 1, 2]);
        assert_eq!(top_k_indices(&l, 2), vec![4, 1]);
        assert_eq!(top_k_indices(&l, 10), vec![4, 1, 2, 0, 3]);
    }

    #[test]
    fn support_is_restricted() {
        let mut l = vec![0.0f64; 12];
        l[7] = 5.0;
        l[3] = 4.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = [0usize; 12];
        for _ in 0..2000 {
            seen[sample_next(&l, 2, 1.0, &mut rng) as usize] += 1;
        }
        assert_eq!(seen[3] + seen[7], 2000);
        assert!(seen[3] > 0 && seen[7] > seen[3]);
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = ModelConfig { vocab_size: 17, context_len: 6, n_layers: 1, n_heads: 2, d_model: 8, dropout: 0.1, rng_seed: 0 };
        let p = ModelParams::<f32>::init(&cfg, 4);
        let s = SampleConfig { max_new_tokens: 12, top_k: 5, temperature: 1.0, rng_seed: 9 };
        let a = sample(&cfg, &p, &[1, 2, 3, 4, 5, 6, 7], &s, None).unwrap();
        assert_eq!(a.ids.len(), 12);
        assert!(!a.stopped);
        assert_eq!(a, sample(&cfg, &p, &[1, 2, 3, 4, 5, 6, 7], &s, None).unwrap());
        let b = sample(&cfg, &p, &[1, 2, 3, 4, 5, 6, 7], &SampleConfig { rng_seed: 10, ..s }, None).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn stops_on_suffix() {
        let cfg = ModelConfig { vocab_size: 5, context_len: 8, n_layers: 1, n_heads: 1, d_model: 4, dropout: 0.0, rng_seed: 0 };
        let p = ModelParams::<f32>::init(&cfg, 1);
        let s = SampleConfig { max_new_tokens: 50, top_k: 1, temperature: 1.0, rng_seed: 0 };
        let free = sample(&cfg, &p, &[0], &s, None).unwrap();
        let stop = [free.ids[0], free.ids[1]];
        let out = sample(&cfg, &p, &[0], &s, Some(&stop)).unwrap();
        assert!(out.stopped);
        assert_eq!(out.ids, stop.to_vec());
    }

    #[test]
    fn rejects_bad_parameters() {
        let cfg = ModelConfig { vocab_size: 5, context_len: 8, n_layers: 1, n_heads: 1, d_model: 4, dropout: 0.0, rng_seed: 0 };
        let p = ModelParams::<f32>::init(&cfg, 1);
        let s = SampleConfig { max_new_tokens: 5, top_k: 0, temperature: 1.0, rng_seed: 0 };
        assert!(sample(&cfg, &p, &[0], &s, None).is_err());
        let s = SampleConfig { top_k: 1, temperature: 0.0, ..s };
        assert!(sample(&cfg, &p, &[0], &s, None).is_err());
    }
}
