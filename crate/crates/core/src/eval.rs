//! ROUGE-1, embedding similarity and batch evaluation of mappings.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{derive_seed, MapRequest, SamplingParams, TextMapper};
use crate::tags::MappingKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Percentages in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub rouge1_p: f64,
    pub rouge1_r: f64,
    pub rouge1_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Lowercased alphanumeric runs.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()).collect()
}

/// Unigram overlap with clipped counts. No stemming, no stopword removal.
pub fn rouge1(predicted: &str, actual: &str) -> RougeScore {
    let pred = rouge_tokens(predicted);
    let act = rouge_tokens(actual);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &act {
        *counts.entry(w).or_default() += 1;
    }
    let mut overlap = 0usize;
    for w in &pred {
        if let Some(c) = counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let p = ratio(overlap, pred.len());
    let r = ratio(overlap, act.len());
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    RougeScore { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * f1 }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError>;
}

/// Deterministic bag-of-words vectors: each ROUGE token is hashed to a
/// signed slot. For tests and offline runs only.
#[derive(Debug, Clone, Copy)]
pub struct HashingProvider {
    pub dim: usize,
}

impl Default for HashingProvider {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl EmbeddingProvider for HashingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        let mut v = vec![0.0; self.dim];
        for w in rouge_tokens(text) {
            // FNV-1a
            let h = w.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        Ok(v)
    }
}

/// Client for an external encoder: POST `{"text": ...}`, expects
/// `{"vector": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    url: String,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, EvalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EvalError::ProviderUnavailable(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl EmbeddingProvider for HttpProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        let unavailable = |e: reqwest::Error| EvalError::ProviderUnavailable(e.to_string());
        let resp = self.client.post(&self.url).json(&EmbedRequest { text }).send().map_err(unavailable)?;
        let resp = resp.error_for_status().map_err(unavailable)?;
        let body: EmbedResponse = resp.json().map_err(unavailable)?;
        if body.vector.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::ProviderUnavailable("non-finite vector component".into()));
        }
        Ok(body.vector)
    }
}

/// Cosine similarity times 100.
pub fn similarity(provider: &dyn EmbeddingProvider, a: &str, b: &str) -> Result<f64, EvalError> {
    let u = provider.embed(a)?;
    let v = provider.embed(b)?;
    if u.len() != v.len() {
        return Err(EvalError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((100.0 * dot / (nu * nv)).clamp(-100.0, 100.0))
}

pub fn score(predicted: &str, actual: &str, provider: Option<&dyn EmbeddingProvider>) -> Result<EvalScore, EvalError> {
    let r = rouge1(predicted, actual);
    let similarity = provider.map(|p| similarity(p, predicted, actual)).transpose()?;
    Ok(EvalScore { rouge1_p: r.precision, rouge1_r: r.recall, rouge1_f1: r.f1, similarity })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub src: String,
    pub tgt: String,
}

pub fn read_pairs_jsonl(reader: impl BufRead) -> Result<Vec<Pair>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Jsonl { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

/// One line of the per-record results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub src: String,
    pub tgt: String,
    pub predicted: Option<String>,
    pub rouge1_p: Option<f64>,
    pub rouge1_r: Option<f64>,
    pub rouge1_f1: Option<f64>,
    pub similarity: Option<f64>,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Means over scored records; `None` when nothing was scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mapping: MappingKind,
    pub n: usize,
    pub scored: usize,
    pub failed: usize,
    pub rouge1_p: Option<f64>,
    pub rouge1_r: Option<f64>,
    pub rouge1_f1: Option<f64>,
    pub similarity: Option<f64>,
}

/// Maps the first `n` sources, scores each prediction against its target,
/// and averages. Records whose generation or scoring fails are kept, marked
/// failed, and left out of the means.
pub fn batch_eval(
    mapper: &dyn TextMapper,
    pairs: &[Pair],
    mapping: MappingKind,
    n: usize,
    provider: Option<&dyn EmbeddingProvider>,
    sampling: SamplingParams,
) -> Result<(EvalSummary, Vec<EvalRecord>), EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidRequest("n must be at least 1".into()));
    }
    if n > pairs.len() {
        return Err(EvalError::InvalidRequest(format!("n = {n} exceeds {} pairs", pairs.len())));
    }
    let mut records = Vec::with_capacity(n);
    for (index, pair) in pairs[..n].iter().enumerate() {
        let req = MapRequest {
            input_text: pair.src.clone(),
            mapping,
            gen_count: 1,
            sampling: SamplingParams { rng_seed: derive_seed(sampling.rng_seed, "eval", index as u64), ..sampling },
        };
        let mut rec = EvalRecord {
            index,
            src: pair.src.clone(),
            tgt: pair.tgt.clone(),
            predicted: None,
            rouge1_p: None,
            rouge1_r: None,
            rouge1_f1: None,
            similarity: None,
            failed: false,
            error: None,
        };
        match mapper.map_text(&req) {
            Ok(mut out) if !out.is_empty() => {
                let predicted = out.swap_remove(0).text;
                match score(&predicted, &pair.tgt, provider) {
                    Ok(s) => {
                        rec.rouge1_p = Some(s.rouge1_p);
                        rec.rouge1_r = Some(s.rouge1_r);
                        rec.rouge1_f1 = Some(s.rouge1_f1);
                        rec.similarity = s.similarity;
                    }
                    Err(e) => {
                        rec.failed = true;
                        rec.error = Some(e.to_string());
                    }
                }
                rec.predicted = Some(predicted);
            }
            Ok(_) => {
                rec.failed = true;
                rec.error = Some("no candidate returned".into());
            }
            Err(e) => {
                rec.failed = true;
                rec.error = Some(e.to_string());
            }
        }
        records.push(rec);
    }
    Ok((summarize(mapping, &records), records))
}

/// Sequential sums in index order, divided by the number of scored records.
pub fn summarize(mapping: MappingKind, records: &[EvalRecord]) -> EvalSummary {
    let ok: Vec<&EvalRecord> = records.iter().filter(|r| !r.failed).collect();
    let mean = |f: &dyn Fn(&EvalRecord) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        if vals.is_empty() || vals.len() != ok.len() {
            return None;
        }
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    EvalSummary {
        mapping,
        n: records.len(),
        scored: ok.len(),
        failed: records.len() - ok.len(),
        rouge1_p: mean(&|r| r.rouge1_p),
        rouge1_r: mean(&|r| r.rouge1_r),
        rouge1_f1: mean(&|r| r.rouge1_f1),
        similarity: mean(&|r| r.similarity),
    }
}

pub fn write_records_jsonl(mut w: impl Write, records: &[EvalRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
