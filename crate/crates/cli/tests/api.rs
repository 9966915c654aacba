use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use metaflow_cli::server::{router, AppState, Candidates, ErrorBody, Health};
use metaflow_core::eval::{EmbeddingProvider, HashingProvider};
use metaflow_core::flow::{FlowResult, SamplingParams, StageRequest};
use metaflow_core::model::{Model, ModelConfig};
use metaflow_core::synthetic::SyntheticCorpus;
use serde_json::{json, Value};
use tower::ServiceExt;

fn tiny_model(vocab: usize) -> Model {
    Model::init(ModelConfig { vocab_size: vocab, context_len: 32, n_layers: 1, n_heads: 2, d_model: 16, dropout: 0.1, rng_seed: 1 })
        .unwrap()
}

fn defaults() -> SamplingParams {
    SamplingParams { max_new_tokens: Some(12), ..Default::default() }
}

fn state_with(concurrency: usize, timeout: Duration, provider: Option<Box<dyn EmbeddingProvider>>) -> AppState {
    let tok = SyntheticCorpus::default().tokenizer();
    AppState::new(tiny_model(tok.vocab_size()), tok, defaults(), concurrency, timeout, provider).unwrap()
}

fn app() -> Router {
    router(state_with(2, Duration::from_secs(10), None))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Option<String>, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header(header::CONTENT_TYPE, "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let retry = resp.headers().get(header::RETRY_AFTER).map(|v| v.to_str().unwrap().to_string());
    (status, retry, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

#[tokio::test]
async fn health_reports_model_config() {
    let (status, _, body) = call(&app(), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_slice(&body).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.model_config.d_model, 16);
}

#[tokio::test]
async fn generate_is_deterministic_and_echoes_sampling() {
    let app = app();
    let body = json!({"seed": "thermal sensor", "metadata": "title", "direction": "both", "gen_count": 1, "rng_seed": 99, "top_k": 5});
    let (s1, _, b1) = call(&app, "POST", "/api/generate", Some(body.clone())).await;
    let (s2, _, b2) = call(&app, "POST", "/api/generate", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);
    let c: Candidates = serde_json::from_slice(&b1).unwrap();
    assert_eq!(c.candidates.len(), 1);
    assert!(c.candidates[0].contains("thermal sensor"));
    let StageRequest::Generate(req) = c.provenance.request else { panic!("wrong provenance") };
    assert_eq!(req.sampling, SamplingParams { top_k: 5, temperature: 1.0, max_new_tokens: Some(12), rng_seed: 99 });
    assert_eq!(c.provenance.truncated.len(), 1);
}

#[tokio::test]
async fn map_returns_requested_count() {
    let body = json!({"text": "A cooling device with a fan.", "mapping": "abstract2title", "gen_count": 3});
    let (status, _, b) = call(&app(), "POST", "/api/map", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let c: Candidates = serde_json::from_slice(&b).unwrap();
    assert_eq!(c.candidates.len(), 3);
    let StageRequest::Map(req) = c.provenance.request else { panic!("wrong provenance") };
    assert_eq!(req.sampling.max_new_tokens, Some(12));
}

#[tokio::test]
async fn flow_with_two_dependent_claims() {
    let (status, _, b) = call(&app(), "POST", "/api/flow", Some(json!({"seed": "engine", "dep_count": 2, "rng_seed": 4}))).await;
    assert_eq!(status, StatusCode::OK);
    let r: FlowResult = serde_json::from_slice(&b).unwrap();
    assert_eq!(r.dependent_claims.len(), 2);
    assert_eq!(r.provenance.len(), 4);
}

async fn bad_request(body: Value, uri: &str) -> ErrorBody {
    let (status, _, b) = call(&app(), "POST", uri, Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    serde_json::from_slice(&b).unwrap()
}

#[tokio::test]
async fn malformed_requests_name_the_field() {
    let e = bad_request(json!({"text": "x", "mapping": "abstract2nothing", "gen_count": 1}), "/api/map").await;
    assert_eq!(e.field.as_deref(), Some("mapping"));
    assert!(e.error.contains("abstract2nothing"), "{}", e.error);

    let e = bad_request(json!({"metadata": "title", "direction": "both"}), "/api/generate").await;
    assert_eq!(e.field.as_deref(), Some("seed"));
    let e = bad_request(json!({"seed": "a", "metadata": "title", "direction": "sideways"}), "/api/generate").await;
    assert_eq!(e.field.as_deref(), Some("direction"));
    let e = bad_request(json!({"seed": "a", "metadata": "title", "direction": "both", "gen_count": 0}), "/api/generate").await;
    assert_eq!(e.field.as_deref(), Some("gen_count"));
    let e = bad_request(json!({"seed": "  ", "metadata": "title", "direction": "both"}), "/api/generate").await;
    assert_eq!(e.field.as_deref(), Some("seed"));
    let e = bad_request(json!({"seed": "a", "dep_count": 1, "temperature": -1.0}), "/api/flow").await;
    assert_eq!(e.field.as_deref(), Some("temperature"));
    let e = bad_request(json!({"seed": "a", "dep_count": 1, "colour": "red"}), "/api/flow").await;
    assert!(e.error.contains("colour"), "{}", e.error);
    let e = bad_request(json!({"seed": "<|dep|> a", "dep_count": 1}), "/api/flow").await;
    assert!(e.error.contains("<|dep|>"), "{}", e.error);
}

#[tokio::test]
async fn score_omits_similarity_without_provider() {
    let body = json!({"predicted": "Organic light emitting display unit structure",
        "actual": "Organic light emitting display unit structure and organic light emitting display unit circuit"});
    let (status, _, b) = call(&app(), "POST", "/api/score", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert!(v.get("similarity").is_none());
    assert!((v["rouge1_f1"].as_f64().unwrap() - 63.16).abs() < 0.01);

    let with = router(state_with(1, Duration::from_secs(1), Some(Box::new(HashingProvider::default()))));
    let (_, _, b) = call(&with, "POST", "/api/score", Some(body)).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert!(v["similarity"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn saturated_service_answers_503_with_retry_hint() {
    let state = state_with(1, Duration::from_millis(50), None);
    let app = router(state.clone());
    let held = state.permits().acquire_owned().await.unwrap();
    let body = json!({"seed": "a", "dep_count": 0});
    let (status, retry, b) = call(&app, "POST", "/api/flow", Some(body.clone())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(retry.as_deref(), Some("1"));
    let e: ErrorBody = serde_json::from_slice(&b).unwrap();
    assert_eq!(e.retry_after_ms, Some(50));
    drop(held);
    let (status, _, _) = call(&app, "POST", "/api/flow", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_identical_requests_match() {
    let app = router(state_with(2, Duration::from_secs(30), None));
    let body = json!({"seed": "valve", "metadata": "abstract", "direction": "forward", "gen_count": 2, "rng_seed": 5});
    let calls = (0..6).map(|_| {
        let (app, body) = (app.clone(), body.clone());
        async move { call(&app, "POST", "/api/generate", Some(body)).await }
    });
    let results = futures_join(calls.collect()).await;
    for (status, _, b) in &results {
        assert_eq!(*status, StatusCode::OK);
        assert_eq!(b, &results[0].2);
    }
}

async fn futures_join<F: std::future::Future + Send + 'static>(fs: Vec<F>) -> Vec<F::Output>
where
    F::Output: Send,
{
    let handles: Vec<_> = fs.into_iter().map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}

#[test]
fn vocab_mismatch_is_rejected_at_startup() {
    let tok = SyntheticCorpus::default().tokenizer();
    let model = tiny_model(tok.vocab_size() + 3);
    assert!(AppState::new(model, tok, defaults(), 1, Duration::from_secs(1), None).is_err());
}
