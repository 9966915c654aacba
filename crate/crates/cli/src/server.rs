//! HTTP service: generation, mapping, the full flow and scoring over JSON.
//!
//! The model is loaded once and shared read-only. Generation requests wait
//! in a FIFO queue for one of `max_concurrency` slots and run on the blocking
//! pool; a request that waits longer than the configured timeout gets 503.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use metaflow_core::eval::{score, EmbeddingProvider, EvalScore, HttpProvider};
use metaflow_core::flow::{
    FlowError, FlowResult, GenDirection, GenRequest, Generator, MapRequest, SamplingParams, StageRecord, StageRequest,
};
use metaflow_core::model::{Model, ModelConfig};
use metaflow_core::tags::{MappingKind, MetadataKind};
use metaflow_core::Tokenizer;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::ServiceConfig;
use crate::error::{CliResult, Classify};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Path of the offending request field, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_ms: Option<u64>,
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest { message: String, field: Option<String> },
    Unavailable { retry_after: Duration },
    /// The model produced nothing usable; no partial output is returned.
    Generation(String),
    Internal,
}

impl ApiError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError::BadRequest { message: message.into(), field: Some(field.into()) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest { message, field } => {
                (StatusCode::BAD_REQUEST, Json(ErrorBody { error: message, field, retry_after_ms: None })).into_response()
            }
            ApiError::Unavailable { retry_after } => {
                let secs = retry_after.as_secs_f64().ceil().max(1.0) as u64;
                let body = ErrorBody {
                    error: "all generation slots are busy; retry later".into(),
                    field: None,
                    retry_after_ms: Some(retry_after.as_millis() as u64),
                };
                (StatusCode::SERVICE_UNAVAILABLE, [(header::RETRY_AFTER, secs.to_string())], Json(body)).into_response()
            }
            ApiError::Generation(message) => {
                let body = ErrorBody { error: message, field: None, retry_after_ms: None };
                (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
            }
            ApiError::Internal => {
                let body = ErrorBody { error: "internal error".into(), field: None, retry_after_ms: None };
                (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
            }
        }
    }
}

fn from_flow_error(e: FlowError) -> ApiError {
    match e.root() {
        FlowError::EmptySeed => ApiError::field("seed", "seed text is empty"),
        FlowError::InvalidRequest(m) => ApiError::BadRequest { message: m.clone(), field: None },
        FlowError::EmptyStage(_) => ApiError::Generation(e.root().to_string()),
        _ => {
            tracing::error!(error = %e, "generation failed");
            ApiError::Internal
        }
    }
}

/// JSON body with the failing field path on error.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        // A missing field is reported against its parent; name the field itself.
        let msg = inner.to_string();
        let field = match (path.as_str(), missing_field(&msg)) {
            (".", Some(f)) => Some(f),
            (p, Some(f)) => Some(format!("{p}.{f}")),
            (".", None) => None,
            (p, None) => Some(p.to_string()),
        };
        ApiError::BadRequest { message: msg, field }
    })
}

fn missing_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("missing field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

/// Per-request sampling fields; unset ones fall back to the service defaults.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverrides {
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub rng_seed: Option<u64>,
}

impl SamplingOverrides {
    fn apply(self, d: SamplingParams) -> Result<SamplingParams, ApiError> {
        let p = SamplingParams {
            top_k: self.top_k.unwrap_or(d.top_k),
            temperature: self.temperature.unwrap_or(d.temperature),
            max_new_tokens: self.max_new_tokens.or(d.max_new_tokens),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
        };
        if p.top_k == 0 {
            return Err(ApiError::field("top_k", "top_k must be at least 1"));
        }
        if !(p.temperature > 0.0 && p.temperature.is_finite()) {
            return Err(ApiError::field("temperature", "temperature must be positive and finite"));
        }
        if p.max_new_tokens == Some(0) {
            return Err(ApiError::field("max_new_tokens", "max_new_tokens must be at least 1"));
        }
        Ok(p)
    }
}

fn default_gen_count() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBody {
    pub seed: String,
    pub metadata: MetadataKind,
    pub direction: GenDirection,
    #[serde(default = "default_gen_count")]
    pub gen_count: usize,
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBody {
    pub text: String,
    pub mapping: MappingKind,
    #[serde(default = "default_gen_count")]
    pub gen_count: usize,
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBody {
    pub seed: String,
    pub dep_count: usize,
    pub top_k: Option<usize>,
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBody {
    pub predicted: String,
    pub actual: String,
}

macro_rules! overrides {
    ($b:expr) => {
        SamplingOverrides { top_k: $b.top_k, temperature: $b.temperature, max_new_tokens: $b.max_new_tokens, rng_seed: $b.rng_seed }
    };
}

/// Response to `/api/generate` and `/api/map`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidates {
    pub candidates: Vec<String>,
    /// The request as executed, with every sampling parameter filled in.
    pub provenance: StageRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_config: ModelConfig,
}

fn check_count(n: usize) -> Result<(), ApiError> {
    if n == 0 {
        return Err(ApiError::field("gen_count", "gen_count must be at least 1"));
    }
    Ok(())
}

fn check_text(field: &str, text: &str) -> Result<(), ApiError> {
    if text.trim().is_empty() {
        return Err(ApiError::field(field, format!("{field} is empty")));
    }
    Ok(())
}

struct Shared {
    model: Model,
    tokenizer: Tokenizer,
    defaults: SamplingParams,
    permits: Arc<Semaphore>,
    timeout: Duration,
    provider: Option<Box<dyn EmbeddingProvider>>,
}

/// Everything a handler needs; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Fails if the checkpoint and tokenizer disagree on vocabulary size.
    pub fn new(
        model: Model,
        tokenizer: Tokenizer,
        defaults: SamplingParams,
        max_concurrency: usize,
        timeout: Duration,
        provider: Option<Box<dyn EmbeddingProvider>>,
    ) -> Result<Self, FlowError> {
        Generator::new(&model, &tokenizer)?;
        defaults.validate()?;
        if max_concurrency == 0 {
            return Err(FlowError::InvalidRequest("max_concurrency must be at least 1".into()));
        }
        Ok(Self(Arc::new(Shared {
            model,
            tokenizer,
            defaults,
            permits: Arc::new(Semaphore::new(max_concurrency)),
            timeout,
            provider,
        })))
    }

    pub fn from_config(cfg: &ServiceConfig) -> CliResult<Self> {
        let model = Model::load(&cfg.checkpoint).data_ctx(format!("loading {}", cfg.checkpoint.display()))?;
        let tokenizer = Tokenizer::load(&cfg.vocab, &cfg.merges).data_ctx("loading tokenizer")?;
        let provider = match &cfg.embedding_url {
            Some(url) => Some(Box::new(HttpProvider::new(url.clone(), cfg.request_timeout()).data_ctx("embedding_url")?)
                as Box<dyn EmbeddingProvider>),
            None => None,
        };
        Self::new(model, tokenizer, cfg.sampling, cfg.max_concurrency, cfg.request_timeout(), provider)
            .data_ctx("checkpoint and tokenizer")
    }

    /// The admission semaphore; holding permits from outside blocks requests.
    pub fn permits(&self) -> Arc<Semaphore> {
        self.0.permits.clone()
    }

    async fn admit(&self) -> Result<tokio::sync::OwnedSemaphorePermit, ApiError> {
        match tokio::time::timeout(self.0.timeout, self.0.permits.clone().acquire_owned()).await {
            Ok(Ok(p)) => Ok(p),
            Ok(Err(_)) => Err(ApiError::Internal),
            Err(_) => Err(ApiError::Unavailable { retry_after: self.0.timeout }),
        }
    }

    /// Runs `f` on the blocking pool once a slot is free.
    async fn generate<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Generator<'_>) -> Result<T, FlowError> + Send + 'static,
    {
        let permit = self.admit().await?;
        let shared = self.0.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let _permit = permit;
            let g = Generator::new(&shared.model, &shared.tokenizer)?;
            f(&g)
        })
        .await;
        match joined {
            Ok(r) => r.map_err(from_flow_error),
            Err(e) => {
                tracing::error!(error = %e, "generation task failed");
                Err(ApiError::Internal)
            }
        }
    }
}

async fn generate(State(s): State<AppState>, body: Bytes) -> Result<Json<Candidates>, ApiError> {
    let b: GenerateBody = parse_body(&body)?;
    check_text("seed", &b.seed)?;
    check_count(b.gen_count)?;
    let sampling = overrides!(b).apply(s.0.defaults)?.resolved(b.metadata);
    let req = GenRequest { input_text: b.seed, metadata: b.metadata, direction: b.direction, gen_count: b.gen_count, sampling };
    let out = {
        let req = req.clone();
        s.generate(move |g| g.patent_text_gen(&req)).await?
    };
    Ok(Json(Candidates {
        provenance: StageRecord {
            stage: "generate".into(),
            truncated: out.iter().map(|g| g.truncated).collect(),
            request: StageRequest::Generate(req),
        },
        candidates: out.into_iter().map(|g| g.text).collect(),
    }))
}

async fn map(State(s): State<AppState>, body: Bytes) -> Result<Json<Candidates>, ApiError> {
    let b: MapBody = parse_body(&body)?;
    check_text("text", &b.text)?;
    check_count(b.gen_count)?;
    let sampling = overrides!(b).apply(s.0.defaults)?.resolved(b.mapping.target());
    let req = MapRequest { input_text: b.text, mapping: b.mapping, gen_count: b.gen_count, sampling };
    let out = {
        let req = req.clone();
        s.generate(move |g| g.text2text_mapping(&req)).await?
    };
    Ok(Json(Candidates {
        provenance: StageRecord {
            stage: "map".into(),
            truncated: out.iter().map(|g| g.truncated).collect(),
            request: StageRequest::Map(req),
        },
        candidates: out.into_iter().map(|g| g.text).collect(),
    }))
}

async fn flow(State(s): State<AppState>, body: Bytes) -> Result<Json<FlowResult>, ApiError> {
    let b: FlowBody = parse_body(&body)?;
    check_text("seed", &b.seed)?;
    let sampling = overrides!(b).apply(s.0.defaults)?;
    let (seed, deps) = (b.seed, b.dep_count);
    Ok(Json(s.generate(move |g| g.run_flow(&seed, deps, sampling)).await?))
}

async fn score_handler(State(s): State<AppState>, body: Bytes) -> Result<Json<EvalScore>, ApiError> {
    let b: ScoreBody = parse_body(&body)?;
    let shared = s.0.clone();
    let joined = tokio::task::spawn_blocking(move || score(&b.predicted, &b.actual, shared.provider.as_deref())).await;
    match joined {
        Ok(Ok(sc)) => Ok(Json(sc)),
        Ok(Err(e)) => {
            tracing::error!(error = %e, "scoring failed");
            Err(ApiError::Internal)
        }
        Err(_) => Err(ApiError::Internal),
    }
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    Json(Health { status: "ok".into(), model_config: s.0.model.config.clone() })
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/generate", post(generate))
        .route("/api/map", post(map))
        .route("/api/flow", post(flow))
        .route("/api/score", post(score_handler))
        .route("/api/health", get(health))
        .with_state(state)
}

/// Serves until ctrl-c. `on_bound` sees the actual address (useful with port 0).
pub async fn serve(state: AppState, listen: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
