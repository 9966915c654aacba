//! Metadata-conditioned generation and text-to-text mapping on a trained
//! model, chained into the title -> abstract -> claim -> dependent claims
//! flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, TokenId, Tokenizer};
use crate::model::{sample_until, Model, ModelError, SampleConfig};
use crate::tags::{all_tags, end_tag, mapping_tag, normalize_ws, reverse_words, start_tag, Direction, MappingKind, MetadataKind};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("seed text is empty")]
    EmptySeed,
    #[error("model vocabulary {model} does not match tokenizer vocabulary {tokenizer}")]
    ModelVocabMismatch { model: usize, tokenizer: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] BpeError),
    #[error("stage {0} produced no text")]
    EmptyStage(&'static str),
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<FlowError> },
}

impl FlowError {
    fn at(self, stage: &'static str) -> Self {
        FlowError::Stage { stage, source: Box::new(self) }
    }

    /// The innermost error, below any stage labels.
    pub fn root(&self) -> &FlowError {
        match self {
            FlowError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenDirection {
    Forward,
    Backward,
    Both,
}

impl std::str::FromStr for GenDirection {
    type Err = FlowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            "both" => Ok(Self::Both),
            _ => Err(FlowError::InvalidRequest(format!("unknown direction {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// `None` picks a per-field default.
    #[serde(default)]
    pub max_new_tokens: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_top_k() -> usize {
    40
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { top_k: default_top_k(), temperature: default_temperature(), max_new_tokens: None, rng_seed: 0 }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.top_k == 0 {
            return Err(FlowError::InvalidRequest("top_k must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(FlowError::InvalidRequest(format!("temperature {} must be positive", self.temperature)));
        }
        if self.max_new_tokens == Some(0) {
            return Err(FlowError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }

    /// Fills in the per-field token budget when unset.
    pub fn resolved(mut self, target: MetadataKind) -> Self {
        self.max_new_tokens.get_or_insert(default_max_new_tokens(target));
        self
    }
}

/// 64 for titles, 256 for abstracts, 512 for claims.
pub fn default_max_new_tokens(kind: MetadataKind) -> usize {
    match kind {
        MetadataKind::Title => 64,
        MetadataKind::Abstract => 256,
        MetadataKind::Claim | MetadataKind::DependentClaim => 512,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub input_text: String,
    pub metadata: MetadataKind,
    pub direction: GenDirection,
    pub gen_count: usize,
    #[serde(flatten)]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRequest {
    pub input_text: String,
    pub mapping: MappingKind,
    pub gen_count: usize,
    #[serde(flatten)]
    pub sampling: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub text: String,
    /// No matching end tag: the budget ran out or another tag came first.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageRequest {
    Generate(GenRequest),
    Map(MapRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// The request as executed, with defaults filled in.
    pub request: StageRequest,
    pub truncated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub title: String,
    #[serde(rename = "abstract")]
    pub r#abstract: String,
    pub independent_claim: String,
    pub dependent_claims: Vec<String>,
    pub provenance: Vec<StageRecord>,
}

/// Anything that can answer a mapping request; lets evaluation run against
/// stub models.
pub trait TextMapper {
    fn map_text(&self, req: &MapRequest) -> Result<Vec<Generated>, FlowError>;
}

/// Mixes a base seed with a label and an index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for b in label.bytes().chain(index.to_le_bytes()) {
        h = mix(h ^ b as u64);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn forward_prompt(kind: MetadataKind, text: &str) -> String {
    format!("{} {}", start_tag(kind, Direction::Forward), normalize_ws(text))
}

/// The forward prompt's text, word-reversed, behind the backward start tag.
pub fn backward_prompt(kind: MetadataKind, text: &str) -> String {
    format!("{} {}", start_tag(kind, Direction::Backward), reverse_words(text))
}

pub fn mapping_prompt(mapping: MappingKind, text: &str) -> String {
    format!("{} {} {}", start_tag(mapping.source(), Direction::Forward), normalize_ws(text), mapping_tag(mapping))
}

/// Position and text of the earliest tag in `text`.
fn first_tag(text: &str) -> Option<(usize, &'static str)> {
    all_tags().into_iter().filter_map(|t| text.find(t).map(|i| (i, t))).min_by_key(|&(i, _)| i)
}

/// Start of the earliest tag delimiter, `<|` or `|>`. Cutting here keeps
/// stray tag fragments out of generated text.
fn first_marker(text: &str) -> Option<usize> {
    [text.find("<|"), text.find("|>")].into_iter().flatten().min()
}

/// Tags that may close a forward field: its end tag, or any mapping tag
/// that follows that field in a mapping record.
pub fn forward_terminators(kind: MetadataKind) -> Vec<&'static str> {
    let start = start_tag(kind, Direction::Forward);
    let mut ends = vec![end_tag(kind, Direction::Forward)];
    ends.extend(
        MappingKind::ALL.into_iter().filter(|m| start_tag(m.source(), Direction::Forward) == start).map(mapping_tag),
    );
    ends
}

fn clean_seed(text: &str) -> Result<String, FlowError> {
    let seed = normalize_ws(text);
    if seed.is_empty() {
        return Err(FlowError::EmptySeed);
    }
    if let Some((_, tag)) = first_tag(&seed) {
        return Err(FlowError::InvalidRequest(format!("input text contains tag {tag}")));
    }
    Ok(seed)
}

fn join(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a} {b}"),
    }
}

/// A frozen model paired with its tokenizer.
#[derive(Debug, Clone, Copy)]
pub struct Generator<'a> {
    model: &'a Model,
    tokenizer: &'a Tokenizer,
}

impl<'a> Generator<'a> {
    pub fn new(model: &'a Model, tokenizer: &'a Tokenizer) -> Result<Self, FlowError> {
        if model.config.vocab_size != tokenizer.vocab_size() {
            return Err(FlowError::ModelVocabMismatch { model: model.config.vocab_size, tokenizer: tokenizer.vocab_size() });
        }
        Ok(Self { model, tokenizer })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        self.tokenizer
    }

    /// Samples after `prompt` until a tag delimiter appears and returns the
    /// text before it. The result counts as complete when the first tag is
    /// one of `ends`; `ends[0]` is also matched on token ids.
    pub fn continue_text(&self, prompt: &str, ends: &[&'static str], sampling: &SampleConfig) -> Result<Generated, FlowError> {
        let prompt_ids = self.tokenizer.encode(prompt)?;
        let stop_ids = match ends.first() {
            Some(end) => self.tokenizer.encode(&format!(" {end}"))?,
            None => Vec::new(),
        };
        let tok = self.tokenizer;
        let out = sample_until(&self.model.config, &self.model.params, &prompt_ids, sampling, |ids: &[TokenId]| {
            ids.ends_with(&stop_ids) && !stop_ids.is_empty() || tok.decode(ids).map(|s| s.contains("|>")).unwrap_or(false)
        })?;
        let raw = self.tokenizer.decode(&out.ids)?;
        let (body, truncated) = match first_marker(&raw) {
            Some(i) => (&raw[..i], !ends.iter().any(|e| raw[i..].starts_with(e))),
            None => (raw.as_str(), true),
        };
        Ok(Generated { text: normalize_ws(body), truncated })
    }

    fn sample_config(sampling: &SamplingParams, label: &str, index: u64) -> SampleConfig {
        SampleConfig {
            max_new_tokens: sampling.max_new_tokens.expect("resolved"),
            top_k: sampling.top_k,
            temperature: sampling.temperature,
            rng_seed: derive_seed(sampling.rng_seed, label, index),
        }
    }

    pub fn patent_text_gen(&self, req: &GenRequest) -> Result<Vec<Generated>, FlowError> {
        let seed = clean_seed(&req.input_text)?;
        if req.gen_count == 0 {
            return Err(FlowError::InvalidRequest("gen_count must be at least 1".into()));
        }
        req.sampling.validate()?;
        let sampling = req.sampling.resolved(req.metadata);
        let kind = req.metadata;
        (0..req.gen_count as u64)
            .map(|i| {
                let mut text = seed.clone();
                let mut truncated = false;
                if matches!(req.direction, GenDirection::Backward | GenDirection::Both) {
                    let sc = Self::sample_config(&sampling, "backward", i);
                    let g = self.continue_text(&backward_prompt(kind, &text), &[end_tag(kind, Direction::Backward)], &sc)?;
                    text = join(&reverse_words(&g.text), &text);
                    truncated |= g.truncated;
                }
                if matches!(req.direction, GenDirection::Forward | GenDirection::Both) {
                    let sc = Self::sample_config(&sampling, "forward", i);
                    let g = self.continue_text(&forward_prompt(kind, &text), &forward_terminators(kind), &sc)?;
                    text = join(&text, &g.text);
                    truncated |= g.truncated;
                }
                Ok(Generated { text, truncated })
            })
            .collect()
    }

    pub fn text2text_mapping(&self, req: &MapRequest) -> Result<Vec<Generated>, FlowError> {
        let src = clean_seed(&req.input_text)?;
        if req.gen_count == 0 {
            return Err(FlowError::InvalidRequest("gen_count must be at least 1".into()));
        }
        req.sampling.validate()?;
        let sampling = req.sampling.resolved(req.mapping.target());
        let prompt = mapping_prompt(req.mapping, &src);
        let end = end_tag(req.mapping.target(), Direction::Forward);
        (0..req.gen_count as u64)
            .map(|i| self.continue_text(&prompt, &[end], &Self::sample_config(&sampling, req.mapping.name(), i)))
            .collect()
    }

    /// Title from `seed` in both directions, then title -> abstract ->
    /// independent claim -> `dep_count` dependent claims, each stage feeding
    /// on the previous stage's first candidate.
    pub fn run_flow(&self, seed: &str, dep_count: usize, sampling: SamplingParams) -> Result<FlowResult, FlowError> {
        let stage_sampling = |label: &str| SamplingParams { rng_seed: derive_seed(sampling.rng_seed, label, 0), ..sampling };
        let mut provenance = Vec::new();

        let req = GenRequest {
            input_text: seed.to_string(),
            metadata: MetadataKind::Title,
            direction: GenDirection::Both,
            gen_count: 1,
            sampling: stage_sampling("title").resolved(MetadataKind::Title),
        };
        let out = self.patent_text_gen(&req).map_err(|e| e.at("title"))?;
        let title = out[0].text.clone();
        provenance.push(StageRecord {
            stage: "title".into(),
            truncated: out.iter().map(|g| g.truncated).collect(),
            request: StageRequest::Generate(req),
        });

        let mut map_stage = |stage: &'static str, input: &str, mapping: MappingKind, gen_count: usize| {
            let req = MapRequest {
                input_text: input.to_string(),
                mapping,
                gen_count,
                sampling: stage_sampling(stage).resolved(mapping.target()),
            };
            let out = self.text2text_mapping(&req).map_err(|e| e.at(stage))?;
            provenance.push(StageRecord {
                stage: stage.into(),
                truncated: out.iter().map(|g| g.truncated).collect(),
                request: StageRequest::Map(req),
            });
            Ok::<_, FlowError>(out.into_iter().map(|g| g.text).collect::<Vec<_>>())
        };

        let mut feed = |stage, input: &str, mapping| {
            let text = map_stage(stage, input, mapping, 1)?.remove(0);
            if text.is_empty() {
                return Err(FlowError::EmptyStage(stage));
            }
            Ok(text)
        };
        let abstract_text = feed("abstract", &title, MappingKind::Title2Abstract)?;
        let claim = feed("independent_claim", &abstract_text, MappingKind::Abstract2Claim)?;
        let deps = if dep_count == 0 { Vec::new() } else { map_stage("dependent_claims", &claim, MappingKind::Dep, dep_count)? };

        Ok(FlowResult { title, r#abstract: abstract_text, independent_claim: claim, dependent_claims: deps, provenance })
    }
}

impl TextMapper for Generator<'_> {
    fn map_text(&self, req: &MapRequest) -> Result<Vec<Generated>, FlowError> {
        self.text2text_mapping(req)
    }
}
