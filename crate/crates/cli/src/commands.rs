//! Command-line surface.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use metaflow_core::corpus::{build_records, corpus_stats, pack, read_docs_jsonl, read_shards, write_shards, PackConfig};
use metaflow_core::eval::{batch_eval, read_pairs_jsonl, write_records_jsonl, EmbeddingProvider, EvalError, HttpProvider};
use metaflow_core::flow::{FlowError, GenDirection, GenRequest, Generator, SamplingParams};
use metaflow_core::model::{ExampleSampler, Model, ModelParams, Trainer};
use metaflow_core::synthetic::SyntheticCorpus;
use metaflow_core::tags::{parse_record, MappingKind, MetadataKind};
use metaflow_core::{TokenId, Tokenizer};

use crate::config::{ServiceConfig, TrainFile};
use crate::error::{CliError, CliResult, Classify};
use crate::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "metaflow", version, about = "Metadata-controlled patent text generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus preparation.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Train a model on packed shards.
    Train(TrainArgs),
    /// Generate text for one metadata field from a seed.
    Generate(GenerateArgs),
    /// Run the title -> abstract -> claim -> dependent claims flow.
    Flow(FlowArgs),
    /// Score a mapping on source/target pairs.
    Eval(EvalArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Patent documents (JSONL) to tagged records, one per line.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tagged records to fixed-width token shards.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        merges: PathBuf,
        #[arg(long)]
        ctx: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus (docs.jsonl) and its tokenizer files.
    Synth {
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub shards: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Step metrics as JSONL; defaults to `<out>.metrics.jsonl`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Tokenizer `encoder.json`.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Tokenizer `vocab.bpe`.
    #[arg(long)]
    pub merges: PathBuf,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 40)]
    pub top_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
}

impl SamplingArgs {
    fn params(&self) -> SamplingParams {
        SamplingParams {
            top_k: self.top_k,
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub metadata: MetadataKind,
    #[arg(long, default_value = "both")]
    pub direction: GenDirection,
    #[arg(long)]
    pub seed_text: String,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed_text: String,
    #[arg(long, default_value_t = 2)]
    pub deps: usize,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSONL lines of `{"src": ..., "tgt": ...}`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub mapping: MappingKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Embedding service URL; without it similarity is not reported.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub provider_timeout_secs: u64,
    /// Per-record results.
    #[arg(long, default_value = "eval_records.jsonl")]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service TOML; falls back to `$METAFLOW_CONFIG`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Corpus(CorpusCommand::Build { input, out }) => corpus_build(&input, &out),
        Command::Corpus(CorpusCommand::Pack { input, vocab, merges, ctx, seed, out }) => {
            corpus_pack(&input, &vocab, &merges, ctx, seed, &out)
        }
        Command::Corpus(CorpusCommand::Synth { n, seed, out }) => corpus_synth(n, seed, &out),
        Command::Train(a) => train(&a),
        Command::Generate(a) => generate(&a),
        Command::Flow(a) => flow(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).data_ctx(format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).runtime_ctx(format!("creating {}", path.display()))?))
}

fn corpus_build(input: &Path, out: &Path) -> CliResult<()> {
    let docs = read_docs_jsonl(open(input)?).data_ctx(input.display())?;
    let mut w = create(out)?;
    let (mut n, mut notes) = (0usize, 0usize);
    for doc in &docs {
        let built = build_records(doc).data_ctx(&doc.patent_id)?;
        for note in &built.notes {
            tracing::debug!(patent = %doc.patent_id, ?note, "skipped");
        }
        notes += built.notes.len();
        for r in &built.records {
            writeln!(w, "{}", r.rendered).runtime_ctx(out.display())?;
        }
        n += built.records.len();
    }
    w.flush().runtime_ctx(out.display())?;
    eprintln!("{} documents -> {n} records ({notes} notes)", docs.len());
    Ok(())
}

fn load_tokenizer(vocab: &Path, merges: &Path) -> CliResult<Tokenizer> {
    Tokenizer::load(vocab, merges).data_ctx("loading tokenizer")
}

fn corpus_pack(input: &Path, vocab: &Path, merges: &Path, ctx: usize, seed: u64, out: &Path) -> CliResult<()> {
    let tok = load_tokenizer(vocab, merges)?;
    let mut records = Vec::new();
    for (i, line) in open(input)?.lines().enumerate() {
        let line = line.data_ctx(input.display())?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line).data_ctx(format!("{}:{}", input.display(), i + 1))?);
    }
    if ctx < 2 {
        return Err(CliError::Usage("--ctx must be at least 2".into()));
    }
    let packed = pack(&records, &tok, PackConfig::new(ctx, seed)).data_ctx("packing")?;
    std::fs::create_dir_all(out).runtime_ctx(out.display())?;
    write_shards(out, &packed.shards).runtime_ctx(out.display())?;
    let stats = corpus_stats(&records, &packed.shards);
    println!("{}", serde_json::to_string_pretty(&stats).expect("stats serialize"));
    Ok(())
}

fn corpus_synth(n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let corpus = SyntheticCorpus::default();
    std::fs::create_dir_all(out).runtime_ctx(out.display())?;
    let mut w = create(&out.join("docs.jsonl"))?;
    for doc in corpus.docs(n, seed) {
        writeln!(w, "{}", serde_json::to_string(&doc).expect("doc serializes")).runtime_ctx("docs.jsonl")?;
    }
    w.flush().runtime_ctx("docs.jsonl")?;
    corpus.tokenizer().save(out.join("encoder.json"), out.join("vocab.bpe")).runtime_ctx("writing tokenizer")?;
    eprintln!("{n} documents, tokenizer in {}", out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> CliResult<()> {
    let file = TrainFile::load(&a.config)?;
    let shards = read_shards(&a.shards).data_ctx(a.shards.display())?;
    let cfg = file.model.clone();
    let mut examples: Vec<Vec<TokenId>> = Vec::new();
    for s in &shards {
        if s.context_len() != cfg.context_len {
            return Err(CliError::data(anyhow::anyhow!(
                "shards are {} tokens wide but the model context is {}",
                s.context_len(),
                cfg.context_len
            )));
        }
        examples.extend(s.examples().map(<[TokenId]>::to_vec));
    }
    if let Some(&id) = examples.iter().flatten().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(CliError::data(anyhow::anyhow!("token id {id} is outside the model vocabulary {}", cfg.vocab_size)));
    }
    let mut sampler = ExampleSampler::new(examples, file.sampler_seed).data_ctx(a.shards.display())?;
    let mut trainer = Trainer::new(cfg.clone(), file.train.clone(), ModelParams::init(&cfg, cfg.rng_seed)).data_ctx("config")?;

    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".metrics.jsonl");
        p.into()
    });
    let mut log = create(&metrics_path)?;
    let total = file.train.total_steps;
    for step in 0..total {
        let m = trainer.train_step(&sampler.next_batch(file.train.batch_size)).runtime_ctx(format!("step {step}"))?;
        if step % file.log_every == 0 || step + 1 == total {
            writeln!(log, "{}", serde_json::to_string(&m).expect("metrics serialize")).runtime_ctx("metrics log")?;
            log.flush().runtime_ctx("metrics log")?;
            tracing::info!(step, loss = m.loss, lr = m.lr, grad_norm = m.grad_norm, "train");
        }
    }
    let model = Model { config: cfg, params: trainer.params };
    model.save(&a.out).runtime_ctx(format!("writing {}", a.out.display()))?;
    eprintln!("{total} steps, checkpoint {}", a.out.display());
    Ok(())
}

fn load_model(a: &ModelArgs) -> CliResult<(Model, Tokenizer)> {
    let model = Model::load(&a.ckpt).data_ctx(format!("loading {}", a.ckpt.display()))?;
    let tok = load_tokenizer(&a.vocab, &a.merges)?;
    Ok((model, tok))
}

fn generator<'a>(model: &'a Model, tok: &'a Tokenizer) -> CliResult<Generator<'a>> {
    Generator::new(model, tok).data_ctx("checkpoint and tokenizer")
}

fn flow_error(e: FlowError) -> CliError {
    match e.root() {
        FlowError::EmptySeed | FlowError::InvalidRequest(_) => CliError::Usage(e.to_string()),
        _ => CliError::runtime(e),
    }
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let (model, tok) = load_model(&a.model)?;
    let g = generator(&model, &tok)?;
    let req = GenRequest {
        input_text: a.seed_text.clone(),
        metadata: a.metadata,
        direction: a.direction,
        gen_count: a.count,
        sampling: a.sampling.params(),
    };
    let out = g.patent_text_gen(&req).map_err(flow_error)?;
    let mut stdout = std::io::stdout().lock();
    for c in out {
        writeln!(stdout, "{}", c.text).runtime_ctx("stdout")?;
    }
    Ok(())
}

fn flow(a: &FlowArgs) -> CliResult<()> {
    let (model, tok) = load_model(&a.model)?;
    let g = generator(&model, &tok)?;
    let r = g.run_flow(&a.seed_text, a.deps, a.sampling.params()).map_err(flow_error)?;
    println!("{}", serde_json::to_string_pretty(&r).expect("flow result serializes"));
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let (model, tok) = load_model(&a.model)?;
    let g = generator(&model, &tok)?;
    let pairs = read_pairs_jsonl(open(&a.pairs)?).data_ctx(a.pairs.display())?;
    let provider = match &a.provider {
        Some(url) => Some(HttpProvider::new(url.clone(), Duration::from_secs(a.provider_timeout_secs)).data_ctx("--provider")?),
        None => None,
    };
    let (summary, records) = batch_eval(
        &g,
        &pairs,
        a.mapping,
        a.n,
        provider.as_ref().map(|p| p as &dyn EmbeddingProvider),
        a.sampling.params(),
    )
    .map_err(|e| match e {
        EvalError::InvalidRequest(m) => CliError::Usage(m),
        e => CliError::runtime(e),
    })?;
    let mut w = create(&a.out)?;
    write_records_jsonl(&mut w, &records).runtime_ctx(a.out.display())?;
    w.flush().runtime_ctx(a.out.display())?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> CliResult<()> {
    let path = ServiceConfig::locate(a.config)?;
    let cfg = ServiceConfig::load(&path)?;
    let state = AppState::from_config(&cfg)?;
    let rt = tokio::runtime::Runtime::new().runtime_ctx("starting runtime")?;
    rt.block_on(serve(state, cfg.listen, |addr| {
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
    }))
    .runtime_ctx(format!("serving on {}", cfg.listen))
}
