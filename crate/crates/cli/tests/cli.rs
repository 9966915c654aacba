use std::ffi::OsStr;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use metaflow_core::corpus::read_shards;
use metaflow_core::eval::EvalRecord;
use metaflow_core::flow::FlowResult;
use metaflow_core::model::{StepMetrics, CHECKPOINT_MAGIC};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_metaflow"));
    c.env_remove("METAFLOW_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run<S: AsRef<OsStr> + std::fmt::Debug>(args: &[S]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok<S: AsRef<OsStr> + std::fmt::Debug>(args: &[S]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn corpus_build_one_doc_gives_eleven_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("records.txt");
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/one_doc.jsonl");
    ok(&["corpus", "build", "--in", s(&fixture), "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert_eq!(lines[0], "<|startoftitle|> Cooling device <|endoftitle|>");
    assert!(lines[10].contains("<|dep|>"));
}

const MODEL_TOML: &str = r#"
sampler_seed = 1
log_every = 100

[model]
vocab_size = VOCAB
context_len = 32
n_layers = 1
n_heads = 2
d_model = 16
dropout = 0.0

[train]
batch_size = 4
total_steps = 300
warmup_steps = 30
peak_lr = 0.003
"#;

/// synth -> build -> pack -> train, returning (dir, checkpoint).
fn pipeline() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["corpus", "synth", "--n", "30", "--seed", "3", "--out", s(d)]);
    ok(&["corpus", "build", "--in", s(&d.join("docs.jsonl")), "--out", s(&d.join("records.txt"))]);
    let stats = ok(&[
        "corpus", "pack", "--in", s(&d.join("records.txt")), "--vocab", s(&d.join("encoder.json")),
        "--merges", s(&d.join("vocab.bpe")), "--ctx", "32", "--seed", "9", "--out", s(&d.join("shards")),
    ]);
    let stats: serde_json::Value = serde_json::from_str(&stats).unwrap();
    // three single kinds in two directions plus five mappings
    assert_eq!(stats["records_by_kind"].as_object().unwrap().len(), 11);
    let shards = read_shards(d.join("shards")).unwrap();
    assert_eq!(shards.iter().map(|s| s.len() as u64).sum::<u64>(), stats["examples"].as_u64().unwrap());

    let vocab = metaflow_core::Tokenizer::load(d.join("encoder.json"), d.join("vocab.bpe")).unwrap().vocab_size();
    std::fs::write(d.join("model.toml"), MODEL_TOML.replace("VOCAB", &vocab.to_string())).unwrap();
    let ckpt = d.join("model.ptxm");
    ok(&["train", "--shards", s(&d.join("shards")), "--config", s(&d.join("model.toml")), "--out", s(&ckpt)]);
    (dir, ckpt)
}

fn model_args(cmd: &str, d: &Path, ckpt: &Path) -> Vec<String> {
    let p = |p: &Path| s(p).to_string();
    vec![cmd.into(), "--ckpt".into(), p(ckpt), "--vocab".into(), p(&d.join("encoder.json")), "--merges".into(), p(&d.join("vocab.bpe"))]
}

fn extend(v: &mut Vec<String>, more: &[&str]) {
    v.extend(more.iter().map(|m| m.to_string()));
}

#[test]
fn end_to_end_pipeline() {
    let (dir, ckpt) = pipeline();
    let d = dir.path();
    assert_eq!(&std::fs::read(&ckpt).unwrap()[..4], &CHECKPOINT_MAGIC);
    let metrics_text = std::fs::read_to_string(d.join("model.ptxm.metrics.jsonl")).unwrap();
    let metrics: Vec<StepMetrics> = metrics_text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(metrics.iter().map(|m| m.step).collect::<Vec<_>>(), [0, 100, 200, 299]);

    let mut gen = model_args("generate", d, &ckpt);
    extend(&mut gen, &["--metadata", "title", "--direction", "both", "--seed-text", "thermal", "--count", "3", "--rng-seed", "8"]);
    let a = ok(&gen);
    let b = ok(&gen);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    assert!(a.lines().all(|l| l.contains("thermal")));

    let mut flow = model_args("flow", d, &ckpt);
    extend(&mut flow, &["--seed-text", "thermal", "--deps", "2", "--rng-seed", "1"]);
    let r: FlowResult = serde_json::from_str(&ok(&flow)).unwrap();
    assert_eq!(r.dependent_claims.len(), 2);

    let docs = std::fs::read_to_string(d.join("docs.jsonl")).unwrap();
    let pairs: String = docs
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            format!("{}\n", serde_json::json!({"src": v["abstract"], "tgt": v["title"]}))
        })
        .collect();
    std::fs::write(d.join("pairs.jsonl"), pairs).unwrap();
    let records = d.join("eval.jsonl");
    let mut eval = model_args("eval", d, &ckpt);
    extend(&mut eval, &["--pairs", s(&d.join("pairs.jsonl")), "--mapping", "abstract2title", "--n", "5"]);
    extend(&mut eval, &["--max-new-tokens", "12", "--out", s(&records)]);
    let summary: serde_json::Value = serde_json::from_str(&ok(&eval)).unwrap();
    assert_eq!(summary["n"], 5);
    assert!(summary.get("similarity").is_some_and(|v| v.is_null()));
    let recs: Vec<EvalRecord> =
        std::fs::read_to_string(&records).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 5);

    extend(&mut eval, &["--n", "6000"]);
    assert_eq!(run(&eval).status.code(), Some(1));
}

#[test]
fn serve_answers_health() {
    let (dir, ckpt) = pipeline();
    let d = dir.path();
    let cfg = d.join("service.toml");
    std::fs::write(
        &cfg,
        format!(
            "listen = \"127.0.0.1:0\"\ncheckpoint = \"{}\"\nvocab = \"encoder.json\"\nmerges = \"vocab.bpe\"\nmax_concurrency = 1\n",
            ckpt.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let mut child = bin().arg("serve").env("METAFLOW_CONFIG", &cfg).stdout(Stdio::piped()).spawn().unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("bound address").to_string();
    let health: serde_json::Value = reqwest::blocking::get(format!("{url}/api/health")).unwrap().json().unwrap();
    let flow = reqwest::blocking::Client::new()
        .post(format!("{url}/api/flow"))
        .json(&serde_json::json!({"seed": "thermal", "dep_count": 2, "max_new_tokens": 8}))
        .send()
        .unwrap();
    let status = flow.status();
    let _ = child.kill();
    let _ = child.wait();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["model_config"]["context_len"], 32);
    assert_eq!(status.as_u16(), 200);
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(run::<&str>(&[]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--metadata", "title"]).status.code(), Some(1));
    assert_eq!(run(&["serve"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // data
    let missing = d.join("missing.jsonl");
    assert_eq!(run(&["corpus", "build", "--in", s(&missing), "--out", s(&d.join("r.txt"))]).status.code(), Some(2));
    std::fs::write(d.join("bad.jsonl"), "{not json}\n").unwrap();
    assert_eq!(run(&["corpus", "build", "--in", s(&d.join("bad.jsonl")), "--out", s(&d.join("r.txt"))]).status.code(), Some(2));
    std::fs::write(d.join("records.txt"), "no tags here\n").unwrap();
    ok(&["corpus", "synth", "--n", "1", "--out", s(d)]);
    let pack = run(&[
        "corpus", "pack", "--in", s(&d.join("records.txt")), "--vocab", s(&d.join("encoder.json")),
        "--merges", s(&d.join("vocab.bpe")), "--ctx", "8", "--out", s(&d.join("shards")),
    ]);
    assert_eq!(pack.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&pack.stderr).contains("records.txt:1"));

    // runtime: the output location cannot be created
    std::fs::write(d.join("model.toml"), MODEL_TOML.replace("VOCAB", "600")).unwrap();
    std::fs::write(d.join("records.txt"), "<|startoftitle|> gear <|endoftitle|>\n").unwrap();
    ok(&[
        "corpus", "pack", "--in", s(&d.join("records.txt")), "--vocab", s(&d.join("encoder.json")),
        "--merges", s(&d.join("vocab.bpe")), "--ctx", "32", "--out", s(&d.join("shards")),
    ]);
    let blocked = d.join("file-not-dir");
    std::fs::write(&blocked, "").unwrap();
    let train = run(&[
        "train", "--shards", s(&d.join("shards")), "--config", s(&d.join("model.toml")),
        "--out", s(&blocked.join("model.ptxm")),
    ]);
    assert_eq!(train.status.code(), Some(3), "{}", String::from_utf8_lossy(&train.stderr));
}
