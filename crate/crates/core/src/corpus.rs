//! Patent documents to tagged records, and tagged records to fixed-width
//! training shards.
//!
//! Packing shuffles records, tokenizes them, and cuts each one into windows of
//! exactly `W` ids. Windows start every `W/2` ids until one reaches the end of
//! the record; a window that runs past the end is filled with whole records
//! drawn uniformly from a reservoir of previously packed ones, then cut to `W`.
//!
//! Shard files are little-endian:
//!
//! ```text
//! b"PTX2" | u32 version (1) | u32 context_len | u64 n_examples | n_examples * context_len * u32
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, TokenId, Tokenizer};
use crate::claims::{self, ClaimKind};
use crate::tags::{wrap_mapping, wrap_single, Direction, MappingKind, MetadataKind, TagError, TaggedRecord};

pub const SHARD_MAGIC: &[u8; 4] = b"PTX2";
pub const SHARD_VERSION: u32 = 1;
pub const MAX_EXAMPLES_PER_SHARD: usize = 4096;
pub const DEFAULT_RESERVOIR: usize = 10_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid document: {0}")]
    InvalidDoc(String),
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("record stream is empty")]
    EmptyStream,
    #[error("invalid packing config: {0}")]
    InvalidConfig(String),
    #[error("bad shard file: {0}")]
    ShardFormat(String),
    #[error(transparent)]
    Tokenizer(#[from] BpeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentDoc {
    pub patent_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub r#abstract: String,
    #[serde(default)]
    pub claims: String,
}

impl PatentDoc {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.patent_id.trim().is_empty() {
            return Err(CorpusError::InvalidDoc("empty patent_id".into()));
        }
        if [&self.title, &self.r#abstract, &self.claims].iter().all(|f| f.trim().is_empty()) {
            return Err(CorpusError::InvalidDoc(format!("{}: title, abstract and claims are all empty", self.patent_id)));
        }
        Ok(())
    }
}

/// Something in a document that did not yield a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BuildNote {
    NoClaimRecords,
    DanglingParent { claim: u32, parent: u32 },
    MultipleDependentSkipped { claim: u32 },
    BadField { field: String, error: String },
}

#[derive(Debug, Clone, Default)]
pub struct DocRecords {
    pub records: Vec<TaggedRecord>,
    pub notes: Vec<BuildNote>,
}

/// Emits singles (title, abstract, each independent claim; forward and
/// backward) followed by forward mapping records (title2abstract,
/// abstract2title, abstract2claim and claim2abstract per independent claim,
/// then one dep record per single-dependency claim).
pub fn build_records(doc: &PatentDoc) -> Result<DocRecords, CorpusError> {
    doc.validate()?;
    let mut out = DocRecords::default();
    let title = doc.title.trim();
    let abstract_text = doc.r#abstract.trim();

    let mut independent = Vec::new();
    let mut pairs = Vec::new();
    if doc.claims.trim().is_empty() {
        out.notes.push(BuildNote::NoClaimRecords);
    } else {
        match claims::parse_claims(&doc.claims) {
            Ok(parsed) => {
                for c in &parsed {
                    match c.kind {
                        ClaimKind::Independent => independent.push(c.clone()),
                        ClaimKind::MultipleDependent => {
                            out.notes.push(BuildNote::MultipleDependentSkipped { claim: c.number })
                        }
                        ClaimKind::Dependent => {}
                    }
                }
                let built = claims::build_claim_pairs(&parsed);
                out.notes.extend(
                    built.dangling.iter().map(|d| BuildNote::DanglingParent { claim: d.claim, parent: d.parent }),
                );
                pairs = built.pairs;
            }
            Err(_) => out.notes.push(BuildNote::NoClaimRecords),
        }
    }

    let push = |field: &str, r: Result<TaggedRecord, TagError>, out: &mut DocRecords| match r {
        Ok(rec) => out.records.push(rec),
        Err(e) => out.notes.push(BuildNote::BadField { field: field.to_string(), error: e.to_string() }),
    };

    for dir in Direction::ALL {
        if !title.is_empty() {
            push("title", wrap_single(title, MetadataKind::Title, dir), &mut out);
        }
    }
    for dir in Direction::ALL {
        if !abstract_text.is_empty() {
            push("abstract", wrap_single(abstract_text, MetadataKind::Abstract, dir), &mut out);
        }
    }
    for c in &independent {
        for dir in Direction::ALL {
            push(&format!("claim {}", c.number), wrap_single(&c.body, MetadataKind::Claim, dir), &mut out);
        }
    }

    if !title.is_empty() && !abstract_text.is_empty() {
        push("title", wrap_mapping(title, abstract_text, MappingKind::Title2Abstract), &mut out);
        push("abstract", wrap_mapping(abstract_text, title, MappingKind::Abstract2Title), &mut out);
    }
    if !abstract_text.is_empty() {
        for c in &independent {
            push(&format!("claim {}", c.number), wrap_mapping(abstract_text, &c.body, MappingKind::Abstract2Claim), &mut out);
        }
        for c in &independent {
            push(&format!("claim {}", c.number), wrap_mapping(&c.body, abstract_text, MappingKind::Claim2Abstract), &mut out);
        }
    }
    for (parent, child) in &pairs {
        push("dependent claim", wrap_mapping(parent, child, MappingKind::Dep), &mut out);
    }
    Ok(out)
}

/// Reads one [`PatentDoc`] per non-blank line.
pub fn read_docs_jsonl(reader: impl BufRead) -> Result<Vec<PatentDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: PatentDoc =
            serde_json::from_str(&line).map_err(|e| CorpusError::Jsonl { line: i + 1, message: e.to_string() })?;
        doc.validate().map_err(|e| CorpusError::Jsonl { line: i + 1, message: e.to_string() })?;
        docs.push(doc);
    }
    Ok(docs)
}

/// A block of fixed-width examples, stored flat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    context_len: usize,
    tokens: Vec<TokenId>,
}

impl Shard {
    pub fn new(context_len: usize) -> Self {
        Self { context_len, tokens: Vec::new() }
    }

    pub fn from_examples(context_len: usize, examples: &[Vec<TokenId>]) -> Result<Self, CorpusError> {
        let mut shard = Self::new(context_len);
        for ex in examples {
            shard.push(ex)?;
        }
        Ok(shard)
    }

    pub fn push(&mut self, example: &[TokenId]) -> Result<(), CorpusError> {
        if example.len() != self.context_len {
            return Err(CorpusError::ShardFormat(format!(
                "example has {} ids, shard width is {}",
                example.len(),
                self.context_len
            )));
        }
        self.tokens.extend_from_slice(example);
        Ok(())
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len().checked_div(self.context_len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn example(&self, i: usize) -> &[TokenId] {
        &self.tokens[i * self.context_len..(i + 1) * self.context_len]
    }

    pub fn examples(&self) -> impl Iterator<Item = &[TokenId]> {
        self.tokens.chunks_exact(self.context_len.max(1))
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(SHARD_MAGIC)?;
        w.write_all(&SHARD_VERSION.to_le_bytes())?;
        w.write_all(&(self.context_len as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.tokens.len() * 4);
        for id in &self.tokens {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.tokens.len() * 4);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CorpusError> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header).map_err(|_| CorpusError::ShardFormat("truncated header".into()))?;
        if &header[0..4] != SHARD_MAGIC {
            return Err(CorpusError::ShardFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != SHARD_VERSION {
            return Err(CorpusError::ShardFormat(format!("unsupported version {version}")));
        }
        let context_len = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        let total = n
            .checked_mul(context_len)
            .and_then(|t| t.checked_mul(4))
            .ok_or_else(|| CorpusError::ShardFormat("size overflow".into()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != total {
            return Err(CorpusError::ShardFormat(format!("expected {total} payload bytes, found {}", body.len())));
        }
        let tokens = body.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { context_len, tokens })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let f = fs::File::create(path)?;
        let mut w = io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let bytes = fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

/// Writes `shard_00000.ptx2`, `shard_00001.ptx2`, ... into `dir`.
pub fn write_shards(dir: impl AsRef<Path>, shards: &[Shard]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(&dir)?;
    shards
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = dir.as_ref().join(format!("shard_{i:05}.ptx2"));
            s.save(&path).map(|_| path)
        })
        .collect()
}

/// Loads every `*.ptx2` file in `dir`, in file-name order.
pub fn read_shards(dir: impl AsRef<Path>) -> Result<Vec<Shard>, CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ptx2"))
        .collect();
    paths.sort();
    paths.into_iter().map(Shard::load).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackConfig {
    pub context_len: usize,
    pub seed: u64,
    /// Defaults to `context_len / 2`.
    pub stride: Option<usize>,
    pub reservoir_cap: usize,
    pub max_examples_per_shard: usize,
}

impl PackConfig {
    pub fn new(context_len: usize, seed: u64) -> Self {
        Self {
            context_len,
            seed,
            stride: None,
            reservoir_cap: DEFAULT_RESERVOIR,
            max_examples_per_shard: MAX_EXAMPLES_PER_SHARD,
        }
    }

    fn stride(&self) -> usize {
        self.stride.unwrap_or(self.context_len / 2).max(1)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.context_len < 8 {
            return Err(CorpusError::InvalidConfig(format!("context length {} < 8", self.context_len)));
        }
        if self.stride() > self.context_len {
            return Err(CorpusError::InvalidConfig("stride exceeds context length".into()));
        }
        if self.reservoir_cap == 0 || self.max_examples_per_shard == 0 {
            return Err(CorpusError::InvalidConfig("reservoir and shard capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Where an example came from: input record index and the window's first
/// token within that record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowOrigin {
    pub record: usize,
    pub start: usize,
}

#[derive(Debug, Clone)]
pub struct Packed {
    pub shards: Vec<Shard>,
    /// One entry per example, in emission order.
    pub origins: Vec<WindowOrigin>,
}

pub fn pack(records: &[TaggedRecord], tokenizer: &Tokenizer, config: PackConfig) -> Result<Packed, CorpusError> {
    let seqs = records
        .iter()
        .map(|r| tokenizer.encode(&r.rendered))
        .collect::<Result<Vec<_>, _>>()?;
    pack_tokens(&seqs, config)
}

/// Packs already-tokenized records.
pub fn pack_tokens(seqs: &[Vec<TokenId>], config: PackConfig) -> Result<Packed, CorpusError> {
    config.validate()?;
    if seqs.iter().all(Vec::is_empty) {
        return Err(CorpusError::EmptyStream);
    }
    let w = config.context_len;
    let stride = config.stride();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(&mut rng);

    let mut reservoir: VecDeque<usize> = VecDeque::with_capacity(config.reservoir_cap.min(seqs.len()));
    let mut shards = vec![Shard::new(w)];
    let mut origins = Vec::new();
    let mut example = Vec::with_capacity(2 * w);

    for &ri in &order {
        let toks = &seqs[ri];
        if toks.is_empty() {
            continue;
        }
        let mut start = 0;
        loop {
            example.clear();
            example.extend_from_slice(&toks[start..toks.len().min(start + w)]);
            while example.len() < w {
                // With nothing packed yet, the record fills from itself.
                let src = if reservoir.is_empty() { ri } else { reservoir[rng.gen_range(0..reservoir.len())] };
                example.extend_from_slice(&seqs[src]);
            }
            example.truncate(w);

            if shards.last().unwrap().len() == config.max_examples_per_shard {
                shards.push(Shard::new(w));
            }
            shards.last_mut().unwrap().push(&example)?;
            origins.push(WindowOrigin { record: ri, start });

            if start + w >= toks.len() {
                break;
            }
            start += stride;
        }
        if reservoir.len() == config.reservoir_cap {
            reservoir.pop_front();
        }
        reservoir.push_back(ri);
    }
    Ok(Packed { shards, origins })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: u64,
    pub records_by_kind: BTreeMap<String, u64>,
    pub shards: u64,
    pub examples: u64,
    pub tokens: u64,
}

pub fn corpus_stats(records: &[TaggedRecord], shards: &[Shard]) -> CorpusStats {
    let mut stats = CorpusStats { records: records.len() as u64, ..Default::default() };
    for r in records {
        *stats.records_by_kind.entry(r.kind.label()).or_insert(0) += 1;
    }
    for s in shards {
        stats.shards += 1;
        stats.examples += s.len() as u64;
        stats.tokens += (s.len() * s.context_len()) as u64;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tags::RecordKind;

    fn fixture_doc() -> PatentDoc {
        PatentDoc {
            patent_id: "US0000001".into(),
            title: "Cooling device".into(),
            r#abstract: "A cooling device with a fan and a heat sink.".into(),
            claims: "1. A cooling device comprising a fan.\n2. The cooling device of claim 1, wherein the fan is axial.".into(),
        }
    }

    #[test]
    fn eleven_records_for_full_doc() {
        // 2 title + 2 abstract + 2 independent-claim singles, then
        // title2abstract, abstract2title, abstract2claim, claim2abstract, dep.
        let built = build_records(&fixture_doc()).unwrap();
        let kinds: Vec<RecordKind> = built.records.iter().map(|r| r.kind).collect();
        use Direction::*;
        use MetadataKind::*;
        assert_eq!(
            kinds,
            vec![
                RecordKind::Single(Title, Forward),
                RecordKind::Single(Title, Backward),
                RecordKind::Single(Abstract, Forward),
                RecordKind::Single(Abstract, Backward),
                RecordKind::Single(Claim, Forward),
                RecordKind::Single(Claim, Backward),
                RecordKind::Mapping(MappingKind::Title2Abstract),
                RecordKind::Mapping(MappingKind::Abstract2Title),
                RecordKind::Mapping(MappingKind::Abstract2Claim),
                RecordKind::Mapping(MappingKind::Claim2Abstract),
                RecordKind::Mapping(MappingKind::Dep),
            ]
        );
        assert_eq!(
            built.records[10].rendered,
            "<|startoftext|> A cooling device comprising a fan. <|dep|> The cooling device of claim 1, wherein the fan is axial. <|endoftext|>"
        );
        assert!(built.notes.is_empty());
    }

    #[test]
    fn title_only_doc() {
        let doc = PatentDoc { patent_id: "x".into(), title: "Cooling device".into(), ..Default::default() };
        let built = build_records(&doc).unwrap();
        assert_eq!(built.records.len(), 2);
        assert_eq!(built.notes, vec![BuildNote::NoClaimRecords]);
    }

    #[test]
    fn multiple_dependent_only_yields_no_dep() {
        let doc = PatentDoc {
            patent_id: "x".into(),
            claims: "1. A fan.\n2. A lid.\n3. The fan of claim 1 or claim 2, wherein it spins.".into(),
            ..Default::default()
        };
        let built = build_records(&doc).unwrap();
        assert!(built.records.iter().all(|r| r.kind != RecordKind::Mapping(MappingKind::Dep)));
        assert_eq!(built.records.len(), 4);
        assert!(built.notes.contains(&BuildNote::MultipleDependentSkipped { claim: 3 }));
    }

    #[test]
    fn unparseable_claims_keep_other_records() {
        let doc = PatentDoc { patent_id: "x".into(), title: "T".into(), claims: "no numbers".into(), ..Default::default() };
        let built = build_records(&doc).unwrap();
        assert_eq!(built.records.len(), 2);
        assert_eq!(built.notes, vec![BuildNote::NoClaimRecords]);
    }

    #[test]
    fn invalid_docs() {
        assert!(build_records(&PatentDoc { patent_id: "".into(), title: "t".into(), ..Default::default() }).is_err());
        assert!(build_records(&PatentDoc { patent_id: "x".into(), ..Default::default() }).is_err());
    }

    #[test]
    fn jsonl_reading() {
        let text = "{\"patent_id\":\"a\",\"title\":\"T\"}\n\n{\"patent_id\":\"b\",\"abstract\":\"A\",\"claims\":\"1. X.\"}\n";
        let docs = read_docs_jsonl(text.as_bytes()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].r#abstract, "A");
        let err = read_docs_jsonl("{\"patent_id\":\"a\"}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Jsonl { line: 1, .. }));
        let err = read_docs_jsonl("not json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Jsonl { line: 1, .. }));
    }

    #[test]
    fn window_then_fill_hand_trace() {
        // W = 8, stride 4. Record A has 10 ids, record B has 6. Whichever is
        // packed second fills from the first.
        let a: Vec<u32> = (100..110).collect();
        let b: Vec<u32> = (200..206).collect();
        let packed = pack_tokens(&[a.clone(), b.clone()], PackConfig::new(8, 7)).unwrap();
        let shard = &packed.shards[0];
        let a_first = packed.origins[0].record == 0;
        let mut expect = Vec::new();
        if a_first {
            // A self-fills (empty reservoir), then B fills from A.
            expect.push(vec![100, 101, 102, 103, 104, 105, 106, 107]);
            expect.push(vec![104, 105, 106, 107, 108, 109, 100, 101]);
            expect.push(vec![200, 201, 202, 203, 204, 205, 100, 101]);
        } else {
            // B self-fills, then A: first 8 of A, then A[4..10] ++ B[0..2].
            expect.push(vec![200, 201, 202, 203, 204, 205, 200, 201]);
            expect.push(vec![100, 101, 102, 103, 104, 105, 106, 107]);
            expect.push(vec![104, 105, 106, 107, 108, 109, 200, 201]);
        }
        let got: Vec<Vec<u32>> = shard.examples().map(<[u32]>::to_vec).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn exact_width_record_is_untouched() {
        let rec: Vec<u32> = (0..8).collect();
        let packed = pack_tokens(std::slice::from_ref(&rec), PackConfig::new(8, 1)).unwrap();
        assert_eq!(packed.shards.len(), 1);
        assert_eq!(packed.shards[0].len(), 1);
        assert_eq!(packed.shards[0].example(0), rec.as_slice());
    }

    #[test]
    fn shard_cap() {
        let seqs: Vec<Vec<u32>> = (0..5000u32).map(|i| vec![i, i + 1, i + 2]).collect();
        let packed = pack_tokens(&seqs, PackConfig::new(8, 3)).unwrap();
        assert_eq!(packed.shards.len(), 2);
        assert_eq!(packed.shards[0].len(), MAX_EXAMPLES_PER_SHARD);
        assert_eq!(packed.shards[1].len(), 5000 - MAX_EXAMPLES_PER_SHARD);
    }

    #[test]
    fn pack_errors() {
        assert!(matches!(pack_tokens(&[], PackConfig::new(8, 0)), Err(CorpusError::EmptyStream)));
        assert!(matches!(pack_tokens(&[vec![1]], PackConfig::new(4, 0)), Err(CorpusError::InvalidConfig(_))));
    }

    #[test]
    fn golden_shard_bytes() {
        let shard = Shard::from_examples(2, &[vec![1, 2], vec![0x0102_0304, 0xffff_ffff]]).unwrap();
        let expected: Vec<u8> = vec![
            b'P', b'T', b'X', b'2', // magic
            1, 0, 0, 0, // version
            2, 0, 0, 0, // context_len
            2, 0, 0, 0, 0, 0, 0, 0, // n_examples
            1, 0, 0, 0, 2, 0, 0, 0, // example 0
            4, 3, 2, 1, 0xff, 0xff, 0xff, 0xff, // example 1
        ];
        assert_eq!(shard.to_bytes(), expected);
        assert_eq!(Shard::read_from(expected.as_slice()).unwrap(), shard);
    }

    #[test]
    fn shard_read_errors() {
        let mut bytes = Shard::from_examples(2, &[vec![1, 2]]).unwrap().to_bytes();
        assert!(Shard::read_from(&bytes[..bytes.len() - 1]).is_err());
        assert!(Shard::read_from(&bytes[..10]).is_err());
        bytes[0] = b'X';
        assert!(Shard::read_from(bytes.as_slice()).is_err());
        assert!(Shard::from_examples(2, &[vec![1]]).is_err());
    }

    #[test]
    fn shards_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seqs: Vec<Vec<u32>> = (0..30u32).map(|i| vec![i; (i % 11 + 1) as usize]).collect();
        let mut cfg = PackConfig::new(8, 5);
        cfg.max_examples_per_shard = 7;
        let packed = pack_tokens(&seqs, cfg).unwrap();
        write_shards(dir.path(), &packed.shards).unwrap();
        assert_eq!(read_shards(dir.path()).unwrap(), packed.shards);
    }

    #[test]
    fn stats() {
        assert_eq!(corpus_stats(&[], &[]), CorpusStats::default());
        let built = build_records(&fixture_doc()).unwrap();
        let tok = Tokenizer::from_lexicon(&[" cooling"]);
        let packed = pack(&built.records, &tok, PackConfig::new(16, 9)).unwrap();
        let stats = corpus_stats(&built.records, &packed.shards);
        assert_eq!(stats.records, 11);
        assert_eq!(stats.records_by_kind.values().sum::<u64>(), 11);
        assert_eq!(stats.records_by_kind["title_fwd"], 1);
        assert_eq!(stats.records_by_kind["dep"], 1);
        assert_eq!(stats.tokens, stats.examples * 16);
        let mut reversed = packed.shards.clone();
        reversed.reverse();
        assert_eq!(corpus_stats(&built.records, &reversed), stats);
    }
}
