//! Shared inputs for the criterion benches.

use std::path::PathBuf;

use metaflow_core::corpus::{build_records, pack, PackConfig};
use metaflow_core::synthetic::SyntheticCorpus;
use metaflow_core::{TaggedRecord, TokenId, Tokenizer};

pub const PATENT_PARAGRAPH: &str = "A semiconductor device includes a substrate, a gate electrode disposed on the \
substrate, and a source region and a drain region formed in the substrate on opposite sides of the gate electrode. \
The gate electrode comprises a work-function metal layer having a thickness of 2 nm to 5 nm, and the device further \
includes a spacer of silicon nitride (SiN) adjacent to the gate. 1. The device of claim 1, wherein the substrate is \
silicon-on-insulator.";

/// The GPT-2 tokenizer files shipped with the core test fixtures.
pub fn gpt2_tokenizer() -> Tokenizer {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/gpt2");
    Tokenizer::load(dir.join("encoder.json"), dir.join("vocab.bpe")).expect("gpt2 fixtures")
}

pub fn synthetic_records(n_docs: usize) -> (Tokenizer, Vec<TaggedRecord>) {
    let corpus = SyntheticCorpus::default();
    let records = corpus.docs(n_docs, 1).iter().flat_map(|d| build_records(d).expect("valid doc").records).collect();
    (corpus.tokenizer(), records)
}

pub fn synthetic_examples(n_docs: usize, ctx: usize) -> (Tokenizer, Vec<Vec<TokenId>>) {
    let (tok, records) = synthetic_records(n_docs);
    let packed = pack(&records, &tok, PackConfig::new(ctx, 2)).expect("pack");
    let examples = packed.shards.iter().flat_map(|s| s.examples().map(<[TokenId]>::to_vec).collect::<Vec<_>>()).collect();
    (tok, examples)
}
