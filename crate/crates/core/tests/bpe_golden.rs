//! GPT-2 BPE against ids captured from the reference encoder
//! (`tools/gen_bpe_golden.py`), plus fuzzed round trips.

use std::path::PathBuf;
use std::sync::OnceLock;

use metaflow_core::bpe::{TokenId, Tokenizer};
use proptest::prelude::*;
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/gpt2").join(name)
}

fn gpt2() -> &'static Tokenizer {
    static TOK: OnceLock<Tokenizer> = OnceLock::new();
    TOK.get_or_init(|| Tokenizer::load(fixture("encoder.json"), fixture("vocab.bpe")).unwrap())
}

#[derive(Deserialize)]
struct Case {
    text: String,
    ids: Vec<TokenId>,
}

#[test]
fn vocabulary_shape() {
    let tok = gpt2();
    assert_eq!(tok.vocab_size(), 50_257);
    assert_eq!(tok.merges().len(), 50_000);
    assert_eq!(tok.vocab().id("<|endoftext|>"), Some(50_256));
}

#[test]
fn matches_reference_ids() {
    let tok = gpt2();
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(fixture("bpe_golden.json")).unwrap()).unwrap();
    assert!(cases.len() >= 1001);
    let mut mismatches = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let ids = tok.encode(&c.text).unwrap();
        if ids != c.ids {
            mismatches.push(i);
        }
        assert_eq!(tok.decode(&ids).unwrap(), c.text);
    }
    assert!(mismatches.is_empty(), "{} mismatches, first at case {:?}", mismatches.len(), mismatches.first());
    assert_eq!(cases[0].ids, vec![15496, 995]);
}

#[test]
fn tags_are_not_atomic() {
    let tok = gpt2();
    let ids = tok.encode("<|startoftitle|>").unwrap();
    assert!(ids.len() > 1);
    assert_eq!(tok.decode(&ids).unwrap(), "<|startoftitle|>");
}

fn patentish() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[a-zA-Z0-9 ,.;:()'\\-\n\t]{0,80}",
        "(<\\|[a-z0-9]{1,20}\\|> ?|[A-Za-zäöüé]{1,10} |[0-9]{1,4}\\. |'s |  )*",
        proptest::collection::vec(any::<u8>(), 0..40).prop_map(|b| String::from_utf8_lossy(&b).into_owned()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn decode_inverts_encode(s in patentish()) {
        let tok = gpt2();
        let ids = tok.encode(&s).unwrap();
        prop_assert_eq!(tok.decode(&ids).unwrap(), s);
    }
}
