//! Small synthetic patent corpus with disjoint word sets per field, plus a
//! matching toy tokenizer. Used for smoke training runs and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bpe::Tokenizer;
use crate::corpus::PatentDoc;
use crate::tags::all_tags;

pub const TITLE_WORDS: [&str; 16] = [
    "thermal", "sensor", "valve", "rotor", "circuit", "engine", "filter", "pump", "laser", "battery", "gear", "lens",
    "motor", "panel", "switch", "brake",
];

pub const ABSTRACT_WORDS: [&str; 16] = [
    "signal", "water", "light", "heat", "flow", "voltage", "layer", "surface", "pressure", "current", "fluid",
    "energy", "beam", "shaft", "frame", "plate",
];

pub const CLAIM_WORDS: [&str; 16] = [
    "housing", "spring", "bolt", "cable", "socket", "magnet", "blade", "nozzle", "piston", "chamber", "wheel",
    "sleeve", "clamp", "hinge", "pin", "tube",
];

const CLAIM_GLUE: [&str; 7] = ["A", "comprising", "The", "of", "claim", "wherein", "or"];

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub title_words: Vec<String>,
    pub abstract_words: Vec<String>,
    pub claim_words: Vec<String>,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        let own = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self { title_words: own(&TITLE_WORDS), abstract_words: own(&ABSTRACT_WORDS), claim_words: own(&CLAIM_WORDS) }
    }
}

impl SyntheticCorpus {
    fn phrase(rng: &mut ChaCha8Rng, words: &[String], min: usize, max: usize) -> String {
        let n = rng.gen_range(min..=max);
        (0..n).map(|_| words.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Each document has a title, an abstract and three claims: an independent
    /// claim, a dependent claim on it, and either a second-level dependent
    /// claim or a multiply dependent one.
    pub fn docs(&self, n: usize, seed: u64) -> Vec<PatentDoc> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let title = Self::phrase(&mut rng, &self.title_words, 2, 4);
                let abstract_text = Self::phrase(&mut rng, &self.abstract_words, 5, 9);
                let noun = self.claim_words.choose(&mut rng).unwrap().clone();
                let c1 = format!("A {noun} comprising {}.", Self::phrase(&mut rng, &self.claim_words, 2, 4));
                let c2 = format!("The {noun} of claim 1, wherein {}.", Self::phrase(&mut rng, &self.claim_words, 2, 3));
                let c3 = if rng.gen_bool(0.7) {
                    format!("The {noun} of claim 2, wherein {}.", Self::phrase(&mut rng, &self.claim_words, 2, 3))
                } else {
                    format!("The {noun} of claim 1 or claim 2, wherein {}.", Self::phrase(&mut rng, &self.claim_words, 2, 3))
                };
                PatentDoc {
                    patent_id: format!("SYN{i:06}"),
                    title,
                    r#abstract: abstract_text,
                    claims: format!("1. {c1}\n2. {c2}\n3. {c3}"),
                }
            })
            .collect()
    }

    /// Pieces (as the pre-tokenizer emits them) that the toy tokenizer keeps
    /// whole: every field word and claim glue word with a leading space, the
    /// tag fragments, digits and punctuation.
    pub fn lexicon(&self) -> Vec<String> {
        let mut out: Vec<String> = vec!["<|".into(), " <|".into(), "|>".into(), ",".into(), ".".into()];
        for tag in all_tags() {
            let inner = tag.trim_start_matches("<|").trim_end_matches("|>");
            for part in inner.split(|c: char| c.is_ascii_digit()) {
                if !part.is_empty() && !out.iter().any(|e| e == part) {
                    out.push(part.to_string());
                }
            }
        }
        for d in 1..=9 {
            out.push(format!(" {d}"));
        }
        for w in self.title_words.iter().chain(&self.abstract_words).chain(&self.claim_words) {
            out.push(format!(" {w}"));
        }
        for w in CLAIM_GLUE {
            out.push(format!(" {w}"));
        }
        out
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::from_lexicon(&self.lexicon())
    }
}
