//! Patent claim segmentation, dependency classification and parent/child
//! pairing.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClaimError {
    #[error("no numbered claim found")]
    NoClaimsFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Independent,
    Dependent,
    MultipleDependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub number: u32,
    pub body: String,
    pub kind: ClaimKind,
    /// Set iff `kind == Dependent`.
    pub parent: Option<u32>,
    pub referenced: BTreeSet<u32>,
}

/// A dependent claim whose parent is missing from the claim set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingParent {
    pub claim: u32,
    pub parent: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClaimPairs {
    /// `(parent_body, child_body)` in child-number order.
    pub pairs: Vec<(String, String)>,
    pub dangling: Vec<DanglingParent>,
}

fn claim_start_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(\d+)[ \t]*\.").unwrap())
}

fn reference_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "claim 3", "claims 1, 2 and 4", "claims 1-3", "claim 1 or claim 2", ...
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\bclaims?\s+(\d+)((?:\s*(?:,|-|–|to|through|or|and|and/or)\s*(?:claims?\s+)?\d+)*)",
        )
        .unwrap()
    })
}

fn multiple_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\bclaims?\s+\d+\s*(?:,\s*(?:claims?\s+)?\d+\s*)*(?:or|and/or)\b|\bclaims\s+\d+\s*(?:-|–|to|through)\s*\d+|\bany\s+one\s+of\b|\bany\s+of\s+claims\b",
        )
        .unwrap()
    })
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").unwrap())
}

/// Splits raw claims text into `(number, body)` pairs.
///
/// A claim starts at a line beginning with `N.`; a numbered line whose number
/// does not exceed the previous claim's stays part of that claim's body, as
/// does a line like `1.5 mm`.
pub fn segment_claims(claims_text: &str) -> Result<Vec<(u32, String)>, ClaimError> {
    let mut starts: Vec<(usize, usize, u32)> = Vec::new();
    for caps in claim_start_re().captures_iter(claims_text) {
        let whole = caps.get(0).unwrap();
        if claims_text[whole.end()..].starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let Ok(number) = caps[1].parse::<u32>() else { continue };
        if number == 0 || starts.last().is_some_and(|&(_, _, prev)| number <= prev) {
            continue;
        }
        starts.push((whole.start(), whole.end(), number));
    }
    if starts.is_empty() {
        return Err(ClaimError::NoClaimsFound);
    }
    Ok(starts
        .iter()
        .enumerate()
        .map(|(i, &(_, body_start, number))| {
            let body_end = starts.get(i + 1).map_or(claims_text.len(), |next| next.0);
            (number, claims_text[body_start..body_end].trim().to_string())
        })
        .collect())
}

/// Leading sentence of a claim body: up to the first period followed by
/// whitespace or the end of the text.
fn first_sentence(body: &str) -> &str {
    let bytes = body.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'.' && bytes.get(i + 1).map_or(true, |c| c.is_ascii_whitespace()) {
            return &body[..i];
        }
    }
    body
}

pub fn classify_claim(number: u32, body: &str) -> Claim {
    let sentence = first_sentence(body);
    let mut referenced = BTreeSet::new();
    for caps in reference_re().captures_iter(sentence) {
        for m in number_re().find_iter(caps.get(0).unwrap().as_str()) {
            if let Ok(n) = m.as_str().parse::<u32>() {
                referenced.insert(n);
            }
        }
    }
    let mut multiple = multiple_re().is_match(sentence);
    // "any one of the preceding claims" names no numbers.
    if multiple && referenced.is_empty() {
        referenced.extend(1..number);
    }
    if referenced.iter().any(|&n| n >= number) {
        multiple = true;
    }

    let (kind, parent) = if referenced.is_empty() {
        (ClaimKind::Independent, None)
    } else if referenced.len() == 1 && !multiple {
        (ClaimKind::Dependent, referenced.iter().next().copied())
    } else {
        (ClaimKind::MultipleDependent, None)
    };
    Claim { number, body: body.to_string(), kind, parent, referenced }
}

pub fn parse_claims(claims_text: &str) -> Result<Vec<Claim>, ClaimError> {
    Ok(segment_claims(claims_text)?
        .into_iter()
        .map(|(n, body)| classify_claim(n, &body))
        .collect())
}

/// Pairs each single-dependency claim with the claim it depends on.
///
/// The parent may itself be dependent or multiply dependent; only the child's
/// own dependency has to be single.
pub fn build_claim_pairs(claims: &[Claim]) -> ClaimPairs {
    let by_number: HashMap<u32, &Claim> = claims.iter().map(|c| (c.number, c)).collect();
    let mut children: Vec<&Claim> = claims.iter().filter(|c| c.kind == ClaimKind::Dependent).collect();
    children.sort_by_key(|c| c.number);

    let mut out = ClaimPairs::default();
    for child in children {
        let Some(parent_no) = child.parent else { continue };
        match by_number.get(&parent_no) {
            Some(parent) => out.pairs.push((parent.body.clone(), child.body.clone())),
            None => out.dangling.push(DanglingParent { claim: child.number, parent: parent_no }),
        }
    }
    out
}
