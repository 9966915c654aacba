//! Control-tag vocabulary for structural metadata and text-to-text mappings.
//!
//! A record is plain text framed by tags. Single records carry one metadata
//! field, forward or word-reversed; mapping records carry a source field, a
//! mapping tag and a target field:
//!
//! ```text
//! <|startoftitle|> Cooling device <|endoftitle|>
//! <|backwardtitlestart|> device Cooling <|backwardtitleend|>
//! <|startoftitle|> Fast engine <|title2abstract|> An engine ... <|endofabstract|>
//! ```
//!
//! Text fields are whitespace-normalized on construction, so every rendered
//! record fits on one line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TagError {
    #[error("text is empty")]
    EmptyText,
    #[error("text contains the control tag {0}")]
    TagCollision(&'static str),
    #[error("record does not start with a known start tag")]
    UnknownTag,
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unknown {what} name {name:?}")]
    UnknownName { what: &'static str, name: String },
}

/// The four kinds of structural patent text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataKind {
    Title,
    Abstract,
    Claim,
    /// Shares the claim tag pair.
    DependentClaim,
}

impl MetadataKind {
    pub const ALL: [MetadataKind; 4] = [
        MetadataKind::Title,
        MetadataKind::Abstract,
        MetadataKind::Claim,
        MetadataKind::DependentClaim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetadataKind::Title => "title",
            MetadataKind::Abstract => "abstract",
            MetadataKind::Claim => "claim",
            MetadataKind::DependentClaim => "dependent_claim",
        }
    }
}

impl fmt::Display for MetadataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetadataKind {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetadataKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TagError::UnknownName { what: "metadata", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Text-to-text relations between two metadata kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    /// Independent or dependent claim to a dependent claim.
    Dep,
    #[serde(rename = "title2abstract")]
    Title2Abstract,
    #[serde(rename = "abstract2claim")]
    Abstract2Claim,
    #[serde(rename = "claim2abstract")]
    Claim2Abstract,
    #[serde(rename = "abstract2title")]
    Abstract2Title,
}

impl MappingKind {
    pub const ALL: [MappingKind; 5] = [
        MappingKind::Dep,
        MappingKind::Title2Abstract,
        MappingKind::Abstract2Claim,
        MappingKind::Claim2Abstract,
        MappingKind::Abstract2Title,
    ];

    /// Source kind used for framing. `Dep` also accepts a dependent claim as
    /// its source; both share the claim tags.
    pub fn source(self) -> MetadataKind {
        match self {
            MappingKind::Dep => MetadataKind::Claim,
            MappingKind::Title2Abstract => MetadataKind::Title,
            MappingKind::Abstract2Claim => MetadataKind::Abstract,
            MappingKind::Claim2Abstract => MetadataKind::Claim,
            MappingKind::Abstract2Title => MetadataKind::Abstract,
        }
    }

    pub fn target(self) -> MetadataKind {
        match self {
            MappingKind::Dep => MetadataKind::DependentClaim,
            MappingKind::Title2Abstract => MetadataKind::Abstract,
            MappingKind::Abstract2Claim => MetadataKind::Claim,
            MappingKind::Claim2Abstract => MetadataKind::Abstract,
            MappingKind::Abstract2Title => MetadataKind::Title,
        }
    }

    pub fn accepts_source(self, kind: MetadataKind) -> bool {
        match self {
            MappingKind::Dep => matches!(kind, MetadataKind::Claim | MetadataKind::DependentClaim),
            m => m.source() == kind,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MappingKind::Dep => "dep",
            MappingKind::Title2Abstract => "title2abstract",
            MappingKind::Abstract2Claim => "abstract2claim",
            MappingKind::Claim2Abstract => "claim2abstract",
            MappingKind::Abstract2Title => "abstract2title",
        }
    }
}

impl fmt::Display for MappingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MappingKind {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MappingKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TagError::UnknownName { what: "mapping", name: s.to_string() })
    }
}

pub fn start_tag(kind: MetadataKind, dir: Direction) -> &'static str {
    use Direction::*;
    use MetadataKind::*;
    match (kind, dir) {
        (Claim | DependentClaim, Forward) => "<|startoftext|>",
        (Claim | DependentClaim, Backward) => "<|startofbackward|>",
        (Title, Forward) => "<|startoftitle|>",
        (Title, Backward) => "<|backwardtitlestart|>",
        (Abstract, Forward) => "<|startofabstract|>",
        (Abstract, Backward) => "<|backwardabstractstart|>",
    }
}

pub fn end_tag(kind: MetadataKind, dir: Direction) -> &'static str {
    use Direction::*;
    use MetadataKind::*;
    match (kind, dir) {
        (Claim | DependentClaim, Forward) => "<|endoftext|>",
        (Claim | DependentClaim, Backward) => "<|endofbackward|>",
        (Title, Forward) => "<|endoftitle|>",
        (Title, Backward) => "<|backwardtitleend|>",
        (Abstract, Forward) => "<|endofabstract|>",
        (Abstract, Backward) => "<|backwardabstractend|>",
    }
}

pub fn mapping_tag(m: MappingKind) -> &'static str {
    match m {
        MappingKind::Dep => "<|dep|>",
        MappingKind::Title2Abstract => "<|title2abstract|>",
        MappingKind::Abstract2Claim => "<|abstract2claim|>",
        MappingKind::Claim2Abstract => "<|claim2abstract|>",
        MappingKind::Abstract2Title => "<|abstract2title|>",
    }
}

/// Every distinct tag string: twelve framing tags followed by five mapping tags.
pub fn all_tags() -> Vec<&'static str> {
    let mut tags = Vec::with_capacity(17);
    for kind in [MetadataKind::Claim, MetadataKind::Title, MetadataKind::Abstract] {
        for dir in Direction::ALL {
            tags.push(start_tag(kind, dir));
            tags.push(end_tag(kind, dir));
        }
    }
    tags.extend(MappingKind::ALL.into_iter().map(mapping_tag));
    tags
}

/// First tag occurring in `text`, if any.
pub fn find_tag(text: &str) -> Option<&'static str> {
    all_tags().into_iter().find(|t| text.contains(t))
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn reverse_words(text: &str) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    words.reverse();
    words.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKind {
    Single(MetadataKind, Direction),
    Mapping(MappingKind),
}

impl RecordKind {
    /// Short label used in corpus statistics, e.g. `title_fwd` or `dep`.
    pub fn label(self) -> String {
        match self {
            RecordKind::Single(kind, Direction::Forward) => format!("{}_fwd", kind.name()),
            RecordKind::Single(kind, Direction::Backward) => format!("{}_bwd", kind.name()),
            RecordKind::Mapping(m) => m.name().to_string(),
        }
    }
}

/// One training unit. `text_a` is always stored in natural word order, even
/// for backward records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedRecord {
    pub kind: RecordKind,
    pub text_a: String,
    pub text_b: Option<String>,
    pub rendered: String,
}

fn clean_text(text: &str) -> Result<String, TagError> {
    let text = normalize_ws(text);
    if text.is_empty() {
        return Err(TagError::EmptyText);
    }
    if let Some(tag) = find_tag(&text) {
        return Err(TagError::TagCollision(tag));
    }
    Ok(text)
}

pub fn wrap_single(text: &str, kind: MetadataKind, dir: Direction) -> Result<TaggedRecord, TagError> {
    let text = clean_text(text)?;
    let body = match dir {
        Direction::Forward => text.clone(),
        Direction::Backward => reverse_words(&text),
    };
    let rendered = format!("{} {} {}", start_tag(kind, dir), body, end_tag(kind, dir));
    Ok(TaggedRecord { kind: RecordKind::Single(kind, dir), text_a: text, text_b: None, rendered })
}

pub fn wrap_mapping(src: &str, dst: &str, m: MappingKind) -> Result<TaggedRecord, TagError> {
    let src = clean_text(src)?;
    let dst = clean_text(dst)?;
    let rendered = format!(
        "{} {} {} {} {}",
        start_tag(m.source(), Direction::Forward),
        src,
        mapping_tag(m),
        dst,
        end_tag(m.target(), Direction::Forward)
    );
    Ok(TaggedRecord { kind: RecordKind::Mapping(m), text_a: src, text_b: Some(dst), rendered })
}

/// Inverse of [`wrap_single`] / [`wrap_mapping`].
///
/// Claim-tagged singles parse as [`MetadataKind::Claim`]; dependent claims
/// render identically and cannot be told apart.
pub fn parse_record(rendered: &str) -> Result<TaggedRecord, TagError> {
    let trimmed = rendered.trim();
    let (kind, dir, rest) = [MetadataKind::Claim, MetadataKind::Title, MetadataKind::Abstract]
        .into_iter()
        .flat_map(|k| Direction::ALL.into_iter().map(move |d| (k, d)))
        .find_map(|(k, d)| trimmed.strip_prefix(start_tag(k, d)).map(|rest| (k, d, rest)))
        .ok_or(TagError::UnknownTag)?;

    let mapping = if dir == Direction::Forward {
        MappingKind::ALL
            .into_iter()
            .filter(|m| m.source() == kind)
            .find_map(|m| rest.find(mapping_tag(m)).map(|pos| (m, pos)))
    } else {
        None
    };

    match mapping {
        Some((m, pos)) => {
            let src = &rest[..pos];
            let tail = &rest[pos + mapping_tag(m).len()..];
            let end = end_tag(m.target(), Direction::Forward);
            let dst = tail
                .strip_suffix(end)
                .ok_or_else(|| TagError::MalformedRecord(format!("missing end tag {end}")))?;
            let src = field(src)?;
            let dst = field(dst)?;
            wrap_mapping(&src, &dst, m)
        }
        None => {
            let end = end_tag(kind, dir);
            let body = rest
                .strip_suffix(end)
                .ok_or_else(|| TagError::MalformedRecord(format!("missing end tag {end}")))?;
            let body = field(body)?;
            let text = match dir {
                Direction::Forward => body,
                Direction::Backward => reverse_words(&body),
            };
            wrap_single(&text, kind, dir)
        }
    }
}

fn field(raw: &str) -> Result<String, TagError> {
    clean_text(raw).map_err(|e| match e {
        TagError::EmptyText => TagError::MalformedRecord("empty text field".into()),
        TagError::TagCollision(t) => TagError::MalformedRecord(format!("unexpected tag {t}")),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_lookup() {
        assert_eq!(start_tag(MetadataKind::Title, Direction::Forward), "<|startoftitle|>");
        assert_eq!(end_tag(MetadataKind::Claim, Direction::Backward), "<|endofbackward|>");
        assert_eq!(mapping_tag(MappingKind::Abstract2Claim), "<|abstract2claim|>");
    }

    #[test]
    fn tags_distinct_and_non_overlapping() {
        let tags = all_tags();
        assert_eq!(tags.len(), 17);
        for (i, a) in tags.iter().enumerate() {
            assert!(a.starts_with("<|") && a.ends_with("|>"));
            for (j, b) in tags.iter().enumerate() {
                if i != j {
                    assert!(!a.contains(b), "{a} contains {b}");
                }
            }
        }
    }

    #[test]
    fn dependent_claim_shares_claim_tags() {
        for dir in Direction::ALL {
            assert_eq!(start_tag(MetadataKind::DependentClaim, dir), start_tag(MetadataKind::Claim, dir));
            assert_eq!(end_tag(MetadataKind::DependentClaim, dir), end_tag(MetadataKind::Claim, dir));
        }
        let a = wrap_single("x y", MetadataKind::DependentClaim, Direction::Forward).unwrap();
        let b = wrap_single("x y", MetadataKind::Claim, Direction::Forward).unwrap();
        assert_eq!(a.rendered, b.rendered);
    }

    #[test]
    fn reverse_words_cases() {
        assert_eq!(reverse_words("a b c"), "c b a");
        assert_eq!(reverse_words(""), "");
        assert_eq!(reverse_words("word"), "word");
        assert_eq!(reverse_words("  a\t b \n"), "b a");
    }

    #[test]
    fn wrap_single_examples() {
        let r = wrap_single("Cooling device", MetadataKind::Title, Direction::Forward).unwrap();
        assert_eq!(r.rendered, "<|startoftitle|> Cooling device <|endoftitle|>");
        let r = wrap_single("Cooling device", MetadataKind::Title, Direction::Backward).unwrap();
        assert_eq!(r.rendered, "<|backwardtitlestart|> device Cooling <|backwardtitleend|>");
        assert_eq!(r.text_a, "Cooling device");
        assert_eq!(wrap_single("", MetadataKind::Title, Direction::Forward), Err(TagError::EmptyText));
        assert_eq!(wrap_single("  \n", MetadataKind::Title, Direction::Forward), Err(TagError::EmptyText));
        assert_eq!(
            wrap_single("a <|dep|> b", MetadataKind::Title, Direction::Forward),
            Err(TagError::TagCollision("<|dep|>"))
        );
    }

    #[test]
    fn wrap_mapping_examples() {
        let r = wrap_mapping("Fast engine", "An engine ...", MappingKind::Title2Abstract).unwrap();
        assert_eq!(r.rendered, "<|startoftitle|> Fast engine <|title2abstract|> An engine ... <|endofabstract|>");
        let r = wrap_mapping("1. A method...", "The method of claim 1...", MappingKind::Dep).unwrap();
        assert_eq!(r.rendered, "<|startoftext|> 1. A method... <|dep|> The method of claim 1... <|endoftext|>");
        assert_eq!(wrap_mapping("x", "", MappingKind::Abstract2Title), Err(TagError::EmptyText));
    }

    #[test]
    fn parse_examples() {
        let r = parse_record("<|backwardtitlestart|> device Cooling <|backwardtitleend|>").unwrap();
        assert_eq!(r.kind, RecordKind::Single(MetadataKind::Title, Direction::Backward));
        assert_eq!(r.text_a, "Cooling device");
        assert!(matches!(parse_record("<|startoftitle|> abc"), Err(TagError::MalformedRecord(_))));
        assert_eq!(parse_record("hello <|endoftitle|>"), Err(TagError::UnknownTag));
        assert!(matches!(
            parse_record("<|startoftitle|> <|endoftitle|>"),
            Err(TagError::MalformedRecord(_))
        ));
        // Mapping tag whose source does not match the start tag.
        assert!(matches!(
            parse_record("<|startoftitle|> a <|abstract2claim|> b <|endoftext|>"),
            Err(TagError::MalformedRecord(_))
        ));
    }

    #[test]
    fn parse_mapping_round_trip() {
        for m in MappingKind::ALL {
            let r = wrap_mapping("source words here", "target text", m).unwrap();
            assert_eq!(parse_record(&r.rendered).unwrap(), r);
        }
    }

    #[test]
    fn names_parse() {
        for m in MappingKind::ALL {
            assert_eq!(m.name().parse::<MappingKind>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        for k in MetadataKind::ALL {
            assert_eq!(k.name().parse::<MetadataKind>().unwrap(), k);
        }
        assert!("claim2title".parse::<MappingKind>().is_err());
    }

    #[test]
    fn mapping_endpoints() {
        assert!(MappingKind::Dep.accepts_source(MetadataKind::DependentClaim));
        assert!(MappingKind::Dep.accepts_source(MetadataKind::Claim));
        assert_eq!(MappingKind::Dep.target(), MetadataKind::DependentClaim);
        assert_eq!(
            (MappingKind::Abstract2Title.source(), MappingKind::Abstract2Title.target()),
            (MetadataKind::Abstract, MetadataKind::Title)
        );
    }
}
