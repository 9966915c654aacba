//! GPT-2 byte-level BPE: loads `encoder.json` / `vocab.bpe` and encodes with
//! ranked merges over the byte-to-unicode alphabet.
//!
//! Control tags are not special here. `<|startoftitle|>` is split by the
//! pre-tokenizer like any other text and encodes to several ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use fancy_regex::Regex;
use thiserror::Error;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("cannot read {path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("bad tokenizer file: {0}")]
    Format(String),
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownToken(String),
    #[error("token id {id} out of range for vocabulary of {size}")]
    IdOutOfRange { id: TokenId, size: usize },
}

const PATTERN: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

fn pretokenizer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PATTERN).expect("GPT-2 pattern compiles"))
}

/// The standard GPT-2 byte to printable-char table. Printable Latin-1 bytes map
/// to themselves; the remaining bytes map to code points from 256 upward, in
/// ascending byte order.
pub fn bytes_to_unicode() -> [char; 256] {
    let printable = |b: u32| (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
    let mut table = ['\0'; 256];
    let mut next = 256u32;
    for b in 0u32..256 {
        table[b as usize] = if printable(b) {
            char::from_u32(b).unwrap()
        } else {
            let c = char::from_u32(next).unwrap();
            next += 1;
            c
        };
    }
    table
}

/// Token string <-> id bijection.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn new(token_to_id: HashMap<String, TokenId>) -> Result<Self, BpeError> {
        let size = token_to_id.len();
        let mut id_to_token = vec![None; size];
        for (tok, &id) in &token_to_id {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| BpeError::Format(format!("id {id} for {tok:?} outside [0, {size})")))?;
            if slot.is_some() {
                return Err(BpeError::Format(format!("duplicate id {id}")));
            }
            *slot = Some(tok.clone());
        }
        Ok(Self { token_to_id, id_to_token: id_to_token.into_iter().map(Option::unwrap).collect() })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocabulary,
    merges: Vec<(String, String)>,
    /// (left id, right id) -> (rank, merged id)
    ranks: HashMap<(TokenId, TokenId), (u32, TokenId)>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
}

impl Tokenizer {
    pub fn load(encoder_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> Result<Self, BpeError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| BpeError::File { path: p.display().to_string(), source })
        };
        let encoder = read(encoder_path.as_ref())?;
        let merges = read(merges_path.as_ref())?;
        Self::from_strs(&encoder, &merges)
    }

    /// Builds from the text of `encoder.json` and `vocab.bpe`.
    pub fn from_strs(encoder_json: &str, merges_text: &str) -> Result<Self, BpeError> {
        let encoder: HashMap<String, TokenId> =
            serde_json::from_str(encoder_json).map_err(|e| BpeError::Format(format!("encoder.json: {e}")))?;
        let mut lines = merges_text.lines();
        match lines.next() {
            Some(first) if first.starts_with('#') => {}
            _ => return Err(BpeError::Format("vocab.bpe must start with a #version comment".into())),
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => merges.push((a.to_string(), b.to_string())),
                _ => return Err(BpeError::Format(format!("vocab.bpe line {}: {line:?}", i + 2))),
            }
        }
        Self::from_parts(encoder, merges)
    }

    pub fn from_parts(encoder: HashMap<String, TokenId>, merges: Vec<(String, String)>) -> Result<Self, BpeError> {
        let vocab = Vocabulary::new(encoder)?;
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.iter().enumerate() {
            let lookup = |s: &str| {
                vocab.id(s).ok_or_else(|| BpeError::Format(format!("merge {a:?} {b:?} uses {s:?}, absent from the vocabulary")))
            };
            let key = (lookup(a)?, lookup(b)?);
            let merged = lookup(&format!("{a}{b}"))?;
            if ranks.insert(key, (rank as u32, merged)).is_some() {
                return Err(BpeError::Format(format!("duplicate merge {a:?} {b:?}")));
            }
        }
        let byte_to_char = bytes_to_unicode();
        let char_to_byte = byte_to_char.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        Ok(Self { vocab, merges, ranks, byte_to_char, char_to_byte })
    }

    /// A byte-complete toy tokenizer: the 256 byte symbols (ids 0..256 in byte
    /// order) plus merges under which each lexicon entry encodes to a single
    /// token. Entries are raw text pieces as the pre-tokenizer produces them,
    /// e.g. `" engine"` or `"startoftitle"`.
    ///
    /// Each entry is first run through the merges collected so far; whatever
    /// pieces remain are joined left to right by new, lower-priority merges.
    /// Those can never fire on an earlier entry, which already ends as one
    /// symbol.
    pub fn from_lexicon<S: AsRef<str>>(entries: &[S]) -> Self {
        let byte_to_char = bytes_to_unicode();
        let mut encoder: HashMap<String, TokenId> = HashMap::new();
        for c in byte_to_char {
            let id = encoder.len() as TokenId;
            encoder.insert(c.to_string(), id);
        }
        let mut merges: Vec<(String, String)> = Vec::new();
        let mut ranks: HashMap<(String, String), usize> = HashMap::new();
        for entry in entries {
            let mut parts: Vec<String> = entry.as_ref().bytes().map(|b| byte_to_char[b as usize].to_string()).collect();
            if parts.is_empty() {
                continue;
            }
            loop {
                let best = parts
                    .windows(2)
                    .enumerate()
                    .filter_map(|(i, w)| ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                    .min();
                let Some((_, i)) = best else { break };
                let right = parts.remove(i + 1);
                parts[i].push_str(&right);
            }
            while parts.len() > 1 {
                let right = parts.remove(1);
                let pair = (parts[0].clone(), right.clone());
                parts[0].push_str(&right);
                if !ranks.contains_key(&pair) {
                    ranks.insert(pair.clone(), merges.len());
                    merges.push(pair);
                }
                if !encoder.contains_key(&parts[0]) {
                    let id = encoder.len() as TokenId;
                    encoder.insert(parts[0].clone(), id);
                }
            }
        }
        Self::from_parts(encoder, merges).expect("lexicon tokenizer is consistent")
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// `encoder.json` contents, keys sorted by id.
    pub fn encoder_json(&self) -> String {
        let ordered: Vec<(&str, TokenId)> =
            (0..self.vocab.len() as TokenId).map(|id| (self.vocab.token(id).unwrap(), id)).collect();
        let mut out = String::from("{");
        for (i, (tok, id)) in ordered.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&serde_json::to_string(tok).unwrap());
            out.push_str(&format!(": {id}"));
        }
        out.push('}');
        out
    }

    pub fn merges_text(&self) -> String {
        let mut out = String::from("#version: 0.2\n");
        for (a, b) in &self.merges {
            out.push_str(a);
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, encoder_path: impl AsRef<Path>, merges_path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(encoder_path, self.encoder_json())?;
        fs::write(merges_path, self.merges_text())
    }

    /// Splits text into pre-tokens with the GPT-2 pattern.
    pub fn pretokenize<'t>(&self, text: &'t str) -> Vec<&'t str> {
        pretokenizer()
            .find_iter(text)
            .map(|m| m.expect("pattern has no catastrophic backtracking").as_str())
            .collect()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, BpeError> {
        let mut out = Vec::with_capacity(text.len() / 3);
        for piece in self.pretokenize(text) {
            self.encode_piece(piece, &mut out)?;
        }
        Ok(out)
    }

    fn encode_piece(&self, piece: &str, out: &mut Vec<TokenId>) -> Result<(), BpeError> {
        // Byte symbols the vocabulary lacks never take part in a merge.
        const MISSING: TokenId = TokenId::MAX;
        let mut word: Vec<TokenId> = piece
            .bytes()
            .map(|b| self.vocab.id(self.byte_to_char[b as usize].encode_utf8(&mut [0; 4])).unwrap_or(MISSING))
            .collect();

        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).map(|&(rank, merged)| (rank, w[0], w[1], merged)))
                .min_by_key(|&(rank, ..)| rank);
            let Some((_, first, second, merged)) = best else { break };
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    next.push(merged);
                    i += 2;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            word = next;
        }

        if word.contains(&MISSING) {
            let missing = piece
                .bytes()
                .map(|b| self.byte_to_char[b as usize].to_string())
                .find(|sym| self.vocab.id(sym).is_none())
                .unwrap_or_default();
            return Err(BpeError::UnknownToken(missing));
        }
        out.extend_from_slice(&word);
        Ok(())
    }

    /// Decodes ids to text; invalid UTF-8 becomes U+FFFD.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, BpeError> {
        Ok(String::from_utf8_lossy(&self.decode_bytes(ids)?).into_owned())
    }

    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>, BpeError> {
        let mut bytes = Vec::with_capacity(ids.len() * 4);
        for &id in ids {
            let tok = self.vocab.token(id).ok_or(BpeError::IdOutOfRange { id, size: self.vocab.len() })?;
            for c in tok.chars() {
                match self.char_to_byte.get(&c) {
                    Some(&b) => bytes.push(b),
                    // Only reachable with hand-written vocabularies.
                    None => bytes.extend_from_slice(c.encode_utf8(&mut [0; 4]).as_bytes()),
                }
            }
        }
        Ok(bytes)
    }
}
