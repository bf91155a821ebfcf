use std::collections::HashMap;

use crate::corpus::TextDocument;
use crate::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const CTX: TokenId = 4;

/// Surface forms of the reserved ids, in id order.
pub const RESERVED: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<sep>", "<ctx>"];

/// Bijective token <-> id mapping. Ids `0..5` are reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Builds a vocabulary from an explicit list of non-reserved tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        let mut index = HashMap::with_capacity(all.len());
        for (id, tok) in all.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Usage(format!("invalid token {tok:?}")));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Usage(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_reserved(id: TokenId) -> bool {
        (id as usize) < RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Tokenizes corpus text. Reserved surface forms and unknown tokens are rejected.
    pub fn encode_text(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|tok| match self.id(tok) {
                Some(id) if !Self::is_reserved(id) => Ok(id),
                Some(_) => Err(Error::Usage(format!("reserved token {tok:?} in corpus text"))),
                None => Err(Error::Usage(format!("token {tok:?} not in vocabulary"))),
            })
            .collect()
    }

    /// Maps model output text back to ids. Unlike [`Vocab::encode_text`], reserved
    /// surface forms are accepted, since sampled sequences may contain them.
    pub fn encode_output(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|tok| {
                self.id(tok)
                    .ok_or_else(|| Error::Usage(format!("token {tok:?} not in vocabulary")))
            })
            .collect()
    }

    /// Joins tokens with single spaces. A trailing EOS is dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let ids = match ids.last() {
            Some(&EOS) => &ids[..ids.len() - 1],
            _ => ids,
        };
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`Vocab::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() {
            return Err(Error::parse(lines.len(), "vocabulary shorter than reserved block"));
        }
        for (i, want) in RESERVED.iter().enumerate() {
            if lines[i] != *want {
                return Err(Error::parse(i + 1, format!("expected reserved token {want}")));
            }
        }
        let mut seen = HashMap::new();
        for (i, line) in lines.iter().enumerate() {
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::parse(i + 1, "malformed token"));
            }
            if let Some(prev) = seen.insert(*line, i) {
                return Err(Error::parse(i + 1, format!("duplicate of line {}", prev + 1)));
            }
        }
        Self::from_tokens(lines[RESERVED.len()..].iter().copied())
    }
}

/// Keeps the `max_size` most frequent tokens over sources and references.
/// Ties are broken by lexicographic token order.
pub fn build_vocab(corpus: &[TextDocument], max_size: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for unit in &doc.units {
            for tok in unit.source.split_whitespace().chain(unit.reference.split_whitespace()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(tok, _)| !RESERVED.contains(tok))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocab::from_tokens(ranked.into_iter().map(|(tok, _)| tok))
}
