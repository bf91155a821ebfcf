//! Document-aware corpus model, tokenization and context windows.
//!
//! Text flows in two layers. [`TextDocument`] holds whitespace-tokenized
//! strings as read from JSONL or produced by the synthetic generator;
//! [`Document`] holds the same units encoded against a [`Vocab`].

mod synthetic;
mod vocab;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use synthetic::{gen_synthetic_corpus, SynthConfig, SyntheticLexicon, SyntheticCorpus};
pub use vocab::{build_vocab, TokenId, Vocab, BOS, CTX, EOS, PAD, RESERVED, SEP};

use crate::{Error, Result};

/// Context budget used for ingested corpora.
pub const DEFAULT_CONTEXT_TOKENS: usize = 256;

/// One line of the corpus JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextUnit {
    pub doc_id: String,
    pub index: usize,
    pub source: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextDocument {
    pub doc_id: String,
    pub units: Vec<TextUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceUnit {
    pub doc_id: String,
    pub index: usize,
    pub source: Vec<TokenId>,
    pub reference: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub units: Vec<SentenceUnit>,
}

/// Suffix of the preceding source text of a document, at most `K` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextWindow {
    pub tokens: Vec<TokenId>,
    pub truncated: bool,
}

/// The last `min(k, total)` tokens of `source_0 ⊕ … ⊕ source_{index-1}`.
pub fn extract_context(doc: &Document, index: usize, k: usize) -> Result<ContextWindow> {
    if index >= doc.units.len() {
        return Err(Error::Usage(format!(
            "unit index {index} out of range for document {} with {} units",
            doc.doc_id,
            doc.units.len()
        )));
    }
    let mut tokens = Vec::with_capacity(k);
    let mut total = 0usize;
    // Walk backwards so long documents never get concatenated in full.
    for unit in doc.units[..index].iter().rev() {
        total += unit.source.len();
        if tokens.len() < k {
            let take = (k - tokens.len()).min(unit.source.len());
            tokens.extend(unit.source[unit.source.len() - take..].iter().rev());
        }
    }
    tokens.reverse();
    Ok(ContextWindow {
        tokens,
        truncated: total > k,
    })
}

/// Parses corpus JSONL, groups records into documents and validates keys.
///
/// Records may appear in any order. Duplicate `(doc_id, index)` keys, gaps in
/// a document's indices and empty sentences are rejected with the offending
/// line number.
pub fn parse_corpus_jsonl(text: &str) -> Result<Vec<TextDocument>> {
    let mut grouped: BTreeMap<String, BTreeMap<usize, (usize, TextUnit)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let unit: TextUnit =
            serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if unit.doc_id.is_empty() {
            return Err(Error::parse(lineno, "empty doc_id"));
        }
        for (field, value) in [("source", &unit.source), ("reference", &unit.reference)] {
            if value.split_whitespace().next().is_none() {
                return Err(Error::parse(lineno, format!("empty {field}")));
            }
            if let Some(tok) = value.split_whitespace().find(|t| RESERVED.contains(t)) {
                return Err(Error::parse(lineno, format!("reserved token {tok} in {field}")));
            }
        }
        let doc = grouped.entry(unit.doc_id.clone()).or_default();
        if let Some((first, _)) = doc.get(&unit.index) {
            return Err(Error::parse(
                lineno,
                format!(
                    "duplicate key ({}, {}) first seen on line {first}",
                    unit.doc_id, unit.index
                ),
            ));
        }
        doc.insert(unit.index, (lineno, unit));
    }
    let mut docs = Vec::with_capacity(grouped.len());
    for (doc_id, units) in grouped {
        let mut out = Vec::with_capacity(units.len());
        for (expected, (index, (lineno, unit))) in units.into_iter().enumerate() {
            if index != expected {
                return Err(Error::parse(
                    lineno,
                    format!("document {doc_id} is missing index {expected}"),
                ));
            }
            out.push(unit);
        }
        docs.push(TextDocument { doc_id, units: out });
    }
    Ok(docs)
}

/// Canonical serialization: documents in order, units in index order, one
/// compact JSON record per line.
pub fn corpus_to_jsonl(docs: &[TextDocument]) -> String {
    let mut out = String::new();
    for unit in docs.iter().flat_map(|d| &d.units) {
        out.push_str(&serde_json::to_string(unit).expect("text units always serialize"));
        out.push('\n');
    }
    out
}

pub fn encode_corpus(docs: &[TextDocument], vocab: &Vocab) -> Result<Vec<Document>> {
    docs.iter()
        .map(|doc| {
            let units = doc
                .units
                .iter()
                .map(|u| {
                    let source = vocab.encode_text(&u.source)?;
                    let reference = vocab.encode_text(&u.reference)?;
                    Ok(SentenceUnit {
                        doc_id: u.doc_id.clone(),
                        index: u.index,
                        source,
                        reference,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Usage(format!("document {}: {e}", doc.doc_id)))?;
            Ok(Document {
                doc_id: doc.doc_id.clone(),
                units,
            })
        })
        .collect()
}

/// Deterministically partitions documents into consecutive groups with the
/// given fractions. The last group receives the rounding remainder.
pub fn split_documents(
    docs: &[TextDocument],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<TextDocument>>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) || (total - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0usize;
    for (i, f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() {
            docs.len()
        } else {
            (start + (f * docs.len() as f64).round() as usize).min(docs.len())
        };
        let mut part: Vec<TextDocument> = order[start..end].iter().map(|&j| docs[j].clone()).collect();
        part.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        out.push(part);
        start = end;
    }
    Ok(out)
}

/// Checks corpus-wide key uniqueness and per-document index contiguity.
pub fn validate_documents(docs: &[TextDocument]) -> Result<()> {
    let mut seen = HashSet::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::Usage(format!("duplicate document {}", doc.doc_id)));
        }
        for (i, u) in doc.units.iter().enumerate() {
            if u.index != i || u.doc_id != doc.doc_id {
                return Err(Error::Usage(format!(
                    "document {} has unit ({}, {}) at position {i}",
                    doc.doc_id, u.doc_id, u.index
                )));
            }
        }
    }
    Ok(())
}
