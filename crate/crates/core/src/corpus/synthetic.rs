//! Synthetic context-dependent translation task.
//!
//! Every source token has exactly one translation except the ambiguous
//! tokens, whose translation is one of `senses` words selected by the
//! document's topic. The topic token sits in the first sentence of each
//! document, so a context-aware system can resolve ambiguity and a
//! sentence-level one cannot.
//!
//! Source sentences are sets of distinct tokens listed in lexicon order, and
//! references follow the same order. The model pools its input into a bag, so
//! a canonical order is what makes the task learnable at all.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TextDocument, TextUnit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Sentence length in tokens, topic and ambiguous tokens included.
    pub min_len: usize,
    pub max_len: usize,
    pub n_plain: usize,
    pub n_ambiguous: usize,
    /// Senses per ambiguous token; also the number of topics.
    pub senses: usize,
    /// Fraction of sentences carrying an ambiguous token.
    pub rho: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 2000,
            min_sentences: 4,
            max_sentences: 4,
            min_len: 6,
            max_len: 7,
            n_plain: 20,
            n_ambiguous: 4,
            senses: 4,
            rho: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if self.n_docs == 0 || self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return bad("need n_docs >= 1 and 1 <= min_sentences <= max_sentences");
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return bad("need 2 <= min_len <= max_len");
        }
        if self.senses < 2 || (self.rho > 0.0 && self.n_ambiguous == 0) {
            return bad("need senses >= 2 and at least one ambiguous token when rho > 0");
        }
        // Topic + ambiguous + plain fillers must fit without repeats.
        if self.n_plain + 2 < self.max_len {
            return bad("n_plain too small for max_len distinct tokens");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SourceKind {
    Plain(usize),
    Ambiguous(usize),
    Topic(usize),
}

/// The ground-truth dictionary of a synthetic corpus, doubling as a
/// rule-based reference translator.
#[derive(Debug, Clone)]
pub struct SyntheticLexicon {
    senses: usize,
    /// Source tokens in canonical sentence order.
    order: Vec<(String, SourceKind)>,
    rank: HashMap<String, (usize, SourceKind)>,
    plain_words: Vec<String>,
    topic_words: Vec<String>,
    /// `sense_words[b][k]`: translation of ambiguous token `b` under topic `k`.
    sense_words: Vec<Vec<String>>,
}

fn pseudo_word(i: usize) -> String {
    const CONS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = CONS.len() * VOWELS.len();
    let space = syllables.pow(3);
    // 7919 is coprime with the syllable space, so the map is injective.
    let mut code = (i * 7919 + 1013) % space;
    let mut word = String::with_capacity(6);
    for _ in 0..3 {
        let s = code % syllables;
        code /= syllables;
        word.push(CONS[s / VOWELS.len()] as char);
        word.push(VOWELS[s % VOWELS.len()] as char);
    }
    word
}

impl SyntheticLexicon {
    /// The dictionary implied by `cfg`; it does not depend on the corpus seed.
    pub fn new(cfg: &SynthConfig) -> Self {
        let mut order = Vec::new();
        for k in 0..cfg.senses {
            order.push((format!("T{k}"), SourceKind::Topic(k)));
        }
        // Spread ambiguous tokens evenly through the plain ones.
        let stride = (cfg.n_plain / cfg.n_ambiguous.max(1)).max(1);
        let mut amb = 0;
        for p in 0..cfg.n_plain {
            if amb < cfg.n_ambiguous && p % stride == stride / 2 {
                order.push((format!("A{amb}"), SourceKind::Ambiguous(amb)));
                amb += 1;
            }
            order.push((format!("S{p}"), SourceKind::Plain(p)));
        }
        while amb < cfg.n_ambiguous {
            order.push((format!("A{amb}"), SourceKind::Ambiguous(amb)));
            amb += 1;
        }
        let mut next_word = 0usize;
        let mut word = || {
            next_word += 1;
            pseudo_word(next_word)
        };
        let plain_words = (0..cfg.n_plain).map(|_| word()).collect();
        let topic_words = (0..cfg.senses).map(|_| word()).collect();
        let sense_words = (0..cfg.n_ambiguous)
            .map(|_| (0..cfg.senses).map(|_| word()).collect())
            .collect();
        let rank = order
            .iter()
            .enumerate()
            .map(|(i, (tok, kind))| (tok.clone(), (i, *kind)))
            .collect();
        SyntheticLexicon {
            senses: cfg.senses,
            order,
            rank,
            plain_words,
            topic_words,
            sense_words,
        }
    }

    pub fn senses(&self) -> usize {
        self.senses
    }

    fn word(&self, kind: SourceKind, topic: usize) -> &str {
        match kind {
            SourceKind::Plain(p) => &self.plain_words[p],
            SourceKind::Topic(k) => &self.topic_words[k],
            SourceKind::Ambiguous(b) => &self.sense_words[b][topic],
        }
    }

    fn kinds<'a>(&'a self, source: &'a str) -> impl Iterator<Item = Option<SourceKind>> + 'a {
        source
            .split_whitespace()
            .map(|tok| self.rank.get(tok).map(|(_, kind)| *kind))
    }

    /// Whether the sentence contains an ambiguous token.
    pub fn is_ambiguous(&self, source: &str) -> bool {
        self.kinds(source)
            .any(|k| matches!(k, Some(SourceKind::Ambiguous(_))))
    }

    /// Topic of a document, read from the topic token in its first sentence.
    pub fn document_topic(&self, doc: &TextDocument) -> Option<usize> {
        doc.units.first().and_then(|u| {
            self.kinds(&u.source).find_map(|k| match k {
                Some(SourceKind::Topic(t)) => Some(t),
                _ => None,
            })
        })
    }

    fn translate_with(&self, source: &str, topic: usize) -> String {
        self.kinds(source)
            .map(|k| k.map_or("<unk>", |k| self.word(k, topic)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Translation with access to the whole document.
    pub fn translate_in_document(&self, doc: &TextDocument, index: usize) -> String {
        let topic = self.document_topic(doc).unwrap_or(0);
        self.translate_with(&doc.units[index].source, topic)
    }

    /// Translation of the sentence alone. Topic tokens carry document-level
    /// meaning, so without the document every ambiguous token receives its
    /// first sense.
    pub fn translate_sentence(&self, source: &str) -> String {
        self.translate_with(source, 0)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub docs: Vec<TextDocument>,
    pub lexicon: SyntheticLexicon,
}

/// Generates a synthetic corpus; a pure function of `(cfg, seed)`.
pub fn gen_synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let lexicon = SyntheticLexicon::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let shapes: Vec<(usize, Vec<usize>)> = (0..cfg.n_docs)
        .map(|_| {
            let topic = rng.random_range(0..cfg.senses);
            let n = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
            let lens = (0..n)
                .map(|_| rng.random_range(cfg.min_len..=cfg.max_len))
                .collect();
            (topic, lens)
        })
        .collect();

    let total: usize = shapes.iter().map(|(_, l)| l.len()).sum();
    let n_amb = (cfg.rho * total as f64).round() as usize;
    let mut flags = vec![false; total];
    flags[..n_amb].iter_mut().for_each(|f| *f = true);
    flags.shuffle(&mut rng);

    let plain: Vec<usize> = lexicon
        .order
        .iter()
        .enumerate()
        .filter(|(_, (_, k))| matches!(k, SourceKind::Plain(_)))
        .map(|(i, _)| i)
        .collect();
    let ambiguous: Vec<usize> = lexicon
        .order
        .iter()
        .enumerate()
        .filter(|(_, (_, k))| matches!(k, SourceKind::Ambiguous(_)))
        .map(|(i, _)| i)
        .collect();

    let mut flag_iter = flags.into_iter();
    let docs = shapes
        .into_iter()
        .enumerate()
        .map(|(d, (topic, lens))| {
            let doc_id = format!("doc{d:05}");
            let units = lens
                .into_iter()
                .enumerate()
                .map(|(index, len)| {
                    let mut slots = Vec::with_capacity(len);
                    if index == 0 {
                        slots.push(topic); // topic tokens occupy the first slots
                    }
                    if flag_iter.next().unwrap_or(false) {
                        slots.push(*ambiguous.choose(&mut rng).expect("validated non-empty"));
                    }
                    let fill = len.saturating_sub(slots.len());
                    slots.extend(plain.choose_multiple(&mut rng, fill).copied());
                    slots.sort_unstable();
                    let source = slots
                        .iter()
                        .map(|&s| lexicon.order[s].0.as_str())
                        .collect::<Vec<_>>()
                        .join(" ");
                    let reference = lexicon.translate_with(&source, topic);
                    TextUnit {
                        doc_id: doc_id.clone(),
                        index,
                        source,
                        reference,
                    }
                })
                .collect();
            TextDocument { doc_id, units }
        })
        .collect();

    Ok(SyntheticCorpus { docs, lexicon })
}
