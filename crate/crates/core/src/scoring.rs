//! Deterministic proxy quality scorers.
//!
//! `s_score` is a character n-gram F-score (chrF, β = 2) standing in for a
//! sentence-level learned metric; `d_score` applies it to the current
//! sentence joined with its predecessor; `bleu_proxy` is a smoothed token
//! 4-gram precision score; `qe_score` is a noisy oracle used only for the
//! reranking analysis.

use std::collections::HashMap;
use std::hash::Hash;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Joins a sentence with its predecessor for document-level scoring.
pub const SEP_CHAR: char = '¦';

const CHRF_MAX_ORDER: usize = 6;
const CHRF_BETA: f64 = 2.0;
const BLEU_MAX_ORDER: usize = 4;

/// A score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QualityScore(f64);

impl QualityScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(QualityScore(value))
        } else {
            Err(Error::Numeric(format!("score {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    fn clamped(value: f64) -> Self {
        QualityScore(value.clamp(0.0, 1.0))
    }
}

impl TryFrom<f64> for QualityScore {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<QualityScore> for f64 {
    fn from(s: QualityScore) -> f64 {
        s.0
    }
}

/// Which score drives preference labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    SProxy,
    DProxy,
    #[default]
    SelectAvg,
    BleuProxy,
}

impl FromStr for MetricKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s_proxy" | "s" => Ok(MetricKind::SProxy),
            "d_proxy" | "d" => Ok(MetricKind::DProxy),
            "select_avg" | "avg" => Ok(MetricKind::SelectAvg),
            "bleu_proxy" | "bleu" => Ok(MetricKind::BleuProxy),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::SProxy => "s_proxy",
            MetricKind::DProxy => "d_proxy",
            MetricKind::SelectAvg => "select_avg",
            MetricKind::BleuProxy => "bleu_proxy",
        })
    }
}

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches<T: Hash + Eq>(hyp: &HashMap<&[T], usize>, reference: &HashMap<&[T], usize>) -> usize {
    hyp.iter()
        .map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

fn require_reference(reference: &str) -> Result<()> {
    if reference.chars().all(char::is_whitespace) {
        return Err(Error::Usage("empty reference".into()));
    }
    Ok(())
}

/// Character n-gram F-score, whitespace ignored. Averages F_n over the
/// orders for which the reference has at least one n-gram.
pub fn s_score(hyp: &str, reference: &str) -> Result<QualityScore> {
    require_reference(reference)?;
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if h.is_empty() {
        return Ok(QualityScore(0.0));
    }
    let beta2 = CHRF_BETA * CHRF_BETA;
    let mut sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=CHRF_MAX_ORDER.min(r.len()) {
        let rc = ngram_counts(&r, n);
        let hc = ngram_counts(&h, n);
        let ref_total = r.len() + 1 - n;
        let hyp_total = h.len().saturating_sub(n - 1);
        let m = clipped_matches(&hc, &rc) as f64;
        let p = if hyp_total == 0 { 0.0 } else { m / hyp_total as f64 };
        let rec = m / ref_total as f64;
        sum += if p + rec == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * p * rec / (beta2 * p + rec)
        };
        orders += 1;
    }
    Ok(QualityScore::clamped(sum / orders as f64))
}

/// `s_score` over the sentence joined to its predecessor. Without a
/// predecessor this is exactly `s_score(hyp, reference)`.
pub fn d_score(
    hyp: &str,
    reference: &str,
    prev_hyp: Option<&str>,
    prev_ref: Option<&str>,
) -> Result<QualityScore> {
    require_reference(reference)?;
    if prev_hyp.is_none() && prev_ref.is_none() {
        return s_score(hyp, reference);
    }
    let join = |prev: Option<&str>, cur: &str| format!("{}{SEP_CHAR}{cur}", prev.unwrap_or(""));
    s_score(&join(prev_hyp, hyp), &join(prev_ref, reference))
}

/// Smoothed token 4-gram precision with brevity penalty.
///
/// Unigram precision is unsmoothed; orders 2..4 use add-one smoothing on
/// both matched and total counts.
pub fn bleu_proxy(hyp: &str, reference: &str) -> Result<QualityScore> {
    require_reference(reference)?;
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if h.is_empty() {
        return Ok(QualityScore(0.0));
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_ORDER {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let m = clipped_matches(&hc, &rc) as f64;
        let total = h.len().saturating_sub(n - 1) as f64;
        let p = if n == 1 { m / total } else { (m + 1.0) / (total + 1.0) };
        if p == 0.0 {
            return Ok(QualityScore(0.0));
        }
        log_sum += p.ln();
    }
    let bp = (1.0 - r.len() as f64 / h.len() as f64).min(0.0).exp();
    Ok(QualityScore::clamped(bp * (log_sum / BLEU_MAX_ORDER as f64).exp()))
}

/// The inputs a selection score needs for one candidate.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub hyp: &'a str,
    pub reference: &'a str,
    pub prev_hyp: Option<&'a str>,
    pub prev_ref: Option<&'a str>,
}

/// All four proxy scores of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub s: QualityScore,
    pub d: QualityScore,
    pub select: QualityScore,
    pub bleu: QualityScore,
}

pub fn score_card(input: ScoreInput<'_>) -> Result<ScoreCard> {
    let s = s_score(input.hyp, input.reference)?;
    let d = d_score(input.hyp, input.reference, input.prev_hyp, input.prev_ref)?;
    Ok(ScoreCard {
        s,
        d,
        select: QualityScore::clamped((s.0 + d.0) / 2.0),
        bleu: bleu_proxy(input.hyp, input.reference)?,
    })
}

impl ScoreCard {
    pub fn get(&self, kind: MetricKind) -> QualityScore {
        match kind {
            MetricKind::SProxy => self.s,
            MetricKind::DProxy => self.d,
            MetricKind::SelectAvg => self.select,
            MetricKind::BleuProxy => self.bleu,
        }
    }
}

/// `(s + d) / 2` for [`MetricKind::SelectAvg`], otherwise the single chosen metric.
pub fn selection_score(kind: MetricKind, input: ScoreInput<'_>) -> Result<QualityScore> {
    match kind {
        MetricKind::SProxy => s_score(input.hyp, input.reference),
        MetricKind::DProxy => d_score(input.hyp, input.reference, input.prev_hyp, input.prev_ref),
        MetricKind::BleuProxy => bleu_proxy(input.hyp, input.reference),
        MetricKind::SelectAvg => Ok(score_card(input)?.select),
    }
}

/// Reference-free quality estimate, simulated as `s_score` plus Gaussian
/// noise of standard deviation `sigma`, clamped to `[0, 1]`. A proxy: it
/// still looks at the reference.
pub fn qe_score<R: Rng + ?Sized>(hyp: &str, reference: &str, sigma: f64, rng: &mut R) -> Result<QualityScore> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("qe sigma {sigma} must be finite and >= 0")));
    }
    let base = s_score(hyp, reference)?.0;
    if sigma == 0.0 {
        return Ok(QualityScore(base));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(QualityScore::clamped(base + noise.sample(rng)))
}
