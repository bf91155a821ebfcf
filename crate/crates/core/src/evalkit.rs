//! Evaluation and analysis: per-condition decoding and scoring, oracle
//! selection, Δ-bins, reranking and the gold-vs-random context experiment.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_context, Document, SyntheticLexicon, TextDocument, TokenId, Vocab};
use crate::pairs::UnitKey;
use crate::policy::{self, Condition, ConditionKind, PolicyParams};
use crate::scoring::{d_score, qe_score, s_score, QualityScore};
use crate::trainer::UnitInputs;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sampled { seed: u64, temperature: f64 },
}

/// Decodes every unit under one condition. Sampled mode gives each unit its
/// own ChaCha stream.
pub fn decode(
    params: &PolicyParams,
    units: &[UnitInputs],
    condition: ConditionKind,
    mode: DecodeMode,
    max_len: usize,
) -> Result<Vec<Vec<TokenId>>> {
    units
        .par_iter()
        .enumerate()
        .map(|(i, u)| match mode {
            DecodeMode::Greedy => policy::greedy(params, u.condition(condition), max_len),
            DecodeMode::Sampled { seed, temperature } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                policy::sample(params, u.condition(condition), temperature, max_len, &mut rng)
            }
        })
        .collect()
}

/// Both conditions' greedy outputs for one unit, with their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub unit_key: UnitKey,
    pub reference: String,
    pub hyp_sent: String,
    pub hyp_ctx: String,
    pub s_sent: QualityScore,
    pub s_ctx: QualityScore,
    pub d_sent: QualityScore,
    pub d_ctx: QualityScore,
    /// `log p(hyp | input)` under the hypothesis's own condition, EOS included.
    pub lp_sent: f64,
    pub lp_ctx: f64,
    /// Output lengths in tokens, EOS included.
    pub len_sent: usize,
    pub len_ctx: usize,
}

/// Per-row score used by the analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowMetric {
    #[default]
    S,
    D,
}

impl FromStr for RowMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" | "s_proxy" => Ok(RowMetric::S),
            "d" | "d_proxy" => Ok(RowMetric::D),
            other => Err(Error::Config(format!("unknown row metric {other:?}"))),
        }
    }
}

impl EvalRow {
    /// `(sent, ctx)` scores under `metric`.
    pub fn scores(&self, metric: RowMetric) -> (f64, f64) {
        match metric {
            RowMetric::S => (self.s_sent.value(), self.s_ctx.value()),
            RowMetric::D => (self.d_sent.value(), self.d_ctx.value()),
        }
    }

    /// Context-aware minus sentence-level score.
    pub fn delta(&self, metric: RowMetric) -> f64 {
        let (s, c) = self.scores(metric);
        c - s
    }
}

/// Greedy-decodes both conditions and scores them. The document-level score
/// of a hypothesis pairs it with the previous sentence's hypothesis from the
/// same condition.
pub fn eval_rows(params: &PolicyParams, units: &[UnitInputs], vocab: &Vocab, max_len: usize) -> Result<Vec<EvalRow>> {
    let outputs: Vec<[(String, f64, usize); 2]> = units
        .par_iter()
        .map(|u| {
            let one = |kind| -> Result<(String, f64, usize)> {
                let y = policy::greedy(params, u.condition(kind), max_len)?;
                let lp = policy::log_prob(params, u.condition(kind), &y)?;
                Ok((vocab.decode(&y), lp, y.len()))
            };
            Ok([one(ConditionKind::SentOnly)?, one(ConditionKind::WithContext)?])
        })
        .collect::<Result<_>>()?;
    let position: HashMap<&UnitKey, usize> = units.iter().enumerate().map(|(i, u)| (&u.key, i)).collect();
    units
        .par_iter()
        .zip(&outputs)
        .map(|(u, [(hs, ls, ns), (hc, lc, nc)])| {
            let prev = u.key.index.checked_sub(1).and_then(|j| {
                position.get(&UnitKey {
                    doc_id: u.key.doc_id.clone(),
                    index: j,
                })
            });
            let prev_ref = u.prev_reference_text.as_deref();
            let prev_hyp = |slot: usize| prev.map(|&p| outputs[p][slot].0.as_str());
            Ok(EvalRow {
                unit_key: u.key.clone(),
                reference: u.reference_text.clone(),
                s_sent: s_score(hs, &u.reference_text)?,
                s_ctx: s_score(hc, &u.reference_text)?,
                d_sent: d_score(hs, &u.reference_text, prev_hyp(0), prev_ref)?,
                d_ctx: d_score(hc, &u.reference_text, prev_hyp(1), prev_ref)?,
                hyp_sent: hs.clone(),
                hyp_ctx: hc.clone(),
                lp_sent: *ls,
                lp_ctx: *lc,
                len_sent: *ns,
                len_ctx: *nc,
            })
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("doc_id,index,s_sent,s_ctx,d_sent,d_ctx,lp_sent,lp_ctx,hyp_sent,hyp_ctx\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{}",
            csv_field(&r.unit_key.doc_id),
            r.unit_key.index,
            r.s_sent.value(),
            r.s_ctx.value(),
            r.d_sent.value(),
            r.d_ctx.value(),
            r.lp_sent,
            r.lp_ctx,
            csv_field(&r.hyp_sent),
            csv_field(&r.hyp_ctx)
        );
    }
    out
}

fn nonempty(rows: &[EvalRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Usage("no evaluation rows".into()));
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub n: usize,
    pub mean_s_sent: f64,
    pub mean_s_ctx: f64,
    pub mean_d_sent: f64,
    pub mean_d_ctx: f64,
}

pub fn corpus_eval(rows: &[EvalRow]) -> Result<CorpusSummary> {
    nonempty(rows)?;
    Ok(CorpusSummary {
        n: rows.len(),
        mean_s_sent: mean(rows.iter().map(|r| r.s_sent.value())),
        mean_s_ctx: mean(rows.iter().map(|r| r.s_ctx.value())),
        mean_d_sent: mean(rows.iter().map(|r| r.d_sent.value())),
        mean_d_ctx: mean(rows.iter().map(|r| r.d_ctx.value())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub metric: RowMetric,
    pub mean_sent: f64,
    pub mean_ctx: f64,
    pub mean_oracle: f64,
    /// Rows where the context-aware score is strictly higher.
    pub ctx_wins: usize,
    /// Rows where the sentence-level score is strictly higher.
    pub sent_wins: usize,
}

/// Per row, the better of the two conditions' scores.
pub fn oracle_select(rows: &[EvalRow], metric: RowMetric) -> Result<OracleSummary> {
    nonempty(rows)?;
    Ok(OracleSummary {
        metric,
        mean_sent: mean(rows.iter().map(|r| r.scores(metric).0)),
        mean_ctx: mean(rows.iter().map(|r| r.scores(metric).1)),
        mean_oracle: mean(rows.iter().map(|r| {
            let (s, c) = r.scores(metric);
            s.max(c)
        })),
        ctx_wins: rows.iter().filter(|r| r.delta(metric) > 0.0).count(),
        sent_wins: rows.iter().filter(|r| r.delta(metric) < 0.0).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeltaBin {
    #[serde(rename = "CB")]
    ClearlyBetter,
    #[serde(rename = "B")]
    Better,
    #[serde(rename = "P")]
    OnPar,
    #[serde(rename = "W")]
    Worse,
    #[serde(rename = "CW")]
    ClearlyWorse,
}

impl DeltaBin {
    pub const ALL: [DeltaBin; 5] = [
        DeltaBin::ClearlyBetter,
        DeltaBin::Better,
        DeltaBin::OnPar,
        DeltaBin::Worse,
        DeltaBin::ClearlyWorse,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DeltaBin::ClearlyBetter => "CB",
            DeltaBin::Better => "B",
            DeltaBin::OnPar => "P",
            DeltaBin::Worse => "W",
            DeltaBin::ClearlyWorse => "CW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaThresholds {
    pub t1: f64,
    pub t2: f64,
}

impl DeltaThresholds {
    /// Thresholds given on a 0–100 score scale, mapped onto `[0, 1]`.
    pub fn from_percent_scale(t1: f64, t2: f64) -> Result<Self> {
        let t = DeltaThresholds {
            t1: t1 / 100.0,
            t2: t2 / 100.0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t1 && self.t1 < self.t2) {
            return Err(Error::Config(format!(
                "delta thresholds need 0 < t1 < t2, got {} and {}",
                self.t1, self.t2
            )));
        }
        Ok(())
    }
}

impl Default for DeltaThresholds {
    /// 0.5 and 1.0 points on the 0–100 scale.
    fn default() -> Self {
        DeltaThresholds { t1: 0.005, t2: 0.01 }
    }
}

pub fn bin_of(delta: f64, t: DeltaThresholds) -> DeltaBin {
    if delta >= t.t2 {
        DeltaBin::ClearlyBetter
    } else if delta >= t.t1 {
        DeltaBin::Better
    } else if delta > -t.t1 {
        DeltaBin::OnPar
    } else if delta > -t.t2 {
        DeltaBin::Worse
    } else {
        DeltaBin::ClearlyWorse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBins {
    pub thresholds: DeltaThresholds,
    pub n: usize,
    /// Counts in `CB, B, P, W, CW` order.
    pub counts: [usize; 5],
    pub fractions: [f64; 5],
}

impl DeltaBins {
    pub fn fraction(&self, bin: DeltaBin) -> f64 {
        self.fractions[DeltaBin::ALL.iter().position(|b| *b == bin).expect("listed")]
    }

    /// Bar-chart data.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,fraction\n");
        for (i, b) in DeltaBin::ALL.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:?}", b.label(), self.counts[i], self.fractions[i]);
        }
        out
    }
}

pub fn delta_bins(rows: &[EvalRow], metric: RowMetric, t: DeltaThresholds) -> Result<DeltaBins> {
    nonempty(rows)?;
    t.validate()?;
    let mut counts = [0usize; 5];
    for r in rows {
        let b = bin_of(r.delta(metric), t);
        counts[DeltaBin::ALL.iter().position(|x| *x == b).expect("listed")] += 1;
    }
    Ok(DeltaBins {
        thresholds: t,
        n: rows.len(),
        counts,
        fractions: counts.map(|c| c as f64 / rows.len() as f64),
    })
}

/// Histogram data for the Δ distribution: `bins` equal-width buckets over `[-1, 1]`.
pub fn delta_histogram_csv(rows: &[EvalRow], metric: RowMetric, bins: usize) -> Result<String> {
    nonempty(rows)?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for r in rows {
        let i = ((r.delta(metric) + 1.0) / width).floor() as usize;
        counts[i.min(bins - 1)] += 1;
    }
    let mut out = String::from("lo,hi,count\n");
    for (i, c) in counts.iter().enumerate() {
        let lo = -1.0 + i as f64 * width;
        let _ = writeln!(out, "{:?},{:?},{}", lo, lo + width, c);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "lowercase")]
pub enum RerankStrategy {
    /// Higher model log-probability.
    Prob,
    /// Higher noisy reference-free estimate.
    Qe { sigma: f64, seed: u64 },
    /// Higher reference-based score.
    Oracle,
    /// Fair coin per row.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankSummary {
    pub strategy: RerankStrategy,
    pub length_norm: bool,
    pub mean_selected: f64,
    pub ctx_fraction: f64,
}

/// Picks one hypothesis per row; ties go to the sentence-level output.
/// The reported mean is over `metric` scores of the picks.
pub fn rerank(rows: &[EvalRow], strategy: RerankStrategy, length_norm: bool, metric: RowMetric) -> Result<RerankSummary> {
    nonempty(rows)?;
    let mut rng = match strategy {
        RerankStrategy::Qe { seed, .. } | RerankStrategy::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut picked_ctx = 0usize;
    let mut total = 0.0;
    for r in rows {
        let take_ctx = match strategy {
            RerankStrategy::Prob => {
                let (a, b) = if length_norm {
                    (r.lp_sent / r.len_sent as f64, r.lp_ctx / r.len_ctx as f64)
                } else {
                    (r.lp_sent, r.lp_ctx)
                };
                b > a
            }
            RerankStrategy::Qe { sigma, .. } => {
                let rng = rng.as_mut().expect("seeded");
                let a = qe_score(&r.hyp_sent, &r.reference, sigma, rng)?.value();
                let b = qe_score(&r.hyp_ctx, &r.reference, sigma, rng)?.value();
                b > a
            }
            RerankStrategy::Oracle => {
                let (a, b) = r.scores(metric);
                b > a
            }
            RerankStrategy::Random { .. } => rng.as_mut().expect("seeded").random_bool(0.5),
        };
        let (s, c) = r.scores(metric);
        if take_ctx {
            picked_ctx += 1;
            total += c;
        } else {
            total += s;
        }
    }
    Ok(RerankSummary {
        strategy,
        length_norm,
        mean_selected: total / rows.len() as f64,
        ctx_fraction: picked_ctx as f64 / rows.len() as f64,
    })
}

/// Sentences carrying an ambiguous token, past the first sentence of their
/// document: the ones whose translation depends on the context.
pub fn context_dependent_keys(docs: &[TextDocument], lexicon: &SyntheticLexicon) -> BTreeSet<UnitKey> {
    keys_where(docs, |u| u.index >= 1 && lexicon.is_ambiguous(&u.source))
}

pub fn non_ambiguous_keys(docs: &[TextDocument], lexicon: &SyntheticLexicon) -> BTreeSet<UnitKey> {
    keys_where(docs, |u| !lexicon.is_ambiguous(&u.source))
}

fn keys_where(docs: &[TextDocument], keep: impl Fn(&crate::corpus::TextUnit) -> bool) -> BTreeSet<UnitKey> {
    docs.iter()
        .flat_map(|d| &d.units)
        .filter(|u| keep(u))
        .map(|u| UnitKey {
            doc_id: u.doc_id.clone(),
            index: u.index,
        })
        .collect()
}

pub fn restrict_rows(rows: &[EvalRow], keys: &BTreeSet<UnitKey>) -> Vec<EvalRow> {
    rows.iter().filter(|r| keys.contains(&r.unit_key)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub n: usize,
    /// Mean s-proxy with the document's own context.
    pub gold: f64,
    /// Mean s-proxy with the context of a different, randomly drawn document.
    pub random: f64,
    pub sent: f64,
}

/// Context-aware decoding under gold and foreign context, against
/// sentence-level decoding, on the units in `subset`.
///
/// The foreign window is taken from a uniformly drawn other document at the
/// same position (or its last sentence, if shorter).
pub fn context_robustness(
    params: &PolicyParams,
    docs: &[Document],
    vocab: &Vocab,
    subset: &BTreeSet<UnitKey>,
    k: usize,
    seed: u64,
    max_len: usize,
) -> Result<RobustnessSummary> {
    if docs.len() < 2 {
        return Err(Error::Usage("foreign context needs at least two documents".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for (di, doc) in docs.iter().enumerate() {
        for (i, u) in doc.units.iter().enumerate() {
            let key = UnitKey {
                doc_id: doc.doc_id.clone(),
                index: u.index,
            };
            if !subset.contains(&key) {
                continue;
            }
            let mut other = rng.random_range(0..docs.len() - 1);
            if other >= di {
                other += 1;
            }
            let od = &docs[other];
            let gold = extract_context(doc, i, k)?;
            let foreign = extract_context(od, i.min(od.units.len() - 1), k)?;
            jobs.push((u, gold, foreign));
        }
    }
    if jobs.is_empty() {
        return Err(Error::Usage("robustness subset is empty".into()));
    }
    let scores: Vec<[f64; 3]> = jobs
        .par_iter()
        .map(|(u, gold, foreign)| {
            let reference = vocab.decode(&u.reference);
            let run = |cond: Condition| -> Result<f64> {
                let y = policy::greedy(params, &cond, max_len)?;
                Ok(s_score(&vocab.decode(&y), &reference)?.value())
            };
            Ok([
                run(Condition::from_window(ConditionKind::WithContext, u.source.clone(), gold)?)?,
                run(Condition::from_window(ConditionKind::WithContext, u.source.clone(), foreign)?)?,
                run(Condition::sent_only(u.source.clone())?)?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(RobustnessSummary {
        n: scores.len(),
        gold: mean(scores.iter().map(|s| s[0])),
        random: mean(scores.iter().map(|s| s[1])),
        sent: mean(scores.iter().map(|s| s[2])),
    })
}

/// Fraction of hypotheses equal to their expected strings.
pub fn exact_match_rate<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    let (hit, n) = pairs
        .into_iter()
        .fold((0usize, 0usize), |(h, n), (a, b)| (h + usize::from(a == b), n + 1));
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}
