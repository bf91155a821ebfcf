//! Preference pair construction from sampled candidate sets.
//!
//! Each unit has four candidates, two sampled per condition. Within a
//! condition the higher-scoring candidate is preferred ([`label_intra`]).
//! Across conditions the single best of the four is paired against both
//! candidates of the other condition ([`build_cross_pairs`]). Every pair then
//! goes through the same length / quality / margin filter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::policy::ConditionKind;
use crate::scoring::{QualityScore, ScoreCard};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitKey {
    pub doc_id: String,
    pub index: usize,
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub condition: ConditionKind,
    /// Detokenized output, EOS stripped.
    pub text: String,
    /// Selection score; `None` until scored.
    pub score: Option<QualityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub card: Option<ScoreCard>,
}

/// Exactly four candidates: two per condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCandidateSet", into = "RawCandidateSet")]
pub struct CandidateSet {
    unit_key: UnitKey,
    cands: Vec<Candidate>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCandidateSet {
    unit_key: UnitKey,
    cands: Vec<Candidate>,
}

impl TryFrom<RawCandidateSet> for CandidateSet {
    type Error = Error;
    fn try_from(raw: RawCandidateSet) -> Result<Self> {
        CandidateSet::new(raw.unit_key, raw.cands)
    }
}

impl From<CandidateSet> for RawCandidateSet {
    fn from(set: CandidateSet) -> Self {
        RawCandidateSet {
            unit_key: set.unit_key,
            cands: set.cands,
        }
    }
}

impl CandidateSet {
    pub fn new(unit_key: UnitKey, cands: Vec<Candidate>) -> Result<Self> {
        let n_s = cands
            .iter()
            .filter(|c| c.condition == ConditionKind::SentOnly)
            .count();
        if cands.len() != 4 || n_s != 2 {
            return Err(Error::Usage(format!(
                "candidate set {unit_key} needs two candidates per condition"
            )));
        }
        Ok(CandidateSet { unit_key, cands })
    }

    pub fn unit_key(&self) -> &UnitKey {
        &self.unit_key
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.cands
    }

    pub fn is_scored(&self) -> bool {
        self.cands.iter().all(|c| c.score.is_some())
    }

    fn scored(&self) -> Result<Vec<(&Candidate, f64)>> {
        self.cands
            .iter()
            .map(|c| {
                c.score
                    .map(|s| (c, s.value()))
                    .ok_or_else(|| Error::Usage(format!("candidate set {} is unscored", self.unit_key)))
            })
            .collect()
    }

    fn arm(&self, condition: ConditionKind) -> Result<[(&Candidate, f64); 2]> {
        let v: Vec<_> = self
            .scored()?
            .into_iter()
            .filter(|(c, _)| c.condition == condition)
            .collect();
        Ok([v[0], v[1]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntraPair {
    pub unit_key: UnitKey,
    pub condition: ConditionKind,
    pub preferred: String,
    pub dispreferred: String,
    pub score_plus: QualityScore,
    pub score_minus: QualityScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RivalRank {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossPair {
    pub unit_key: UnitKey,
    pub winner_condition: ConditionKind,
    pub y_w_plus: String,
    pub rival: String,
    pub rival_rank: RivalRank,
    pub winner_score: QualityScore,
    pub rival_score: QualityScore,
}

impl CrossPair {
    pub fn rival_condition(&self) -> ConditionKind {
        self.winner_condition.opposite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub min_words: usize,
    pub max_words: usize,
    pub min_score: f64,
    pub margin_lo: f64,
    pub margin_hi: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_words: 6,
            max_words: 100,
            min_score: 0.3,
            margin_lo: 0.2,
            margin_hi: 10.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_words > self.max_words {
            return Err(Error::Config("min_words exceeds max_words".into()));
        }
        if !(self.margin_lo <= self.margin_hi) || !self.min_score.is_finite() {
            return Err(Error::Config("margin_lo exceeds margin_hi".into()));
        }
        Ok(())
    }
}

/// Anything with two scored member texts that the filter can judge.
pub trait ScoredPair {
    fn texts(&self) -> (&str, &str);
    /// (better, worse)
    fn scores(&self) -> (f64, f64);
}

impl ScoredPair for IntraPair {
    fn texts(&self) -> (&str, &str) {
        (&self.preferred, &self.dispreferred)
    }
    fn scores(&self) -> (f64, f64) {
        (self.score_plus.value(), self.score_minus.value())
    }
}

impl ScoredPair for CrossPair {
    fn texts(&self) -> (&str, &str) {
        (&self.y_w_plus, &self.rival)
    }
    fn scores(&self) -> (f64, f64) {
        (self.winner_score.value(), self.rival_score.value())
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn passes_filter<P: ScoredPair + ?Sized>(pair: &P, cfg: &FilterConfig) -> bool {
    let (a, b) = pair.texts();
    let (hi, lo) = pair.scores();
    let length_ok = |t: &str| (cfg.min_words..=cfg.max_words).contains(&word_count(t));
    let margin = hi - lo;
    length_ok(a)
        && length_ok(b)
        && hi > cfg.min_score
        && lo > cfg.min_score
        && margin >= cfg.margin_lo
        && margin <= cfg.margin_hi
}

/// The (higher, lower) scored pair for one condition; `None` on a tie.
pub fn label_intra(set: &CandidateSet, condition: ConditionKind) -> Result<Option<IntraPair>> {
    let [(a, sa), (b, sb)] = set.arm(condition)?;
    let ((hi, shi), (lo, slo)) = if sa > sb {
        ((a, sa), (b, sb))
    } else if sb > sa {
        ((b, sb), (a, sa))
    } else {
        return Ok(None);
    };
    Ok(Some(IntraPair {
        unit_key: set.unit_key.clone(),
        condition,
        preferred: hi.text.clone(),
        dispreferred: lo.text.clone(),
        score_plus: QualityScore::new(shi)?,
        score_minus: QualityScore::new(slo)?,
    }))
}

/// Global best of four against both candidates of the other condition.
/// Returns no pairs when the best score is reached in both conditions.
pub fn build_cross_pairs(set: &CandidateSet) -> Result<Vec<CrossPair>> {
    let scored = set.scored()?;
    let best = scored.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let tops: Vec<&(&Candidate, f64)> = scored.iter().filter(|(_, s)| *s == best).collect();
    let winner = tops[0].0.condition;
    if tops.iter().any(|(c, _)| c.condition != winner) {
        return Ok(Vec::new());
    }
    let y_w = tops[0].0;
    let [a, b] = set.arm(winner.opposite())?;
    // Rank rivals by score; a tie keeps candidate order.
    let (plus, minus) = if b.1 > a.1 { (b, a) } else { (a, b) };
    let make = |(rival, score): (&Candidate, f64), rank| -> Result<CrossPair> {
        debug_assert_ne!(rival.condition, winner);
        Ok(CrossPair {
            unit_key: set.unit_key.clone(),
            winner_condition: winner,
            y_w_plus: y_w.text.clone(),
            rival: rival.text.clone(),
            rival_rank: rank,
            winner_score: QualityScore::new(best)?,
            rival_score: QualityScore::new(score)?,
        })
    };
    Ok(vec![make(plus, RivalRank::Plus)?, make(minus, RivalRank::Minus)?])
}

/// Which cross-condition pairs survive into the pair corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossAblation {
    #[default]
    Full,
    DropWlPlus,
    DropWlMinus,
}

impl FromStr for CrossAblation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CrossAblation::Full),
            "drop_wl_plus" => Ok(CrossAblation::DropWlPlus),
            "drop_wl_minus" => Ok(CrossAblation::DropWlMinus),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }
}

impl fmt::Display for CrossAblation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrossAblation::Full => "full",
            CrossAblation::DropWlPlus => "drop_wl_plus",
            CrossAblation::DropWlMinus => "drop_wl_minus",
        })
    }
}

/// Bookkeeping for one pair-building run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub candidate_sets: usize,
    pub intra_s_raw: usize,
    pub intra_s: usize,
    pub intra_c_raw: usize,
    pub intra_c: usize,
    pub cross_raw: usize,
    pub cross: usize,
    pub intra_ties: usize,
    pub cross_ties: usize,
}

impl PairCounts {
    pub fn to_csv(&self) -> String {
        format!(
            "set,raw,kept\nP_s,{},{}\nP_c,{},{}\nP_cr,{},{}\n",
            self.intra_s_raw, self.intra_s, self.intra_c_raw, self.intra_c, self.cross_raw, self.cross
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairCorpus {
    pub intra_s: Vec<IntraPair>,
    pub intra_c: Vec<IntraPair>,
    pub cross: Vec<CrossPair>,
    pub counts: PairCounts,
}

impl PairCorpus {
    pub fn is_empty(&self) -> bool {
        self.intra_s.is_empty() && self.intra_c.is_empty() && self.cross.is_empty()
    }
}

pub fn build_pair_corpus(
    candidates: &[CandidateSet],
    cfg: &FilterConfig,
    ablation: CrossAblation,
) -> Result<PairCorpus> {
    cfg.validate()?;
    let mut sets: Vec<&CandidateSet> = candidates.iter().collect();
    sets.sort_by(|a, b| a.unit_key.cmp(&b.unit_key));
    let mut out = PairCorpus::default();
    out.counts.candidate_sets = sets.len();
    for set in sets {
        if !set.is_scored() {
            return Err(Error::Usage(format!("candidate set {} is unscored", set.unit_key)));
        }
        for condition in [ConditionKind::SentOnly, ConditionKind::WithContext] {
            match label_intra(set, condition)? {
                None => out.counts.intra_ties += 1,
                Some(pair) => {
                    let (raw, kept, dst) = match condition {
                        ConditionKind::SentOnly => {
                            (&mut out.counts.intra_s_raw, &mut out.counts.intra_s, &mut out.intra_s)
                        }
                        ConditionKind::WithContext => {
                            (&mut out.counts.intra_c_raw, &mut out.counts.intra_c, &mut out.intra_c)
                        }
                    };
                    *raw += 1;
                    if passes_filter(&pair, cfg) {
                        *kept += 1;
                        dst.push(pair);
                    }
                }
            }
        }
        let cross = build_cross_pairs(set)?;
        if cross.is_empty() {
            out.counts.cross_ties += 1;
        }
        for pair in cross {
            let dropped = matches!(
                (ablation, pair.rival_rank),
                (CrossAblation::DropWlPlus, RivalRank::Plus) | (CrossAblation::DropWlMinus, RivalRank::Minus)
            );
            if dropped {
                continue;
            }
            out.counts.cross_raw += 1;
            if passes_filter(&pair, cfg) {
                out.counts.cross += 1;
                out.cross.push(pair);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntraScores {
    plus: QualityScore,
    minus: QualityScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrossScores {
    winner: QualityScore,
    rival: QualityScore,
}

/// One line of the pair corpus JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum PairRecord {
    Intra {
        unit_key: UnitKey,
        condition: ConditionKind,
        y_plus: String,
        y_minus: String,
        scores: IntraScores,
    },
    Cross {
        unit_key: UnitKey,
        winner_condition: ConditionKind,
        y_plus: String,
        rival: String,
        rival_rank: RivalRank,
        scores: CrossScores,
    },
}

pub fn pairs_to_jsonl(corpus: &PairCorpus) -> String {
    let mut out = String::new();
    let intra = corpus.intra_s.iter().chain(&corpus.intra_c).map(|p| PairRecord::Intra {
        unit_key: p.unit_key.clone(),
        condition: p.condition,
        y_plus: p.preferred.clone(),
        y_minus: p.dispreferred.clone(),
        scores: IntraScores { plus: p.score_plus, minus: p.score_minus },
    });
    let cross = corpus.cross.iter().map(|p| PairRecord::Cross {
        unit_key: p.unit_key.clone(),
        winner_condition: p.winner_condition,
        y_plus: p.y_w_plus.clone(),
        rival: p.rival.clone(),
        rival_rank: p.rival_rank,
        scores: CrossScores { winner: p.winner_score, rival: p.rival_score },
    });
    for rec in intra.chain(cross) {
        out.push_str(&serde_json::to_string(&rec).expect("pair records serialize"));
        out.push('\n');
    }
    out
}

/// Parses pair JSONL back into the three sets. Counts only reflect the kept
/// pairs since raw counts are not stored per record.
pub fn parse_pairs_jsonl(text: &str) -> Result<PairCorpus> {
    let mut out = PairCorpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        match rec {
            PairRecord::Intra { unit_key, condition, y_plus, y_minus, scores } => {
                if !(scores.plus > scores.minus) {
                    return Err(Error::parse(i + 1, "intra pair must have plus > minus"));
                }
                let pair = IntraPair {
                    unit_key,
                    condition,
                    preferred: y_plus,
                    dispreferred: y_minus,
                    score_plus: scores.plus,
                    score_minus: scores.minus,
                };
                match condition {
                    ConditionKind::SentOnly => out.intra_s.push(pair),
                    ConditionKind::WithContext => out.intra_c.push(pair),
                }
            }
            PairRecord::Cross { unit_key, winner_condition, y_plus, rival, rival_rank, scores } => {
                if scores.winner < scores.rival {
                    return Err(Error::parse(i + 1, "cross pair must have winner >= rival"));
                }
                out.cross.push(CrossPair {
                    unit_key,
                    winner_condition,
                    y_w_plus: y_plus,
                    rival,
                    rival_rank,
                    winner_score: scores.winner,
                    rival_score: scores.rival,
                });
            }
        }
    }
    out.counts.intra_s = out.intra_s.len();
    out.counts.intra_c = out.intra_c.len();
    out.counts.cross = out.cross.len();
    Ok(out)
}

pub fn candidates_to_jsonl(sets: &[CandidateSet]) -> String {
    let mut out = String::new();
    for set in sets {
        out.push_str(&serde_json::to_string(set).expect("candidate sets serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_candidates_jsonl(text: &str) -> Result<Vec<CandidateSet>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}
