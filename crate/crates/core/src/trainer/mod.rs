//! Two-stage training: likelihood fine-tuning on both conditions, then
//! preference optimization over the intra- and cross-condition pair sets.
//!
//! Gradients inside a minibatch are accumulated in fixed-size chunks on the
//! rayon pool and reduced in chunk order, so results do not depend on the
//! number of threads.

mod config;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ObjectiveMode, Optimizer, TrainConfig};

use crate::corpus::{extract_context, Document, TokenId, Vocab, EOS};
use crate::objective::{c_cpo_loss, cpo_loss, PrefLogProbs};
use crate::pairs::{Candidate, CandidateSet, PairCorpus, RivalRank, UnitKey};
use crate::policy::{self, Condition, ConditionKind, GradientBundle, PolicyParams};
use crate::scoring::{score_card, MetricKind, QualityScore, ScoreInput};
use crate::{Error, Result};

const CHUNK: usize = 16;

/// Model inputs of one sentence under both conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitInputs {
    pub key: UnitKey,
    pub sent: Condition,
    /// Falls back to sentence-only input when the window is empty.
    pub ctx: Condition,
    /// Reference ids terminated by EOS.
    pub target: Vec<TokenId>,
    pub reference_text: String,
    pub prev_reference_text: Option<String>,
}

impl UnitInputs {
    pub fn condition(&self, kind: ConditionKind) -> &Condition {
        match kind {
            ConditionKind::SentOnly => &self.sent,
            ConditionKind::WithContext => &self.ctx,
        }
    }
}

pub fn with_eos(mut ids: Vec<TokenId>) -> Vec<TokenId> {
    ids.push(EOS);
    ids
}

/// Resolves every unit of `docs` into model inputs with a `k`-token context budget.
pub fn unit_inputs(docs: &[Document], vocab: &Vocab, k: usize) -> Result<Vec<UnitInputs>> {
    let mut out = Vec::new();
    for doc in docs {
        for (i, unit) in doc.units.iter().enumerate() {
            let window = extract_context(doc, i, k)?;
            out.push(UnitInputs {
                key: UnitKey {
                    doc_id: doc.doc_id.clone(),
                    index: unit.index,
                },
                sent: Condition::sent_only(unit.source.clone())?,
                ctx: Condition::from_window(ConditionKind::WithContext, unit.source.clone(), &window)?,
                target: with_eos(unit.reference.clone()),
                reference_text: vocab.decode(&unit.reference),
                prev_reference_text: i.checked_sub(1).map(|j| vocab.decode(&doc.units[j].reference)),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Velocity(Option<GradientBundle>);

/// Plain or momentum SGD with global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
    optimizer: Optimizer,
    clip: f64,
    velocity: Velocity,
}

impl Sgd {
    pub fn new(lr: f64, optimizer: Optimizer, clip: f64) -> Self {
        Sgd {
            lr,
            optimizer,
            clip,
            velocity: Velocity(None),
        }
    }

    /// Clips `grad` in place and applies one update. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut PolicyParams, grad: &mut GradientBundle) -> f64 {
        let norm = grad.l2_norm();
        if self.clip > 0.0 && norm > self.clip {
            grad.scale(self.clip / norm);
        }
        match self.optimizer {
            Optimizer::Sgd => params.add_scaled(grad, -self.lr),
            Optimizer::Momentum(mu) => {
                let v = self.velocity.0.get_or_insert_with(|| grad.zeros_like());
                v.scale(mu);
                v.add_scaled(grad, 1.0);
                params.add_scaled(v, -self.lr);
            }
        }
        norm
    }
}

/// One sequence term of a minibatch loss: `coef · log p(y | cond)`.
struct Term<'a> {
    cond: &'a Condition,
    y: &'a [TokenId],
    coef: f64,
}

/// `Σ coef_i ∇ log p(y_i | cond_i)`, reduced in chunk order.
fn accumulate(params: &PolicyParams, terms: &[Term<'_>]) -> Result<GradientBundle> {
    let parts: Vec<Result<GradientBundle>> = terms
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            for t in chunk {
                policy::grad_log_prob_into(params, t.cond, t.y, t.coef, &mut g)?;
            }
            Ok(g)
        })
        .collect();
    let mut total = params.zeros_like();
    for part in parts {
        total.add_scaled(&part?, 1.0);
    }
    Ok(total)
}

fn log_probs(params: &PolicyParams, items: &[(&Condition, &[TokenId])]) -> Result<Vec<f64>> {
    items
        .par_iter()
        .map(|(c, y)| policy::log_prob(params, c, y))
        .collect()
}

/// Per-step record of either stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub intra: Option<f64>,
    pub cross: Option<f64>,
    pub mean_margin_s: Option<f64>,
    pub mean_margin_c: Option<f64>,
    pub mean_margin_cr: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub steps: Vec<StepLog>,
    pub epoch_means: Vec<f64>,
    /// `[P_s, P_c, P_cr(plus), P_cr(minus)]` sizes used by preference training.
    pub pair_sizes: Option<[usize; 4]>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl TrainReport {
    /// Loss curve CSV. Preference runs use the
    /// `step,intra,cross,cpl,mean_margin_s,mean_margin_c,mean_margin_cr` layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.stage == "cpl" {
            out.push_str("step,intra,cross,cpl,mean_margin_s,mean_margin_c,mean_margin_cr\n");
            for s in &self.steps {
                let _ = writeln!(
                    out,
                    "{},{},{},{:?},{},{},{}",
                    s.step,
                    opt_cell(s.intra),
                    opt_cell(s.cross),
                    s.loss,
                    opt_cell(s.mean_margin_s),
                    opt_cell(s.mean_margin_c),
                    opt_cell(s.mean_margin_cr)
                );
            }
        } else {
            out.push_str("step,epoch,nll\n");
            for s in &self.steps {
                let _ = writeln!(out, "{},{},{:?}", s.step, s.epoch, s.loss);
            }
        }
        out
    }
}

fn epoch_means(steps: &[StepLog], epochs: usize) -> Vec<f64> {
    (0..epochs)
        .map(|e| {
            let v: Vec<f64> = steps.iter().filter(|s| s.epoch == e).map(|s| s.loss).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect()
}

fn check_step(step: usize, loss: f64, grad: &GradientBundle, last_good: &PolicyParams) -> Result<()> {
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::Diverged {
            step,
            reason: if loss.is_finite() {
                "non-finite gradient".into()
            } else {
                format!("loss {loss}")
            },
            last_good: Box::new(last_good.clone()),
        });
    }
    Ok(())
}

fn check_shape(params: &PolicyParams, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    params.validate()
}

/// Mean negative log-likelihood of the references under both conditions
/// for a batch of units, and its gradient.
pub fn sft_objective(params: &PolicyParams, batch: &[&UnitInputs]) -> Result<(f64, GradientBundle)> {
    if batch.is_empty() {
        return Err(Error::Usage("empty likelihood batch".into()));
    }
    let coef = -1.0 / (2 * batch.len()) as f64;
    let terms: Vec<Term<'_>> = batch
        .iter()
        .flat_map(|u| {
            [&u.sent, &u.ctx].map(|cond| Term {
                cond,
                y: &u.target,
                coef,
            })
        })
        .collect();
    let items: Vec<(&Condition, &[TokenId])> = terms.iter().map(|t| (t.cond, t.y)).collect();
    let lps = log_probs(params, &items)?;
    let loss = lps.iter().map(|lp| coef * lp).sum::<f64>();
    Ok((loss, accumulate(params, &terms)?))
}

/// Cold-start likelihood fine-tuning on both conditions.
pub fn sft(params: &PolicyParams, units: &[UnitInputs], cfg: &TrainConfig) -> Result<(PolicyParams, TrainReport)> {
    check_shape(params, cfg)?;
    if units.is_empty() {
        return Err(Error::Usage("likelihood training needs a non-empty corpus".into()));
    }
    let started = Instant::now();
    let mut params = params.clone();
    let mut opt = Sgd::new(cfg.learning_rate, cfg.optimizer, cfg.grad_clip);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut steps = Vec::new();
    for epoch in 0..cfg.sft_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&UnitInputs> = chunk.iter().map(|&i| &units[i]).collect();
            let (loss, mut grad) = sft_objective(&params, &batch)?;
            check_step(steps.len(), loss, &grad, &params)?;
            let last_good = params.clone();
            let grad_norm = opt.step(&mut params, &mut grad);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    step: steps.len(),
                    reason: "non-finite parameters".into(),
                    last_good: Box::new(last_good),
                });
            }
            steps.push(StepLog {
                step: steps.len(),
                epoch,
                loss,
                intra: None,
                cross: None,
                mean_margin_s: None,
                mean_margin_c: None,
                mean_margin_cr: None,
                grad_norm,
            });
        }
    }
    let report = TrainReport {
        stage: "sft".into(),
        epoch_means: epoch_means(&steps, cfg.sft_epochs),
        steps,
        pair_sizes: None,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// Two temperature samples per condition for every unit, scored with every
/// proxy metric; `metric` selects the labeling score.
///
/// Each unit draws from its own ChaCha stream, so the result does not depend
/// on evaluation order. The document-level score of a candidate uses the
/// previous reference on both sides.
pub fn generate_candidates(
    params: &PolicyParams,
    units: &[UnitInputs],
    vocab: &Vocab,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<CandidateSet>> {
    check_shape(params, cfg)?;
    units
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut cands = Vec::with_capacity(4);
            for kind in [ConditionKind::SentOnly, ConditionKind::WithContext] {
                for _ in 0..2 {
                    let y = policy::sample(params, u.condition(kind), cfg.temperature, cfg.max_len, &mut rng)?;
                    let text = vocab.decode(&y);
                    let card = score_card(ScoreInput {
                        hyp: &text,
                        reference: &u.reference_text,
                        prev_hyp: u.prev_reference_text.as_deref(),
                        prev_ref: u.prev_reference_text.as_deref(),
                    })?;
                    cands.push(Candidate {
                        condition: kind,
                        text,
                        score: Some(card.get(cfg.metric)),
                        card: Some(card),
                    });
                }
            }
            CandidateSet::new(u.key.clone(), cands)
        })
        .collect()
}

/// Re-labels scored candidates with a different selection metric.
pub fn rescore(sets: &[CandidateSet], metric: MetricKind) -> Result<Vec<CandidateSet>> {
    sets.iter()
        .map(|set| {
            let cands = set
                .candidates()
                .iter()
                .map(|c| {
                    let card = c
                        .card
                        .ok_or_else(|| Error::Usage(format!("candidate set {} has no score card", set.unit_key())))?;
                    Ok(Candidate {
                        score: Some(card.get(metric)),
                        ..c.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            CandidateSet::new(set.unit_key().clone(), cands)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairGroup {
    IntraS,
    IntraC,
    CrossPlus,
    CrossMinus,
}

impl PairGroup {
    pub const ALL: [PairGroup; 4] = [PairGroup::IntraS, PairGroup::IntraC, PairGroup::CrossPlus, PairGroup::CrossMinus];

    pub fn is_cross(self) -> bool {
        matches!(self, PairGroup::CrossPlus | PairGroup::CrossMinus)
    }
}

/// A pair with both members resolved to ids and bound to their own
/// conditioning inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    pub group: PairGroup,
    pub plus_cond: Condition,
    pub y_plus: Vec<TokenId>,
    pub minus_cond: Condition,
    pub y_minus: Vec<TokenId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreparedPairs {
    pub intra_s: Vec<PreparedPair>,
    pub intra_c: Vec<PreparedPair>,
    pub cross_plus: Vec<PreparedPair>,
    pub cross_minus: Vec<PreparedPair>,
}

impl PreparedPairs {
    pub fn group(&self, g: PairGroup) -> &[PreparedPair] {
        match g {
            PairGroup::IntraS => &self.intra_s,
            PairGroup::IntraC => &self.intra_c,
            PairGroup::CrossPlus => &self.cross_plus,
            PairGroup::CrossMinus => &self.cross_minus,
        }
    }

    fn group_mut(&mut self, g: PairGroup) -> &mut Vec<PreparedPair> {
        match g {
            PairGroup::IntraS => &mut self.intra_s,
            PairGroup::IntraC => &mut self.intra_c,
            PairGroup::CrossPlus => &mut self.cross_plus,
            PairGroup::CrossMinus => &mut self.cross_minus,
        }
    }

    pub fn sizes(&self) -> [usize; 4] {
        PairGroup::ALL.map(|g| self.group(g).len())
    }

    pub fn len(&self) -> usize {
        self.sizes().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &PreparedPair> {
        PairGroup::ALL.into_iter().flat_map(move |g| self.group(g))
    }

    /// Keeps only the groups the objective mode trains on.
    pub fn restrict(&self, mode: ObjectiveMode) -> PreparedPairs {
        let mut out = self.clone();
        match mode {
            ObjectiveMode::Cpl => {}
            ObjectiveMode::IntraOnly => {
                out.cross_plus.clear();
                out.cross_minus.clear();
            }
            ObjectiveMode::CrossOnly => {
                out.intra_s.clear();
                out.intra_c.clear();
            }
        }
        out
    }
}

fn output_ids(vocab: &Vocab, text: &str) -> Result<Vec<TokenId>> {
    Ok(with_eos(vocab.encode_output(text)?))
}

/// Resolves a pair corpus against the units it was sampled from.
pub fn prepare_pairs(corpus: &PairCorpus, units: &[UnitInputs], vocab: &Vocab) -> Result<PreparedPairs> {
    let index: HashMap<&UnitKey, &UnitInputs> = units.iter().map(|u| (&u.key, u)).collect();
    let lookup = |key: &UnitKey| {
        index
            .get(key)
            .copied()
            .ok_or_else(|| Error::Usage(format!("pair refers to unknown unit {key}")))
    };
    let mut out = PreparedPairs::default();
    for (pairs, group) in [(&corpus.intra_s, PairGroup::IntraS), (&corpus.intra_c, PairGroup::IntraC)] {
        for p in pairs {
            let cond = lookup(&p.unit_key)?.condition(p.condition).clone();
            out.group_mut(group).push(PreparedPair {
                group,
                plus_cond: cond.clone(),
                y_plus: output_ids(vocab, &p.preferred)?,
                minus_cond: cond,
                y_minus: output_ids(vocab, &p.dispreferred)?,
            });
        }
    }
    for p in &corpus.cross {
        let u = lookup(&p.unit_key)?;
        let group = match p.rival_rank {
            RivalRank::Plus => PairGroup::CrossPlus,
            RivalRank::Minus => PairGroup::CrossMinus,
        };
        out.group_mut(group).push(PreparedPair {
            group,
            plus_cond: u.condition(p.winner_condition).clone(),
            y_plus: output_ids(vocab, &p.y_w_plus)?,
            minus_cond: u.condition(p.rival_condition()).clone(),
            y_minus: output_ids(vocab, &p.rival)?,
        });
    }
    Ok(out)
}

/// Weights and options of the preference objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub beta: f64,
    pub intra_weight: f64,
    pub cross_weight: f64,
    pub length_norm: bool,
}

impl From<&TrainConfig> for ObjectiveSpec {
    fn from(cfg: &TrainConfig) -> Self {
        ObjectiveSpec {
            beta: cfg.beta,
            intra_weight: cfg.intra_weight,
            cross_weight: cfg.cross_weight,
            length_norm: cfg.length_norm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchObjective {
    /// Unweighted intra term: mean over P_s plus mean over P_c.
    pub intra: f64,
    /// Unweighted cross term: mean over plus-rank plus mean over minus-rank rivals.
    pub cross: f64,
    /// `intra_weight · intra + cross_weight · cross`.
    pub cpl: f64,
    pub mean_margin_s: Option<f64>,
    pub mean_margin_c: Option<f64>,
    pub mean_margin_cr: Option<f64>,
    pub grad: GradientBundle,
}

/// Preference loss of one minibatch and its exact gradient.
///
/// Every member's log-probability is taken under its own conditioning input.
/// Groups are averaged separately, so an absent group contributes zero.
pub fn minibatch_objective(params: &PolicyParams, batch: &[&PreparedPair], spec: ObjectiveSpec) -> Result<BatchObjective> {
    if batch.is_empty() {
        return Err(Error::Usage("empty preference batch".into()));
    }
    let items: Vec<(&Condition, &[TokenId])> = batch
        .iter()
        .flat_map(|p| [(&p.plus_cond, p.y_plus.as_slice()), (&p.minus_cond, p.y_minus.as_slice())])
        .collect();
    let raw = log_probs(params, &items)?;
    let mut counts: HashMap<PairGroup, usize> = HashMap::new();
    for p in batch {
        *counts.entry(p.group).or_default() += 1;
    }
    let norm = |lp: f64, y: &[TokenId]| if spec.length_norm { lp / y.len() as f64 } else { lp };
    let mut intra = 0.0;
    let mut cross = 0.0;
    let mut margins: HashMap<&str, (f64, usize)> = HashMap::new();
    let mut terms = Vec::with_capacity(items.len());
    for (i, p) in batch.iter().enumerate() {
        let lp_plus = norm(raw[2 * i], &p.y_plus);
        let lp_minus = norm(raw[2 * i + 1], &p.y_minus);
        let pl = PrefLogProbs {
            lp_plus,
            lp_minus,
            beta: spec.beta,
        };
        let n = counts[&p.group] as f64;
        let (loss, weight, key) = if p.group.is_cross() {
            (c_cpo_loss(pl)?, spec.cross_weight, "cr")
        } else {
            let key = if p.group == PairGroup::IntraS { "s" } else { "c" };
            (cpo_loss(pl)?, spec.intra_weight, key)
        };
        if p.group.is_cross() {
            cross += loss.total / n;
        } else {
            intra += loss.total / n;
        }
        let m = margins.entry(key).or_default();
        m.0 += raw[2 * i] - raw[2 * i + 1];
        m.1 += 1;
        let scale = weight / n;
        let len_scale = |y: &[TokenId]| if spec.length_norm { 1.0 / y.len() as f64 } else { 1.0 };
        terms.push(Term {
            cond: &p.plus_cond,
            y: &p.y_plus,
            coef: scale * loss.d_lp_plus * len_scale(&p.y_plus),
        });
        terms.push(Term {
            cond: &p.minus_cond,
            y: &p.y_minus,
            coef: scale * loss.d_lp_minus * len_scale(&p.y_minus),
        });
    }
    let grad = accumulate(params, &terms)?;
    let margin = |k: &str| margins.get(k).map(|(s, n)| s / *n as f64);
    Ok(BatchObjective {
        intra,
        cross,
        cpl: spec.intra_weight * intra + spec.cross_weight * cross,
        mean_margin_s: margin("s"),
        mean_margin_c: margin("c"),
        mean_margin_cr: margin("cr"),
        grad,
    })
}

/// Minibatches of one epoch: each group is shuffled, then spread over the
/// batches in proportion to its size.
fn epoch_batches<'a>(pairs: &'a PreparedPairs, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<&'a PreparedPair>> {
    let total = pairs.len();
    let nb = total.div_ceil(batch_size).max(1);
    let groups: Vec<Vec<&PreparedPair>> = PairGroup::ALL
        .iter()
        .map(|&g| {
            let mut v: Vec<&PreparedPair> = pairs.group(g).iter().collect();
            v.shuffle(rng);
            v
        })
        .collect();
    (0..nb)
        .map(|b| {
            groups
                .iter()
                .flat_map(|v| &v[b * v.len() / nb..(b + 1) * v.len() / nb])
                .copied()
                .collect()
        })
        .filter(|batch: &Vec<&PreparedPair>| !batch.is_empty())
        .collect()
}

/// Preference optimization over frozen pair sets.
pub fn train_cpl(params: &PolicyParams, pairs: &PreparedPairs, cfg: &TrainConfig) -> Result<(PolicyParams, TrainReport)> {
    check_shape(params, cfg)?;
    let pairs = pairs.restrict(cfg.objective);
    if pairs.is_empty() {
        return Err(Error::Usage("all preference pair sets are empty".into()));
    }
    let started = Instant::now();
    let spec = ObjectiveSpec::from(cfg);
    let mut params = params.clone();
    let mut opt = Sgd::new(cfg.cpl_learning_rate, cfg.optimizer, cfg.grad_clip);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut steps = Vec::new();
    for epoch in 0..cfg.cpl_epochs {
        for batch in epoch_batches(&pairs, cfg.cpl_batch_size, &mut rng) {
            let mut obj = minibatch_objective(&params, &batch, spec)?;
            check_step(steps.len(), obj.cpl, &obj.grad, &params)?;
            let last_good = params.clone();
            let grad_norm = opt.step(&mut params, &mut obj.grad);
            if !params.is_finite() {
                return Err(Error::Diverged {
                    step: steps.len(),
                    reason: "non-finite parameters".into(),
                    last_good: Box::new(last_good),
                });
            }
            steps.push(StepLog {
                step: steps.len(),
                epoch,
                loss: obj.cpl,
                intra: Some(obj.intra),
                cross: Some(obj.cross),
                mean_margin_s: obj.mean_margin_s,
                mean_margin_c: obj.mean_margin_c,
                mean_margin_cr: obj.mean_margin_cr,
                grad_norm,
            });
        }
    }
    let report = TrainReport {
        stage: "cpl".into(),
        epoch_means: epoch_means(&steps, cfg.cpl_epochs),
        steps,
        pair_sizes: Some(pairs.sizes()),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((params, report))
}

/// Fraction of pairs whose preferred member is more likely than the
/// dispreferred one, each under its own condition.
pub fn ranking_accuracy(params: &PolicyParams, pairs: &PreparedPairs) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Usage("no pairs to rank".into()));
    }
    let all: Vec<&PreparedPair> = pairs.iter().collect();
    let wins: Vec<bool> = all
        .par_iter()
        .map(|p| {
            Ok(policy::log_prob(params, &p.plus_cond, &p.y_plus)?
                > policy::log_prob(params, &p.minus_cond, &p.y_minus)?)
        })
        .collect::<Result<_>>()?;
    Ok(wins.iter().filter(|&&w| w).count() as f64 / wins.len() as f64)
}

/// Selection score of an arbitrary output for a unit.
pub fn unit_score(u: &UnitInputs, hyp: &str, prev_hyp: Option<&str>, metric: MetricKind) -> Result<QualityScore> {
    Ok(score_card(ScoreInput {
        hyp,
        reference: &u.reference_text,
        prev_hyp,
        prev_ref: u.prev_reference_text.as_deref(),
    })?
    .get(metric))
}

#[cfg(test)]
mod tests;
