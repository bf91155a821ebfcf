//! Preference objectives over sequence log-probabilities.
//!
//! ```text
//! CPO(lp⁺, lp⁻)  = −log σ(β (lp⁺ − lp⁻)) − lp⁺
//! intra          = mean_{P_s} CPO + mean_{P_c} CPO
//! cross          = mean_{(w⁺, l⁺)} C-CPO + mean_{(w⁺, l⁻)} C-CPO
//! CPL            = intra + cross
//! ```
//!
//! C-CPO has the CPO formula; its two log-probabilities are taken under
//! different conditioning inputs (the winner's and the rival's).

use crate::{Error, Result};

/// Log-probabilities of a preferred and dispreferred output, with the
/// separation temperature β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefLogProbs {
    pub lp_plus: f64,
    pub lp_minus: f64,
    pub beta: f64,
}

/// Loss value split into its two terms, plus partial derivatives with
/// respect to the two log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub nll: f64,
    pub total: f64,
    pub d_lp_plus: f64,
    pub d_lp_minus: f64,
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn cpo_loss(p: PrefLogProbs) -> Result<LossBreakdown> {
    if !(p.lp_plus.is_finite() && p.lp_minus.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite log-probabilities ({}, {})",
            p.lp_plus, p.lp_minus
        )));
    }
    if !(p.beta > 0.0) || !p.beta.is_finite() {
        return Err(Error::Numeric(format!("beta {} must be positive", p.beta)));
    }
    let z = p.beta * (p.lp_plus - p.lp_minus);
    let contrastive = softplus(-z);
    let nll = -p.lp_plus;
    // 1 − σ(z) = σ(−z)
    let pull = p.beta * sigmoid(-z);
    Ok(LossBreakdown {
        contrastive,
        nll,
        total: contrastive + nll,
        d_lp_plus: -pull - 1.0,
        d_lp_minus: pull,
    })
}

/// Cross-condition CPO. `lp_plus` must be conditioned on the winner's input
/// and `lp_minus` on the rival's; the arithmetic is that of [`cpo_loss`].
pub fn c_cpo_loss(p: PrefLogProbs) -> Result<LossBreakdown> {
    cpo_loss(p)
}

fn mean_total(batch: &[PrefLogProbs], loss: fn(PrefLogProbs) -> Result<LossBreakdown>) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for p in batch {
        sum += loss(*p)?.total;
    }
    Ok(sum / batch.len() as f64)
}

/// Sentence-level pairs under `x`, context-aware pairs under `(x, c)`.
/// An empty set contributes zero.
pub fn intra_loss(batch_s: &[PrefLogProbs], batch_c: &[PrefLogProbs]) -> Result<f64> {
    Ok(mean_total(batch_s, cpo_loss)? + mean_total(batch_c, cpo_loss)?)
}

/// Winner against the rival condition's preferred output, plus winner
/// against its dispreferred output, each averaged separately.
pub fn cross_loss(batch_plus: &[PrefLogProbs], batch_minus: &[PrefLogProbs]) -> Result<f64> {
    Ok(mean_total(batch_plus, c_cpo_loss)? + mean_total(batch_minus, c_cpo_loss)?)
}

pub fn cpl_loss(intra: f64, cross: f64) -> f64 {
    intra + cross
}
