//! Weighted combination of criteria and the per-epoch weight strategies.
//!
//! All strategies start from user importance factors `gamma` (positive,
//! summing to 1). `Adaptive` divides each factor by the criterion's most
//! recent epoch-mean loss so criteria on large numeric scales do not
//! dominate; `SoftAdapt` additionally boosts criteria whose smoothed loss
//! has recently been rising.

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{Criterion, LossEvaluation};

pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_TAU: f64 = 0.9;
const SUM_TOL: f64 = 1e-12;

/// Ordered criteria with their importance factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    criteria: Vec<Criterion>,
    gamma: Vec<f64>,
}

impl CriterionSpec {
    pub fn new(criteria: Vec<Criterion>, gamma: Vec<f64>) -> Result<Self> {
        if criteria.is_empty() {
            return Err(Error::InvalidCriteria("at least one criterion is required".into()));
        }
        if criteria.len() != gamma.len() {
            return Err(Error::LengthMismatch { left: criteria.len(), right: gamma.len() });
        }
        let mut seen = criteria.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != criteria.len() {
            return Err(Error::InvalidCriteria("duplicate criterion".into()));
        }
        if let Some(g) = gamma.iter().find(|&&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidCriteria(format!("importance factors must be positive, got {g}")));
        }
        let sum: f64 = gamma.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidCriteria(format!("importance factors sum to {sum}, expected 1")));
        }
        Ok(CriterionSpec { criteria, gamma })
    }

    /// Rescales positive factors to sum to 1 before validating.
    pub fn normalized(criteria: Vec<Criterion>, gamma: Vec<f64>) -> Result<Self> {
        let sum: f64 = gamma.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidCriteria("importance factors must be positive".into()));
        }
        Self::new(criteria, gamma.iter().map(|g| g / sum).collect())
    }

    pub fn single(criterion: Criterion) -> Self {
        CriterionSpec { criteria: vec![criterion], gamma: vec![1.0] }
    }

    pub fn criteria(&self) -> &[Criterion] {
        &self.criteria
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.criteria.len()
    }

    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }
}

/// `sum_k alpha_k L_k` for both value and gradient.
pub fn composite_loss(evals: &[LossEvaluation], alpha: &[f64]) -> Result<LossEvaluation> {
    if evals.len() != alpha.len() {
        return Err(Error::LengthMismatch { left: evals.len(), right: alpha.len() });
    }
    let first = evals.first().ok_or(Error::LengthMismatch { left: 0, right: 1 })?;
    let mut grad = Array2::zeros(first.grad.raw_dim());
    let mut value = 0.0;
    for (e, &a) in evals.iter().zip(alpha) {
        if e.grad.dim() != grad.dim() {
            return Err(Error::ShapeMismatch {
                op: "composite_loss",
                detail: format!("{:?} vs {:?}", e.grad.dim(), grad.dim()),
            });
        }
        value += a * e.value;
        grad.scaled_add(a, &e.grad);
    }
    Ok(LossEvaluation { value, grad })
}

fn check_losses(gamma: &[f64], losses: &[f64]) -> Result<()> {
    if gamma.len() != losses.len() {
        return Err(Error::LengthMismatch { left: gamma.len(), right: losses.len() });
    }
    match losses.iter().enumerate().find(|(_, &l)| !(l > 0.0) || !l.is_finite()) {
        Some((index, &value)) => Err(Error::NonPositiveLoss { index, value }),
        None => Ok(()),
    }
}

/// `alpha_k ∝ (gamma_k / L_k) * boost_k`, normalized to sum 1.
fn scaled_weights(gamma: &[f64], losses: &[f64], boost: impl Fn(usize) -> f64) -> Vec<f64> {
    let raw: Vec<f64> = gamma.iter().zip(losses).enumerate().map(|(k, (g, l))| g / l * boost(k)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// `alpha_k = (gamma_k / L_k) / sum_l (gamma_l / L_l)` from the previous
/// epoch's mean losses.
pub fn adaptive_weights(gamma: &[f64], prev_loss: &[f64]) -> Result<Vec<f64>> {
    check_losses(gamma, prev_loss)?;
    Ok(scaled_weights(gamma, prev_loss, |_| 1.0))
}

pub fn fixed_weights(gamma: &[f64]) -> Vec<f64> {
    gamma.to_vec()
}

/// Running state of a weighting strategy across epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    pub alpha: Vec<f64>,
    /// Exponentially smoothed epoch losses; empty before the first update.
    pub smoothed: Vec<f64>,
    /// Epoch-mean losses from the most recent update.
    pub prev_loss: Vec<f64>,
    /// Number of completed updates.
    pub epoch: usize,
}

impl WeightState {
    pub fn new(gamma: &[f64]) -> Self {
        WeightState { alpha: gamma.to_vec(), smoothed: Vec::new(), prev_loss: Vec::new(), epoch: 0 }
    }
}

/// Folds the latest epoch-mean losses into the smoothed history and returns
/// the weights for the next epoch.
///
/// The smoothed series starts at the first observed losses and afterwards
/// follows `s <- tau * s + (1 - tau) * L`. The descent rate is the relative
/// change of the smoothed series over the last update, L1-normalized across
/// criteria (all-zero changes give a zero rate).
pub fn softadapt_weights(
    gamma: &[f64],
    state: &WeightState,
    latest_loss: &[f64],
    beta: f64,
    tau: f64,
) -> Result<(Vec<f64>, WeightState)> {
    check_losses(gamma, latest_loss)?;
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidConfig(format!("smoothing factor must lie in [0, 1), got {tau}")));
    }
    let first = state.smoothed.is_empty();
    if !first && state.smoothed.len() != gamma.len() {
        return Err(Error::LengthMismatch { left: gamma.len(), right: state.smoothed.len() });
    }
    let smoothed: Vec<f64> = if first {
        latest_loss.to_vec()
    } else {
        state.smoothed.iter().zip(latest_loss).map(|(s, l)| tau * s + (1.0 - tau) * l).collect()
    };
    let rate: Vec<f64> = if first {
        vec![0.0; gamma.len()]
    } else {
        let change: Vec<f64> =
            smoothed.iter().zip(&state.smoothed).map(|(now, before)| (now - before) / before).collect();
        let l1: f64 = change.iter().map(|c| c.abs()).sum();
        if l1 > 0.0 {
            change.iter().map(|c| c / l1).collect()
        } else {
            vec![0.0; gamma.len()]
        }
    };
    let alpha = scaled_weights(gamma, latest_loss, |k| (beta * rate[k]).exp());
    let next = WeightState {
        alpha: alpha.clone(),
        smoothed,
        prev_loss: latest_loss.to_vec(),
        epoch: state.epoch + 1,
    };
    Ok((alpha, next))
}

/// Weighting strategy selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    Fixed,
    Adaptive,
    Softadapt { beta: f64, tau: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Fixed => "fixed",
            Strategy::Adaptive => "adaptive",
            Strategy::Softadapt { .. } => "softadapt",
        }
    }

    /// Weights for the next epoch given the epoch that just finished.
    pub fn update(&self, gamma: &[f64], state: &WeightState, epoch_loss: &[f64]) -> Result<WeightState> {
        match *self {
            Strategy::Fixed => Ok(WeightState {
                alpha: fixed_weights(gamma),
                smoothed: Vec::new(),
                prev_loss: epoch_loss.to_vec(),
                epoch: state.epoch + 1,
            }),
            Strategy::Adaptive => Ok(WeightState {
                alpha: adaptive_weights(gamma, epoch_loss)?,
                smoothed: Vec::new(),
                prev_loss: epoch_loss.to_vec(),
                epoch: state.epoch + 1,
            }),
            Strategy::Softadapt { beta, tau } => Ok(softadapt_weights(gamma, state, epoch_loss, beta, tau)?.1),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" | "fixed_weights" => Ok(Strategy::Fixed),
            "adaptive" | "adaptive_weights" => Ok(Strategy::Adaptive),
            "softadapt" | "softadapt_weights" => Ok(Strategy::Softadapt { beta: DEFAULT_BETA, tau: DEFAULT_TAU }),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}
