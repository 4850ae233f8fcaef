//! Bayesian belief tracking, multiplicative trust updates, the action-driven
//! trust map and trust-weighted aggregation.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::TrustConfig;
use crate::nn::ParamVector;

pub const BELIEF_FLOOR: f64 = 1e-4;
pub const BELIEF_CEILING: f64 = 1.0 - 1e-4;
pub const BELIEF_PRIOR: f64 = 0.5;

/// Controller action applied to one client's trust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustAction {
    Increase = 0,
    Reduce = 1,
    Hold = 2,
}

impl TrustAction {
    pub const ALL: [TrustAction; 3] = [TrustAction::Increase, TrustAction::Reduce, TrustAction::Hold];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregationError {
    #[error("no participant updates to aggregate")]
    Empty,
    #[error("update of client {client} has length {got}, expected {expected}")]
    LengthMismatch { client: usize, got: usize, expected: usize },
    #[error("client {0} has no trust entry")]
    UnknownClient(usize),
}

/// Per-client posterior probability of being malicious, with per-round
/// history (value entering each round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub p_malicious: Vec<f64>,
    pub history: Vec<Vec<f64>>,
}

impl BeliefState {
    pub fn new(n_clients: usize) -> Self {
        Self {
            p_malicious: vec![BELIEF_PRIOR; n_clients],
            history: Vec::new(),
        }
    }

    /// Appends the current values as the snapshot for the next round.
    pub fn snapshot(&mut self) {
        self.history.push(self.p_malicious.clone());
    }
}

/// Per-client trust scores in `[0, 1]`, starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustVector {
    pub ts: Vec<f64>,
    pub history: Vec<Vec<f64>>,
}

impl TrustVector {
    pub fn new(n_clients: usize) -> Self {
        Self {
            ts: vec![1.0; n_clients],
            history: Vec::new(),
        }
    }

    pub fn from_scores(ts: Vec<f64>) -> Self {
        Self { ts, history: Vec::new() }
    }

    pub fn snapshot(&mut self) {
        self.history.push(self.ts.clone());
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// One recursive Bayes step on `P(malicious)` from the fused anomaly score.
///
/// `P(o | malicious) = sigmoid(gain * (anomaly - center))`, and the benign
/// likelihood is its complement. The posterior is blended with the prior by
/// `smoothing` and clipped to `[1e-4, 1 - 1e-4]`.
pub fn bayes_update(prev: f64, anomaly: f64, cfg: &TrustConfig) -> f64 {
    let p_mal = sigmoid(cfg.likelihood_gain * (anomaly - cfg.likelihood_center));
    let p_ben = 1.0 - p_mal;
    let num = prev * p_mal;
    let den = num + (1.0 - prev) * p_ben;
    let raw = if den > 0.0 { num / den } else { prev };
    ((1.0 - cfg.smoothing) * raw + cfg.smoothing * prev).clamp(BELIEF_FLOOR, BELIEF_CEILING)
}

/// `TS * (1 - λA + ηC)`, clipped to `[0, 1]`.
pub fn trust_update(ts_prev: f64, anomaly: f64, contribution: f64, cfg: &TrustConfig) -> f64 {
    (ts_prev * (1.0 - cfg.lambda_penalty * anomaly + cfg.eta_reward * contribution)).clamp(0.0, 1.0)
}

/// Applies the controller's action on top of the evidence-driven update.
pub fn trust_map(belief: f64, ts: f64, action: TrustAction, cfg: &TrustConfig) -> f64 {
    match action {
        TrustAction::Increase => (ts + cfg.action_nudge * (1.0 - belief)).clamp(0.0, 1.0),
        TrustAction::Reduce => (ts - cfg.action_nudge * belief - 0.02).clamp(0.0, 1.0),
        TrustAction::Hold => ts,
    }
}

/// One participant's submission.
#[derive(Debug, Clone, Copy)]
pub struct Contribution<'a> {
    pub client: usize,
    pub update: &'a ParamVector,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub params: ParamVector,
    /// Normalized weight per contribution, in client-id order.
    pub weights: Vec<(usize, f64)>,
    /// True when all trust mass was zero and plain FedAvg weights were used.
    pub fell_back: bool,
}

/// Trust-weighted aggregation with weights `(n_i / n) * TS(i)`.
///
/// With `renormalize` the weights are rescaled to sum to one. Summation runs
/// in ascending client-id order so the result does not depend on input order.
pub fn aggregate(
    contributions: &[Contribution<'_>],
    trust: &TrustVector,
    renormalize: bool,
) -> Result<Aggregate, AggregationError> {
    let first = contributions.first().ok_or(AggregationError::Empty)?;
    let len = first.update.len();
    let mut sorted: Vec<&Contribution<'_>> = contributions.iter().collect();
    sorted.sort_by_key(|c| c.client);
    for c in &sorted {
        if c.update.len() != len {
            return Err(AggregationError::LengthMismatch {
                client: c.client,
                got: c.update.len(),
                expected: len,
            });
        }
        if c.client >= trust.ts.len() {
            return Err(AggregationError::UnknownClient(c.client));
        }
    }

    let n_total: usize = sorted.iter().map(|c| c.n_samples).sum();
    let share = |c: &Contribution<'_>| {
        if n_total == 0 {
            1.0 / sorted.len() as f64
        } else {
            c.n_samples as f64 / n_total as f64
        }
    };
    let mut weights: Vec<f64> = sorted.iter().map(|c| share(c) * trust.ts[c.client]).collect();
    let mass: f64 = weights.iter().sum();
    let mut fell_back = false;
    if !(mass > 0.0) {
        log::warn!("all participant trust is zero; falling back to sample-weighted FedAvg");
        weights = sorted.iter().map(|c| share(c)).collect();
        fell_back = true;
    } else if renormalize {
        // n_i * TS_i / sum_j n_j * TS_j: same value as rescaling by the mass,
        // and exactly the FedAvg weights when every TS is 1.
        let scaled = |c: &Contribution<'_>| {
            let n = if n_total == 0 { 1.0 } else { c.n_samples as f64 };
            n * trust.ts[c.client]
        };
        let total: f64 = sorted.iter().map(|c| scaled(c)).sum();
        weights = sorted.iter().map(|c| scaled(c) / total).collect();
    }

    let mut params = ParamVector::zeros(len);
    for (c, &w) in sorted.iter().zip(&weights) {
        params.add_scaled(w, c.update);
    }
    Ok(Aggregate {
        params,
        weights: sorted.iter().map(|c| c.client).zip(weights).collect(),
        fell_back,
    })
}
