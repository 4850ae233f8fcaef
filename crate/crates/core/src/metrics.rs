//! Evaluation metrics: accuracy, attack success rate, ROC-AUC, calibration
//! error and the convergence-round statistic.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::{AttackConfig, AttackKind};
use crate::dataset::{apply_trigger, Dataset};
use crate::nn::{MlpModel, ModelError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("empty evaluation set")]
    Empty,
    #[error("attack success rate is undefined for {0:?}")]
    NotApplicable(AttackKind),
    #[error("no test samples outside the target class")]
    NoVictims,
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One row of per-round results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub accuracy: f64,
    pub asr: f64,
    /// Missing when the round had no malicious (or no benign) participant.
    pub roc_auc: Option<f64>,
    pub ece: f64,
    pub reward: f64,
    pub per_client_trust: Vec<f64>,
    pub per_client_belief: Vec<f64>,
}

/// Fraction of argmax-correct predictions.
pub fn accuracy(model: &MlpModel, test: &Dataset) -> Result<f64, MetricError> {
    if test.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut correct = 0usize;
    for s in &test.samples {
        if model.predict(&s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Fraction of triggered non-target test samples classified as the target.
pub fn attack_success_rate(model: &MlpModel, test: &Dataset, attack: &AttackConfig) -> Result<f64, MetricError> {
    if attack.kind != AttackKind::Backdoor {
        return Err(MetricError::NotApplicable(attack.kind));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in test.samples.iter().filter(|s| s.label != attack.target_label) {
        let triggered = apply_trigger(s, attack.trigger_size, attack.target_label)
            .map_err(|_| MetricError::Model(ModelError::DimensionMismatch {
                expected: attack.trigger_size * attack.trigger_size,
                got: s.features.len(),
            }))?;
        if model.predict(&triggered.features)? == attack.target_label {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(MetricError::NoVictims);
    }
    Ok(hits as f64 / total as f64)
}

/// Mann–Whitney ROC-AUC: `P(pos > neg) + 0.5 * P(pos == neg)`.
///
/// Computed from mid-ranks; returns `None` when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    if scores.len() != labels.len() {
        return None;
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based mid-rank of the tie group i..=j
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Expected calibration error over `n_bins` equal-width confidence bins.
pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<f64, MetricError> {
    if confidences.len() != correct.len() {
        return Err(MetricError::LengthMismatch(confidences.len(), correct.len()));
    }
    if confidences.is_empty() || n_bins == 0 {
        return Err(MetricError::Empty);
    }
    let mut count = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0; n_bins];
    let mut hit_sum = vec![0.0; n_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let bin = (libm::floor(c.clamp(0.0, 1.0) * n_bins as f64) as usize).min(n_bins - 1);
        count[bin] += 1;
        conf_sum[bin] += c;
        if ok {
            hit_sum[bin] += 1.0;
        }
    }
    let n = confidences.len() as f64;
    let total = (0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let m = count[b] as f64;
            (m / n) * libm::fabs(hit_sum[b] / m - conf_sum[b] / m)
        })
        .sum::<f64>();
    Ok(total.clamp(0.0, 1.0))
}

/// ECE of `model` on `test` with max-probability confidences.
pub fn model_ece(model: &MlpModel, test: &Dataset, n_bins: usize) -> Result<f64, MetricError> {
    let mut conf = Vec::with_capacity(test.len());
    let mut correct = Vec::with_capacity(test.len());
    for s in &test.samples {
        let p = model.forward(&s.features)?;
        let pred = crate::nn::argmax(&p);
        conf.push(p[pred]);
        correct.push(pred == s.label);
    }
    ece(&conf, &correct, n_bins)
}

/// First round (1-based) whose trailing `window`-mean accuracy reaches 95% of
/// the final trailing mean. Returns the series length if no earlier round
/// qualifies.
pub fn convergence_round(acc_by_round: &[f64], window: usize) -> usize {
    let n = acc_by_round.len();
    if n == 0 {
        return 0;
    }
    let window = window.clamp(1, n);
    let trailing = |t: usize| acc_by_round[t - window..t].iter().sum::<f64>() / window as f64;
    let threshold = 0.95 * trailing(n);
    (window..=n).find(|&t| trailing(t) >= threshold).unwrap_or(n)
}
