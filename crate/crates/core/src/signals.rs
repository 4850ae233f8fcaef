//! Per-update anomaly evidence: directional alignment, magnitude deviation and
//! validation impact, their fusion into anomaly/contribution scores, and
//! observability masking.
//!
//! Direction is measured on deltas (`update - global`) against the round's
//! mean delta. Full parameter vectors share the global model as a common
//! offset, so their cosine is close to 1 regardless of behavior.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::{SignalBudget, SignalConfig};
use crate::dataset::Dataset;
use crate::metrics::{accuracy, MetricError};
use crate::nn::{MlpModel, ParamVector};

pub const MAGNITUDE_CLIP: f64 = 10.0;
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("parameter vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no updates to compare against")]
    NoUpdates,
    #[error("every signal is masked")]
    AllMasked,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Indices into [`ClientObservation::mask`].
pub const DIR: usize = 0;
pub const MAG: usize = 1;
pub const VAL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientObservation {
    pub directional: f64,
    pub magnitude: f64,
    pub validation: f64,
    /// `true` = observed.
    pub mask: [bool; 3],
}

impl ClientObservation {
    pub fn full(directional: f64, magnitude: f64, validation: f64) -> Self {
        Self {
            directional,
            magnitude,
            validation,
            mask: [true; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScores {
    pub anomaly: f64,
    pub contribution: f64,
}

fn check_len(a: &ParamVector, b: &ParamVector) -> Result<(), SignalError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(SignalError::LengthMismatch(a.len(), b.len()))
    }
}

/// Mean of `update - global` over all updates.
pub fn mean_delta(updates: &[&ParamVector], global: &ParamVector) -> Result<ParamVector, SignalError> {
    if updates.is_empty() {
        return Err(SignalError::NoUpdates);
    }
    let mut mean = ParamVector::zeros(global.len());
    for u in updates {
        check_len(u, global)?;
        mean.add_scaled(1.0, &u.delta_from(global));
    }
    mean.scale(1.0 / updates.len() as f64);
    Ok(mean)
}

/// Cosine between this client's delta and the consensus (mean) delta.
pub fn directional_alignment(
    update: &ParamVector,
    global: &ParamVector,
    consensus_delta: &ParamVector,
) -> Result<f64, SignalError> {
    check_len(update, global)?;
    check_len(consensus_delta, global)?;
    Ok(update.delta_from(global).cosine(consensus_delta))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `|‖Δ_i‖ − median_j ‖Δ_j‖| / (median + 1e-12)`, clipped to `[0, 10]`.
pub fn magnitude_deviation(
    update: &ParamVector,
    all_updates: &[&ParamVector],
    global: &ParamVector,
) -> Result<f64, SignalError> {
    if all_updates.is_empty() {
        return Err(SignalError::NoUpdates);
    }
    check_len(update, global)?;
    let mut norms = all_updates
        .iter()
        .map(|u| {
            check_len(u, global)?;
            Ok(u.delta_from(global).norm())
        })
        .collect::<Result<Vec<f64>, SignalError>>()?;
    let med = median(&mut norms);
    let own = update.delta_from(global).norm();
    Ok((libm::fabs(own - med) / (med + NORM_EPS)).clamp(0.0, MAGNITUDE_CLIP))
}

/// Validation accuracy of `update` minus that of `global`.
pub fn validation_impact(
    model: &MlpModel,
    update: &ParamVector,
    global: &ParamVector,
    val_set: &Dataset,
) -> Result<f64, SignalError> {
    check_len(update, global)?;
    let base = accuracy(&model.with_params(global.clone()).map_err(MetricError::from)?, val_set)?;
    let with_update = accuracy(&model.with_params(update.clone()).map_err(MetricError::from)?, val_set)?;
    Ok(with_update - base)
}

/// Fused anomaly `A` and contribution `C`, both in `[0, 1]`.
///
/// Each anomaly term is pre-clipped to `[0, 1]`; weights are renormalized over
/// the observed fields.
pub fn fuse_scores(obs: &ClientObservation, cfg: &SignalConfig) -> Result<AnomalyScores, SignalError> {
    let weights = [cfg.w_dir, cfg.w_mag, cfg.w_val];
    let terms = [
        ((1.0 - obs.directional) / 2.0).clamp(0.0, 1.0),
        (obs.magnitude.min(2.0) / 2.0).clamp(0.0, 1.0),
        ((-obs.validation).max(0.0) * cfg.validation_scale).clamp(0.0, 1.0),
    ];
    let total: f64 = (0..3).filter(|&j| obs.mask[j]).map(|j| weights[j]).sum();
    if !obs.mask.iter().any(|&m| m) {
        return Err(SignalError::AllMasked);
    }
    let anomaly = if total > 0.0 {
        (0..3)
            .filter(|&j| obs.mask[j])
            .map(|j| weights[j] / total * terms[j])
            .sum::<f64>()
    } else {
        // Observed fields all carry zero weight; fall back to equal weights.
        let observed = obs.mask.iter().filter(|&&m| m).count() as f64;
        (0..3).filter(|&j| obs.mask[j]).map(|j| terms[j] / observed).sum::<f64>()
    };

    let mut contribution = 0.0;
    if obs.mask[VAL] {
        contribution += obs.validation.max(0.0) * cfg.validation_scale;
    }
    if obs.mask[DIR] {
        contribution += obs.directional.max(0.0) * 0.5;
    }
    Ok(AnomalyScores {
        anomaly: anomaly.clamp(0.0, 1.0),
        contribution: contribution.clamp(0.0, 1.0),
    })
}

/// Masks the fields the defender cannot observe under `budget`; masked fields
/// are zero-filled.
pub fn apply_budget(obs: &ClientObservation, budget: SignalBudget) -> ClientObservation {
    let mut out = *obs;
    match budget {
        SignalBudget::Full => {}
        SignalBudget::NoValidation => out.mask[VAL] = false,
        SignalBudget::DirectionalOnly => {
            out.mask[MAG] = false;
            out.mask[VAL] = false;
        }
    }
    if !out.mask[DIR] {
        out.directional = 0.0;
    }
    if !out.mask[MAG] {
        out.magnitude = 0.0;
    }
    if !out.mask[VAL] {
        out.validation = 0.0;
    }
    out
}

/// Which raw signals `budget` leaves observable.
pub fn observes(budget: SignalBudget) -> [bool; 3] {
    apply_budget(&ClientObservation::full(0.0, 0.0, 0.0), budget).mask
}
