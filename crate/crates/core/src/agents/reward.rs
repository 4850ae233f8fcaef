//! Round reward and its per-client decomposition.
//!
//! `trust_correctness` needs ground-truth membership. It is computed here, in
//! the simulator's reward oracle, and never reaches the signal, belief or
//! trust pipeline.

use alloc::vec::Vec;

use crate::config::RewardWeights;
use crate::trust::TrustAction;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTerms {
    /// Change in validation accuracy this round (fraction).
    pub acc_delta: f64,
    /// Share of malicious participants reduced minus share of benign ones reduced.
    pub trust_correctness: f64,
    /// Share of participants whose action was not `hold`.
    pub action_cost: f64,
    /// Change in attack success rate this round (fraction).
    pub asr_delta: f64,
}

/// `perf·Δacc·100 + trust·τ − cost·δ − attack·ΔASR·100`.
pub fn compute_reward(t: &RewardTerms, w: &RewardWeights) -> f64 {
    w.perf * t.acc_delta * 100.0 + w.trust * t.trust_correctness
        - w.cost * t.action_cost
        - w.attack * t.asr_delta * 100.0
}

/// Aggregates one round's actions against ground truth.
pub fn round_reward_terms(actions: &[TrustAction], malicious: &[bool], acc_delta: f64, asr_delta: f64) -> RewardTerms {
    let n_mal = malicious.iter().filter(|&&m| m).count();
    let n_ben = malicious.len() - n_mal;
    let reduced = |want: bool| {
        actions
            .iter()
            .zip(malicious)
            .filter(|(a, &m)| m == want && **a == TrustAction::Reduce)
            .count()
    };
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let active = actions.iter().filter(|&&a| a != TrustAction::Hold).count();
    RewardTerms {
        acc_delta,
        trust_correctness: frac(reduced(true), n_mal) - frac(reduced(false), n_ben),
        action_cost: frac(active, actions.len()),
        asr_delta,
    }
}

/// Per-client shares that sum to the round reward: the shared accuracy and
/// ASR terms are split evenly, the correctness and cost terms go to the
/// client that earned them.
pub fn client_reward_shares(
    actions: &[TrustAction],
    malicious: &[bool],
    acc_delta: f64,
    asr_delta: f64,
    w: &RewardWeights,
) -> Vec<f64> {
    let k = actions.len();
    if k == 0 {
        return Vec::new();
    }
    let n_mal = malicious.iter().filter(|&&m| m).count();
    let n_ben = k - n_mal;
    let shared = (w.perf * acc_delta * 100.0 - w.attack * asr_delta * 100.0) / k as f64;
    actions
        .iter()
        .zip(malicious)
        .map(|(&a, &m)| {
            let mut r = shared;
            if a == TrustAction::Reduce {
                r += if m {
                    w.trust / n_mal as f64
                } else {
                    -w.trust / n_ben as f64
                };
            }
            if a != TrustAction::Hold {
                r -= w.cost / k as f64;
            }
            r
        })
        .collect()
}
