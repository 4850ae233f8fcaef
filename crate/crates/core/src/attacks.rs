//! Malicious-client behaviors and per-round participation.
//!
//! The malicious identity set is drawn once per run; each round samples the
//! participants and marks the intersection. Ground-truth membership is only
//! read by metrics and the training reward.
//!
//! The update-space attacks are reconstructions: `sign_flip` negates and
//! scales the client's delta, `gradient_push` magnifies it, and `collusion`
//! blends each malicious delta toward the malicious mean.

use alloc::vec::Vec;

use crate::config::{AttackConfig, AttackKind};
use crate::dataset::{apply_trigger, DataError, Sample};
use crate::nn::ParamVector;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("{0:?} does not act on local data")]
    NotDataAttack(AttackKind),
    #[error("backdoor acts on data, not on updates")]
    NotUpdateAttack,
    #[error("collusion needs at least one malicious peer update")]
    NoPeers,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Clients that behave maliciously for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatModel {
    malicious: Vec<usize>,
}

impl ThreatModel {
    /// Draws `round(malicious_ratio * n_clients)` identities.
    pub fn draw(n_clients: usize, malicious_ratio: f64, rng: &mut RngStream) -> Self {
        let count = (libm::round(malicious_ratio * n_clients as f64) as usize).min(n_clients);
        let mut malicious = rng.sample_indices(n_clients, count);
        malicious.sort_unstable();
        Self { malicious }
    }

    pub fn from_ids(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Self { malicious: ids }
    }

    pub fn is_malicious(&self, client: usize) -> bool {
        self.malicious.binary_search(&client).is_ok()
    }

    pub fn identities(&self) -> &[usize] {
        &self.malicious
    }

    /// Samples `k` participants without replacement.
    pub fn roster(&self, n_clients: usize, k: usize, rng: &mut RngStream) -> RoundRoster {
        let mut participating = rng.sample_indices(n_clients, k);
        participating.sort_unstable();
        let malicious = participating
            .iter()
            .copied()
            .filter(|&c| self.is_malicious(c))
            .collect();
        RoundRoster {
            participating,
            malicious,
        }
    }
}

/// Participants of one round (sorted) and the malicious ones among them.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRoster {
    pub participating: Vec<usize>,
    pub malicious: Vec<usize>,
}

impl RoundRoster {
    pub fn is_malicious(&self, client: usize) -> bool {
        self.malicious.binary_search(&client).is_ok()
    }
}

/// Draws the identity set and one round's roster in a single call.
pub fn select_roster(
    n_clients: usize,
    k: usize,
    malicious_ratio: f64,
    identity_rng: &mut RngStream,
    round_rng: &mut RngStream,
) -> RoundRoster {
    ThreatModel::draw(n_clients, malicious_ratio, identity_rng).roster(n_clients, k, round_rng)
}

/// Stamps the trigger onto `floor(f * n) + Bernoulli(frac(f * n))` randomly
/// chosen samples and relabels them to the target class.
pub fn poison_data(data: &[Sample], cfg: &AttackConfig, rng: &mut RngStream) -> Result<Vec<Sample>, AttackError> {
    if cfg.kind != AttackKind::Backdoor {
        return Err(AttackError::NotDataAttack(cfg.kind));
    }
    let exact = cfg.backdoor_fraction * data.len() as f64;
    let whole = libm::floor(exact);
    let mut count = whole as usize;
    if rng.bernoulli(exact - whole) {
        count += 1;
    }
    let mut out = data.to_vec();
    for i in rng.sample_indices(data.len(), count.min(data.len())) {
        out[i] = apply_trigger(&data[i], cfg.trigger_size, cfg.target_label)?;
    }
    Ok(out)
}

/// Transforms an honestly trained update into the attacker's submission.
///
/// `peers` are the honest updates of every malicious participant this round
/// (the attacker included); only `collusion` reads them.
pub fn poison_update(
    honest_update: &ParamVector,
    global: &ParamVector,
    peers: &[ParamVector],
    cfg: &AttackConfig,
) -> Result<ParamVector, AttackError> {
    let delta = honest_update.delta_from(global);
    let mut out = global.clone();
    match cfg.kind {
        AttackKind::Backdoor => return Err(AttackError::NotUpdateAttack),
        AttackKind::SignFlip => out.add_scaled(-(1.0 + cfg.strength), &delta),
        AttackKind::GradientPush => out.add_scaled(1.0 + cfg.push_gain * cfg.strength, &delta),
        AttackKind::Collusion => {
            if peers.is_empty() {
                return Err(AttackError::NoPeers);
            }
            let mut shared = ParamVector::zeros(global.len());
            for p in peers {
                shared.add_scaled(1.0, &p.delta_from(global));
            }
            shared.scale(1.0 / peers.len() as f64);
            out.add_scaled(1.0 - cfg.strength, &delta);
            out.add_scaled(cfg.strength, &shared);
        }
    }
    Ok(out)
}
