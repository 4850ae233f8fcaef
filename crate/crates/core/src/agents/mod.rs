//! Defense controllers.
//!
//! Every controller scores one participant at a time from an 8-feature state
//! and emits `increase`, `reduce` or `hold` for that client's trust. The same
//! parameters are shared across clients, so the input size does not depend on
//! how many clients take part in a round.

mod dqn;
mod linear_q;
mod policy_gradient;
mod replay;
mod reward;

pub use dqn::{dqn_learn, Adam, DqnAgent, QNetwork};
pub use linear_q::LinearQAgent;
pub use policy_gradient::{pg_learn, PgStep, PolicyGradientAgent};
pub use replay::{ReplayBuffer, Transition};
pub use reward::{client_reward_shares, compute_reward, round_reward_terms, RewardTerms};

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, DqnConfig, SimConfig};
use crate::nn::argmax;
use crate::rng::RngStream;
use crate::signals::{ClientObservation, DIR, MAG, VAL};
use crate::trust::TrustAction;

pub const STATE_DIM: usize = 8;
pub const N_ACTIONS: usize = 3;

/// `(directional, magnitude, validation, mask_dir, mask_mag, mask_val, belief, trust)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState(pub [f64; STATE_DIM]);

impl AgentState {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn encode_state(obs: &ClientObservation, belief: f64, trust: f64) -> AgentState {
    let value = |i: usize, v: f64| if obs.mask[i] { v } else { 0.0 };
    AgentState([
        value(DIR, obs.directional),
        value(MAG, obs.magnitude),
        value(VAL, obs.validation),
        flag(obs.mask[DIR]),
        flag(obs.mask[MAG]),
        flag(obs.mask[VAL]),
        belief,
        trust,
    ])
}

/// Linear decay from `eps_start` to `eps_end` over `eps_decay_steps`, then flat.
pub fn epsilon(step: u64, cfg: &DqnConfig) -> f64 {
    if step >= cfg.eps_decay_steps as u64 {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_decay_steps as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

fn epsilon_greedy(q: &[f64], eps: f64, rng: &mut RngStream) -> usize {
    if rng.uniform() < eps {
        rng.below(q.len())
    } else {
        argmax(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Dqn(DqnAgent),
    LinearQ(LinearQAgent),
    PolicyGradient(PolicyGradientAgent),
    Random,
}

/// A controller plus its decision counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub kind: AgentKind,
    pub policy: Policy,
    /// Client decisions taken so far (drives the ε schedule).
    pub step: u64,
    pub schedule: DqnConfig,
}

impl Agent {
    pub fn new(cfg: &SimConfig, rng: &mut RngStream) -> Self {
        let policy = match cfg.agent_kind {
            AgentKind::Dqn => Policy::Dqn(DqnAgent::new(STATE_DIM, N_ACTIONS, &cfg.dqn, rng)),
            AgentKind::LinearQ => Policy::LinearQ(LinearQAgent::new(
                cfg.baselines.linear_q_learning_rate,
                cfg.dqn.gamma,
            )),
            AgentKind::PolicyGradient => Policy::PolicyGradient(PolicyGradientAgent::new(cfg.baselines.pg_learning_rate)),
            AgentKind::Random => Policy::Random,
        };
        Self {
            kind: cfg.agent_kind,
            policy,
            step: 0,
            schedule: cfg.dqn.clone(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        epsilon(self.step, &self.schedule)
    }

    /// Chooses one client's action and advances the decision counter.
    pub fn select_action(&mut self, state: &AgentState, rng: &mut RngStream) -> TrustAction {
        let eps = self.epsilon();
        let idx = match &self.policy {
            Policy::Dqn(d) => epsilon_greedy(&d.net.q_values(state.as_slice()), eps, rng),
            Policy::LinearQ(l) => epsilon_greedy(&l.q_values(state), eps, rng),
            Policy::PolicyGradient(p) => p.sample(state, rng),
            Policy::Random => rng.below(N_ACTIONS),
        };
        self.step += 1;
        TrustAction::from_index(idx).expect("controllers emit one of three actions")
    }

    /// Greedy action (no exploration, no counter update).
    pub fn greedy_action(&self, state: &AgentState) -> TrustAction {
        let idx = match &self.policy {
            Policy::Dqn(d) => argmax(&d.net.q_values(state.as_slice())),
            Policy::LinearQ(l) => argmax(&l.q_values(state)),
            Policy::PolicyGradient(p) => argmax(&p.probabilities(state)),
            Policy::Random => TrustAction::Hold.index(),
        };
        TrustAction::from_index(idx).expect("three actions")
    }

    /// Learns from one round of per-client transitions. Returns the DQN's TD
    /// loss when a learning step ran.
    pub fn learn(&mut self, transitions: Vec<Transition>, rng: &mut RngStream) -> Option<f64> {
        match &mut self.policy {
            Policy::Dqn(d) => {
                for t in transitions {
                    d.buffer.push(t);
                }
                d.learn(rng)
            }
            Policy::LinearQ(l) => {
                for t in &transitions {
                    l.td_step(t);
                }
                None
            }
            Policy::PolicyGradient(p) => {
                if !transitions.is_empty() {
                    let episode: Vec<PgStep> = transitions
                        .iter()
                        .map(|t| PgStep {
                            state: AgentState(t.state.clone().try_into().expect("8-feature state")),
                            action: t.action,
                            reward: t.reward,
                        })
                        .collect();
                    p.learn(&episode);
                }
                None
            }
            Policy::Random => None,
        }
    }
}

/// One action per participant, in the given order.
pub fn run_agent_round(agent: &mut Agent, states: &[AgentState], rng: &mut RngStream) -> Vec<TrustAction> {
    states.iter().map(|s| agent.select_action(s, rng)).collect()
}
