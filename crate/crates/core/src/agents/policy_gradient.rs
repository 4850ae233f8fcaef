use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{AgentState, N_ACTIONS, STATE_DIM};
use crate::nn::softmax;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgStep {
    pub state: AgentState,
    pub action: usize,
    pub reward: f64,
}

/// Linear softmax policy trained with REINFORCE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGradientAgent {
    pub weights: [[f64; STATE_DIM]; N_ACTIONS],
    pub bias: [f64; N_ACTIONS],
    pub learning_rate: f64,
    /// Discount inside an episode. Client decisions within one round are
    /// simultaneous, so the default is 0 (reward-to-go = own reward).
    pub discount: f64,
}

impl PolicyGradientAgent {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            weights: [[0.0; STATE_DIM]; N_ACTIONS],
            bias: [0.0; N_ACTIONS],
            learning_rate,
            discount: 0.0,
        }
    }

    fn logits(&self, state: &AgentState) -> [f64; N_ACTIONS] {
        let mut z = self.bias;
        for (za, w) in z.iter_mut().zip(&self.weights) {
            *za += w.iter().zip(state.as_slice()).map(|(w, x)| w * x).sum::<f64>();
        }
        z
    }

    pub fn probabilities(&self, state: &AgentState) -> Vec<f64> {
        softmax(&self.logits(state))
    }

    pub fn sample(&self, state: &AgentState, rng: &mut RngStream) -> usize {
        let p = self.probabilities(state);
        let u = rng.uniform();
        let mut acc = 0.0;
        for (a, pa) in p.iter().enumerate() {
            acc += pa;
            if u < acc {
                return a;
            }
        }
        N_ACTIONS - 1
    }

    pub fn learn(&mut self, episode: &[PgStep]) {
        pg_learn(self, episode);
    }

    /// Advantages: discounted reward-to-go minus its episode mean.
    pub fn advantages(&self, episode: &[PgStep]) -> Vec<f64> {
        let mut returns = alloc::vec![0.0; episode.len()];
        let mut running = 0.0;
        for (j, step) in episode.iter().enumerate().rev() {
            running = step.reward + self.discount * running;
            returns[j] = running;
        }
        let baseline = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
        returns.into_iter().map(|g| g - baseline).collect()
    }

    /// Surrogate objective `(1/T) Σ adv_j log π(a_j | s_j)` with fixed advantages.
    pub fn surrogate(&self, episode: &[PgStep], advantages: &[f64]) -> f64 {
        episode
            .iter()
            .zip(advantages)
            .map(|(s, adv)| adv * libm::log(self.probabilities(&s.state)[s.action]))
            .sum::<f64>()
            / episode.len().max(1) as f64
    }

    /// Gradient of [`Self::surrogate`] as `(weights, bias)`.
    pub fn surrogate_grad(
        &self,
        episode: &[PgStep],
        advantages: &[f64],
    ) -> ([[f64; STATE_DIM]; N_ACTIONS], [f64; N_ACTIONS]) {
        let mut gw = [[0.0; STATE_DIM]; N_ACTIONS];
        let mut gb = [0.0; N_ACTIONS];
        let scale = 1.0 / episode.len().max(1) as f64;
        for (step, &adv) in episode.iter().zip(advantages) {
            if adv == 0.0 {
                continue;
            }
            let p = self.probabilities(&step.state);
            for a in 0..N_ACTIONS {
                let coeff = adv * scale * (f64::from(u8::from(a == step.action)) - p[a]);
                for (g, x) in gw[a].iter_mut().zip(step.state.as_slice()) {
                    *g += coeff * x;
                }
                gb[a] += coeff;
            }
        }
        (gw, gb)
    }
}

/// One REINFORCE ascent step on a single episode.
pub fn pg_learn(policy: &mut PolicyGradientAgent, episode: &[PgStep]) {
    if episode.is_empty() {
        return;
    }
    let adv = policy.advantages(episode);
    let (gw, gb) = policy.surrogate_grad(episode, &adv);
    let lr = policy.learning_rate;
    for a in 0..N_ACTIONS {
        for (w, g) in policy.weights[a].iter_mut().zip(&gw[a]) {
            *w += lr * g;
        }
        policy.bias[a] += lr * gb[a];
    }
}
