use serde::{Deserialize, Serialize};

use super::replay::Transition;
use super::{AgentState, N_ACTIONS, STATE_DIM};

/// Q(s, a) = w_a · s + b_a, trained with one TD(0) step per decision and no
/// replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQAgent {
    pub weights: [[f64; STATE_DIM]; N_ACTIONS],
    pub bias: [f64; N_ACTIONS],
    pub learning_rate: f64,
    pub gamma: f64,
}

impl LinearQAgent {
    pub fn new(learning_rate: f64, gamma: f64) -> Self {
        Self {
            weights: [[0.0; STATE_DIM]; N_ACTIONS],
            bias: [0.0; N_ACTIONS],
            learning_rate,
            gamma,
        }
    }

    fn q_slice(&self, s: &[f64]) -> [f64; N_ACTIONS] {
        let mut q = self.bias;
        for (qa, w) in q.iter_mut().zip(&self.weights) {
            *qa += w.iter().zip(s).map(|(w, x)| w * x).sum::<f64>();
        }
        q
    }

    pub fn q_values(&self, state: &AgentState) -> [f64; N_ACTIONS] {
        self.q_slice(state.as_slice())
    }

    /// Normalized TD(0) step: the step size is divided by `1 + ‖s‖²` so the
    /// unbounded magnitude feature cannot blow the weights up.
    pub fn td_step(&mut self, t: &Transition) {
        let q = self.q_slice(&t.state)[t.action];
        let target = if t.terminal {
            t.reward
        } else {
            t.reward
                + self.gamma
                    * self
                        .q_slice(&t.next_state)
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
        };
        let sq: f64 = t.state.iter().map(|x| x * x).sum();
        let step = self.learning_rate * (target - q) / (1.0 + sq);
        for (w, x) in self.weights[t.action].iter_mut().zip(&t.state) {
            *w += step * x;
        }
        self.bias[t.action] += step;
    }
}
