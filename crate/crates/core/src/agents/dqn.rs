use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, Transition};
use crate::config::DqnConfig;
use crate::nn::{Mlp, ParamVector};
use crate::rng::RngStream;

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// Online Q-network plus its frozen target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub online: Mlp,
    pub target: Mlp,
}

impl QNetwork {
    /// `state_dim -> hidden -> hidden -> n_actions`, ReLU hidden layers.
    pub fn new(state_dim: usize, hidden: usize, n_actions: usize, rng: &mut RngStream) -> Self {
        let online = Mlp::init(&[state_dim, hidden, hidden, n_actions], rng);
        Self {
            target: online.clone(),
            online,
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.online.forward(state).expect("state dimension matches network")
    }

    pub fn target_q_values(&self, state: &[f64]) -> Vec<f64> {
        self.target.forward(state).expect("state dimension matches network")
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// TD targets from the frozen network: `r` for terminal transitions,
    /// otherwise `r + gamma * max_a' Q_target(s', a')`.
    pub fn td_targets(&self, batch: &[&Transition], gamma: f64) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    let next = self.target_q_values(&t.next_state);
                    let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    t.reward + gamma * best
                }
            })
            .collect()
    }

    /// Mean squared TD error of the online network and its gradient.
    pub fn td_loss_and_grad(&self, batch: &[&Transition], targets: &[f64]) -> (f64, ParamVector) {
        let mut grad = ParamVector::zeros(self.online.params().len());
        let mut half_sq = 0.0;
        for (t, &y) in batch.iter().zip(targets) {
            half_sq += self.online.accumulate_squared_error(&t.state, &[(t.action, y)], &mut grad);
        }
        let n = batch.len().max(1) as f64;
        // d/dθ of mean (y - Q)^2 is 2/n times the accumulated 0.5-scaled gradient.
        grad.scale(2.0 / n);
        (2.0 * half_sq / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnAgent {
    pub net: QNetwork,
    pub buffer: ReplayBuffer,
    pub optimizer: Adam,
    pub cfg: DqnConfig,
    pub learn_steps: u64,
}

impl DqnAgent {
    pub fn new(state_dim: usize, n_actions: usize, cfg: &DqnConfig, rng: &mut RngStream) -> Self {
        let net = QNetwork::new(state_dim, cfg.hidden_units, n_actions, rng);
        let optimizer = Adam::new(net.online.params().len(), cfg.learning_rate);
        Self {
            net,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            optimizer,
            cfg: cfg.clone(),
            learn_steps: 0,
        }
    }

    /// One learning step; `None` while the buffer holds fewer than a batch.
    pub fn learn(&mut self, rng: &mut RngStream) -> Option<f64> {
        dqn_learn(&mut self.net, &self.buffer, &mut self.optimizer, &self.cfg, &mut self.learn_steps, rng)
    }
}

/// Samples a batch, takes one clipped optimizer step on the mean squared TD
/// error and syncs the target network every `target_update_every` steps.
/// Returns the pre-step batch loss.
pub fn dqn_learn(
    net: &mut QNetwork,
    buffer: &ReplayBuffer,
    optimizer: &mut Adam,
    cfg: &DqnConfig,
    learn_steps: &mut u64,
    rng: &mut RngStream,
) -> Option<f64> {
    if buffer.len() < cfg.batch_size {
        return None;
    }
    let batch = buffer.sample(cfg.batch_size, rng);
    let targets = net.td_targets(&batch, cfg.gamma);
    let (loss, mut grad) = net.td_loss_and_grad(&batch, &targets);
    let norm = grad.norm();
    if norm > cfg.grad_clip_norm {
        grad.scale(cfg.grad_clip_norm / norm);
    }
    optimizer.step(net.online.params_mut(), &grad);
    *learn_steps += 1;
    if *learn_steps % cfg.target_update_every as u64 == 0 {
        net.sync_target();
    }
    Some(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn transition(state: [f64; 2], action: usize, reward: f64, next: [f64; 2], terminal: bool) -> Transition {
        Transition {
            state: state.to_vec(),
            action,
            reward,
            next_state: next.to_vec(),
            terminal,
        }
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let net = QNetwork::new(2, 8, 2, &mut derive_stream(1, "q", &[]));
        let ts = [
            transition([1.0, 0.0], 0, 0.3, [0.0, 1.0], false),
            transition([0.0, 1.0], 1, -1.2, [1.0, 0.0], true),
        ];
        let refs: Vec<&Transition> = ts.iter().collect();
        assert_eq!(net.td_targets(&refs, 0.0), vec![0.3, -1.2]);
    }

    #[test]
    fn repeated_transition_converges_to_reward() {
        let cfg = DqnConfig {
            gamma: 0.9,
            batch_size: 8,
            buffer_capacity: 64,
            ..DqnConfig::default()
        };
        let mut agent = DqnAgent::new(2, 2, &cfg, &mut derive_stream(2, "q", &[]));
        for _ in 0..16 {
            agent.buffer.push(transition([1.0, 0.5], 1, 0.7, [0.0, 0.0], true));
        }
        let mut rng = derive_stream(2, "learn", &[]);
        let mut loss = f64::INFINITY;
        for _ in 0..3000 {
            loss = agent.learn(&mut rng).unwrap();
        }
        assert!(loss < 1e-4, "loss {loss}");
        assert!((agent.net.q_values(&[1.0, 0.5])[1] - 0.7).abs() < 1e-2);
    }

    #[test]
    fn target_is_frozen_between_syncs() {
        let cfg = DqnConfig {
            batch_size: 4,
            buffer_capacity: 16,
            target_update_every: 10,
            ..DqnConfig::default()
        };
        let mut agent = DqnAgent::new(2, 2, &cfg, &mut derive_stream(3, "q", &[]));
        for i in 0..8 {
            agent.buffer.push(transition([i as f64 * 0.1, 1.0], i % 2, 1.0, [0.5, 0.5], false));
        }
        let probe = [0.3, 0.7];
        let frozen = agent.net.target_q_values(&probe);
        let mut rng = derive_stream(3, "learn", &[]);
        for _ in 0..9 {
            agent.learn(&mut rng).unwrap();
            assert_eq!(agent.net.target_q_values(&probe), frozen);
        }
        assert_ne!(agent.net.q_values(&probe), frozen);
        agent.learn(&mut rng).unwrap();
        assert_eq!(agent.net.target_q_values(&probe), agent.net.q_values(&probe));
    }

    #[test]
    fn insufficient_buffer_skips() {
        let cfg = DqnConfig::default();
        let mut agent = DqnAgent::new(2, 2, &cfg, &mut derive_stream(4, "q", &[]));
        agent.buffer.push(transition([0.0, 0.0], 0, 0.0, [0.0, 0.0], true));
        assert_eq!(agent.learn(&mut derive_stream(4, "l", &[])), None);
    }
}
