//! Simulation configuration and its validation rules.
//!
//! Every struct deserializes with `#[serde(default)]`, so a config file only
//! needs the fields it changes. Defaults reproduce the reference protocol:
//! 10 clients, 5 per round, 50 rounds, Dirichlet concentration 0.5 and a 20%
//! malicious population running the backdoor attack.

use alloc::string::String;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid config field `{field}`: {constraint}")]
pub struct ConfigError {
    pub field: String,
    pub constraint: String,
}

impl ConfigError {
    fn new(field: &str, constraint: &str) -> Self {
        Self {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Dqn,
    LinearQ,
    PolicyGradient,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [
        AgentKind::Random,
        AgentKind::LinearQ,
        AgentKind::PolicyGradient,
        AgentKind::Dqn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::LinearQ => "linear_q",
            AgentKind::PolicyGradient => "policy_gradient",
            AgentKind::Random => "random",
        }
    }

    /// Agents that update their parameters from experience.
    pub fn learns(self) -> bool {
        !matches!(self, AgentKind::Random)
    }
}

/// Which anomaly signals the defender can observe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalBudget {
    Full,
    NoValidation,
    DirectionalOnly,
}

impl SignalBudget {
    pub const ALL: [SignalBudget; 3] = [
        SignalBudget::Full,
        SignalBudget::NoValidation,
        SignalBudget::DirectionalOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SignalBudget::Full => "full",
            SignalBudget::NoValidation => "no_validation",
            SignalBudget::DirectionalOnly => "directional_only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Backdoor,
    SignFlip,
    GradientPush,
    Collusion,
}

impl AttackKind {
    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Backdoor => "backdoor",
            AttackKind::SignFlip => "sign_flip",
            AttackKind::GradientPush => "gradient_push",
            AttackKind::Collusion => "collusion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub strength: f64,
    pub backdoor_fraction: f64,
    pub trigger_size: usize,
    pub target_label: usize,
    /// Multiplier on the malicious delta for `gradient_push` is
    /// `1 + push_gain * strength`.
    pub push_gain: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Backdoor,
            strength: 0.5,
            backdoor_fraction: 0.1,
            trigger_size: 4,
            target_label: 0,
            push_gain: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_units: usize,
    pub target_update_every: usize,
    pub grad_clip_norm: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            eps_start: 1.0,
            eps_end: 0.01,
            eps_decay_steps: 5000,
            buffer_capacity: 10_000,
            batch_size: 64,
            learning_rate: 1e-3,
            hidden_units: 64,
            target_update_every: 100,
            grad_clip_norm: 1.0,
        }
    }
}

/// Step sizes for the two non-DQN learning controllers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub linear_q_learning_rate: f64,
    pub pg_learning_rate: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            linear_q_learning_rate: 0.01,
            pg_learning_rate: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub lambda_penalty: f64,
    pub eta_reward: f64,
    pub likelihood_gain: f64,
    pub likelihood_center: f64,
    pub action_nudge: f64,
    pub smoothing: f64,
    /// Renormalize aggregation weights to sum to one. When false the raw
    /// `(n_i / n) * TS(i)` weights are used.
    pub renormalize: bool,
    /// Keep every trust score at 1.0 (plain FedAvg, defense disabled).
    pub frozen: bool,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self {
            lambda_penalty: 0.3,
            eta_reward: 0.2,
            likelihood_gain: 4.0,
            likelihood_center: 0.5,
            action_nudge: 0.1,
            smoothing: 0.2,
            renormalize: true,
            frozen: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub perf: f64,
    pub trust: f64,
    pub cost: f64,
    pub attack: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            perf: 1.0,
            trust: 1.0,
            cost: 0.5,
            attack: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub hidden_units: usize,
}

impl Default for ClientTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.01,
            local_epochs: 1,
            hidden_units: 32,
        }
    }
}

/// Shape of the synthetic Gaussian-cluster dataset.
///
/// The defaults give overlapping clusters (best accuracy around 0.6) and
/// about 4000 samples per client, enough local SGD steps per round for label
/// skew to pull client models apart. With well separated clusters every
/// setting saturates near 100% and neither heterogeneity nor the defense
/// shows up in the metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub noise: f64,
    pub mean_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            feature_dim: 32,
            n_train: 40_000,
            n_val: 256,
            n_test: 1000,
            noise: 1.0,
            mean_scale: 0.35,
        }
    }
}

/// Anomaly fusion weights `(directional, magnitude, validation)` and the
/// scale that maps an accuracy delta onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    pub w_dir: f64,
    pub w_mag: f64,
    pub w_val: f64,
    pub validation_scale: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            w_dir: 0.4,
            w_mag: 0.2,
            w_val: 0.4,
            validation_scale: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_clients: usize,
    pub participants_per_round: usize,
    pub rounds: usize,
    pub dirichlet_alpha: f64,
    pub malicious_ratio: f64,
    pub agent_kind: AgentKind,
    pub signal_budget: SignalBudget,
    /// Full simulated runs used to train a learning controller before the
    /// evaluated run. Each uses its own derived data and roster streams.
    pub training_episodes: usize,
    pub master_seed: u64,
    pub attack: AttackConfig,
    pub dqn: DqnConfig,
    pub baselines: BaselineConfig,
    pub trust: TrustConfig,
    pub reward_weights: RewardWeights,
    pub client_train: ClientTrainConfig,
    pub data: DataConfig,
    pub signals: SignalConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_clients: 10,
            participants_per_round: 5,
            rounds: 50,
            dirichlet_alpha: 0.5,
            malicious_ratio: 0.2,
            agent_kind: AgentKind::Dqn,
            signal_budget: SignalBudget::Full,
            training_episodes: 20,
            master_seed: 42,
            attack: AttackConfig::default(),
            dqn: DqnConfig::default(),
            baselines: BaselineConfig::default(),
            trust: TrustConfig::default(),
            reward_weights: RewardWeights::default(),
            client_train: ClientTrainConfig::default(),
            data: DataConfig::default(),
            signals: SignalConfig::default(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be a finite positive number"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be finite and non-negative"))
    }
}

fn fraction(field: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must lie in [0, 1]"))
    }
}

fn at_least_one(field: &str, v: usize) -> Result<(), ConfigError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be at least 1"))
    }
}

impl SimConfig {
    /// Checks every invariant, reporting the first violated field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        at_least_one("n_clients", self.n_clients)?;
        at_least_one("participants_per_round", self.participants_per_round)?;
        at_least_one("rounds", self.rounds)?;
        if self.participants_per_round > self.n_clients {
            return Err(ConfigError::new(
                "participants_per_round",
                "must not exceed n_clients",
            ));
        }
        positive("dirichlet_alpha", self.dirichlet_alpha)?;
        fraction("malicious_ratio", self.malicious_ratio)?;

        let a = &self.attack;
        fraction("attack.strength", a.strength)?;
        fraction("attack.backdoor_fraction", a.backdoor_fraction)?;
        at_least_one("attack.trigger_size", a.trigger_size)?;
        non_negative("attack.push_gain", a.push_gain)?;
        if a.target_label >= self.data.n_classes {
            return Err(ConfigError::new("attack.target_label", "must be < data.n_classes"));
        }
        if a.trigger_size * a.trigger_size > self.data.feature_dim {
            return Err(ConfigError::new(
                "attack.trigger_size",
                "trigger_size^2 must not exceed data.feature_dim",
            ));
        }

        let d = &self.dqn;
        if !(d.gamma > 0.0 && d.gamma <= 1.0) {
            return Err(ConfigError::new("dqn.gamma", "must lie in (0, 1]"));
        }
        fraction("dqn.eps_start", d.eps_start)?;
        fraction("dqn.eps_end", d.eps_end)?;
        if d.eps_start < d.eps_end {
            return Err(ConfigError::new("dqn.eps_start", "must be >= dqn.eps_end"));
        }
        at_least_one("dqn.eps_decay_steps", d.eps_decay_steps)?;
        at_least_one("dqn.buffer_capacity", d.buffer_capacity)?;
        at_least_one("dqn.batch_size", d.batch_size)?;
        if d.batch_size > d.buffer_capacity {
            return Err(ConfigError::new("dqn.batch_size", "must not exceed dqn.buffer_capacity"));
        }
        positive("dqn.learning_rate", d.learning_rate)?;
        at_least_one("dqn.hidden_units", d.hidden_units)?;
        at_least_one("dqn.target_update_every", d.target_update_every)?;
        positive("dqn.grad_clip_norm", d.grad_clip_norm)?;

        positive("baselines.linear_q_learning_rate", self.baselines.linear_q_learning_rate)?;
        positive("baselines.pg_learning_rate", self.baselines.pg_learning_rate)?;

        let t = &self.trust;
        positive("trust.lambda_penalty", t.lambda_penalty)?;
        positive("trust.eta_reward", t.eta_reward)?;
        positive("trust.likelihood_gain", t.likelihood_gain)?;
        if !t.likelihood_center.is_finite() {
            return Err(ConfigError::new("trust.likelihood_center", "must be finite"));
        }
        positive("trust.action_nudge", t.action_nudge)?;
        if !(0.0..1.0).contains(&t.smoothing) {
            return Err(ConfigError::new("trust.smoothing", "must lie in [0, 1)"));
        }

        let w = &self.reward_weights;
        non_negative("reward_weights.perf", w.perf)?;
        non_negative("reward_weights.trust", w.trust)?;
        non_negative("reward_weights.cost", w.cost)?;
        non_negative("reward_weights.attack", w.attack)?;

        let c = &self.client_train;
        at_least_one("client_train.batch_size", c.batch_size)?;
        non_negative("client_train.learning_rate", c.learning_rate)?;
        at_least_one("client_train.local_epochs", c.local_epochs)?;
        at_least_one("client_train.hidden_units", c.hidden_units)?;

        let data = &self.data;
        at_least_one("data.n_classes", data.n_classes)?;
        at_least_one("data.feature_dim", data.feature_dim)?;
        for (field, n) in [
            ("data.n_train", data.n_train),
            ("data.n_val", data.n_val),
            ("data.n_test", data.n_test),
        ] {
            if n < data.n_classes {
                return Err(ConfigError::new(field, "must be >= data.n_classes"));
            }
        }
        if data.n_train < self.n_clients {
            return Err(ConfigError::new("data.n_train", "must be >= n_clients"));
        }
        non_negative("data.noise", data.noise)?;
        non_negative("data.mean_scale", data.mean_scale)?;

        let s = &self.signals;
        non_negative("signals.w_dir", s.w_dir)?;
        non_negative("signals.w_mag", s.w_mag)?;
        non_negative("signals.w_val", s.w_val)?;
        if libm::fabs(s.w_dir + s.w_mag + s.w_val - 1.0) > 1e-9 {
            return Err(ConfigError::new("signals", "w_dir + w_mag + w_val must equal 1"));
        }
        positive("signals.validation_scale", s.validation_scale)?;
        Ok(())
    }

    /// Number of clients in the fixed malicious identity set.
    pub fn malicious_count(&self) -> usize {
        libm::round(self.malicious_ratio * self.n_clients as f64) as usize
    }
}
