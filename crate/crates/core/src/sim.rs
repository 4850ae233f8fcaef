//! Round-level orchestration of the trust-aware defense.
//!
//! A [`Simulation`] owns one controller and runs `training_episodes` full
//! simulated runs to train it, followed by the evaluated run (episode 0).
//! Every episode draws its data, partition, malicious identities, rosters and
//! minibatch orders from streams keyed by `(master_seed, purpose, [episode,
//! ...])`, so episodes are independent and the evaluated run is reproducible
//! on its own.
//!
//! Per round, in order: roster, poisoning and local training, signals and
//! budget masking, belief update, state encoding, controller actions, trust
//! update then trust map, aggregation, metrics, reward, learning.

use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{client_reward_shares, encode_state, round_reward_terms, Agent, AgentState, Transition};
use crate::attacks::{poison_data, poison_update, AttackError, RoundRoster, ThreatModel};
use crate::config::{AttackKind, ConfigError, SimConfig};
use crate::dataset::{dirichlet_partition, make_synthetic, DataError, Partition, Sample, Splits};
use crate::metrics::{self, roc_auc, MetricError, RoundRecord};
use crate::nn::{local_train, MlpModel, ModelError, ParamVector};
use crate::rng::{derive_stream, RngStream};
use crate::signals::{
    apply_budget, directional_alignment, fuse_scores, magnitude_deviation, mean_delta, observes, AnomalyScores,
    ClientObservation, SignalError, VAL,
};
use crate::trust::{aggregate, bayes_update, trust_map, trust_update, BeliefState, Contribution, TrustAction, TrustVector};

pub const ECE_BINS: usize = 15;
pub const CONVERGENCE_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("round {round}: {source}")]
    Round { round: usize, source: RoundError },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoundError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("attack: {0}")]
    Attack(#[from] AttackError),
    #[error("signals: {0}")]
    Signal(#[from] SignalError),
    #[error("metrics: {0}")]
    Metric(#[from] MetricError),
    #[error("aggregation: {0}")]
    Aggregation(#[from] crate::trust::AggregationError),
}

/// Intermediate values of the most recent round, for inspection in tests.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub roster: RoundRoster,
    pub observations: Vec<ClientObservation>,
    pub scores: Vec<AnomalyScores>,
    pub beliefs_before: Vec<f64>,
    pub states: Vec<AgentState>,
    pub actions: Vec<TrustAction>,
    pub trust_after: Vec<f64>,
    pub aggregation_weights: Vec<(usize, f64)>,
    pub submitted: Vec<ParamVector>,
    pub global_after: ParamVector,
}

/// State of one simulated federated run.
#[derive(Debug, Clone)]
pub struct Episode {
    pub index: u64,
    pub splits: Splits,
    pub partition: Partition,
    pub client_data: Vec<Vec<Sample>>,
    pub threat: ThreatModel,
    pub global: MlpModel,
    pub beliefs: BeliefState,
    pub trust: TrustVector,
    pub round: usize,
    prev_val_acc: f64,
    prev_val_asr: f64,
    pub last_trace: Option<RoundTrace>,
}

impl Episode {
    pub fn new(cfg: &SimConfig, seed: u64, index: u64, splits: Option<&Splits>) -> Result<Self, SimError> {
        let splits = match splits {
            Some(s) => s.clone(),
            None => make_synthetic(&cfg.data, &mut derive_stream(seed, "data", &[index])),
        };
        let partition = dirichlet_partition(
            &splits.train,
            cfg.n_clients,
            cfg.dirichlet_alpha,
            &mut derive_stream(seed, "partition", &[index]),
        )?;
        let client_data = partition
            .client_indices
            .iter()
            .map(|idx| splits.train.subset(idx))
            .collect();
        let threat = ThreatModel::draw(
            cfg.n_clients,
            cfg.malicious_ratio,
            &mut derive_stream(seed, "identity", &[index]),
        );
        let global = MlpModel::init(
            splits.train.feature_dim,
            cfg.client_train.hidden_units,
            splits.train.n_classes,
            &mut derive_stream(seed, "init", &[index]),
        );
        let prev_val_acc = metrics::accuracy(&global, &splits.val).map_err(|e| SimError::Round {
            round: 0,
            source: e.into(),
        })?;
        let prev_val_asr = val_asr(cfg, &global, &splits).map_err(|e| SimError::Round {
            round: 0,
            source: e.into(),
        })?;
        Ok(Self {
            index,
            splits,
            partition,
            client_data,
            threat,
            global,
            beliefs: BeliefState::new(cfg.n_clients),
            trust: TrustVector::new(cfg.n_clients),
            round: 0,
            prev_val_acc,
            prev_val_asr,
            last_trace: None,
        })
    }
}

fn val_asr(cfg: &SimConfig, model: &MlpModel, splits: &Splits) -> Result<f64, MetricError> {
    if cfg.attack.kind != AttackKind::Backdoor {
        return Ok(0.0);
    }
    match metrics::attack_success_rate(model, &splits.val, &cfg.attack) {
        Ok(v) => Ok(v),
        Err(MetricError::NoVictims) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Everything produced by one evaluated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    /// Trust entering each round, `rounds x n_clients`.
    pub trust_history: Vec<Vec<f64>>,
    /// Belief entering each round, `rounds x n_clients`.
    pub belief_history: Vec<Vec<f64>>,
    pub malicious: Vec<usize>,
    /// ROC-AUC over all (participant, round) belief scores.
    pub pooled_auc: Option<f64>,
    pub convergence_round: usize,
    /// False when the attack has no backdoor and ASR is reported as 0.
    pub asr_applicable: bool,
    pub td_losses: Vec<f64>,
}

impl RunOutput {
    pub fn final_record(&self) -> Option<&RoundRecord> {
        self.records.last()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.reward).sum::<f64>() / self.records.len() as f64
    }

    /// Mean of the defined per-round AUCs for rounds in `from..=to`.
    pub fn mean_auc(&self, from: usize, to: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.round >= from && r.round <= to)
            .filter_map(|r| r.roc_auc)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

/// A controller together with the evaluated episode it defends.
pub struct Simulation {
    pub cfg: SimConfig,
    pub seed: u64,
    pub agent: Agent,
    pub episode: Episode,
    records: Vec<RoundRecord>,
    td_losses: Vec<f64>,
    pooled_scores: Vec<f64>,
    pooled_labels: Vec<bool>,
    trained: bool,
    external: Option<Splits>,
}

impl Simulation {
    /// Builds a simulation on synthetic data for `cfg.master_seed`.
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        Self::build(cfg, None)
    }

    /// Builds a simulation on externally supplied splits.
    pub fn with_splits(cfg: SimConfig, splits: Splits) -> Result<Self, SimError> {
        Self::build(cfg, Some(splits))
    }

    fn build(cfg: SimConfig, external: Option<Splits>) -> Result<Self, SimError> {
        cfg.validate()?;
        let seed = cfg.master_seed;
        let agent = Agent::new(&cfg, &mut derive_stream(seed, "agent-init", &[]));
        let episode = Episode::new(&cfg, seed, 0, external.as_ref())?;
        Ok(Self {
            cfg,
            seed,
            agent,
            episode,
            records: Vec::new(),
            td_losses: Vec::new(),
            pooled_scores: Vec::new(),
            pooled_labels: Vec::new(),
            trained: false,
            external,
        })
    }

    fn defense_active(&self) -> bool {
        !self.cfg.trust.frozen
    }

    /// Runs the training episodes (once). No-op for non-learning controllers
    /// and when the defense is disabled.
    pub fn train_agent(&mut self) -> Result<(), SimError> {
        if self.trained {
            return Ok(());
        }
        self.trained = true;
        if !self.agent.kind.learns() || !self.defense_active() {
            return Ok(());
        }
        for e in 1..=self.cfg.training_episodes as u64 {
            let mut ep = Episode::new(&self.cfg, self.seed, e, self.external.as_ref())?;
            for t in 1..=self.cfg.rounds {
                step_round(&self.cfg, self.seed, &mut self.agent, &mut ep, t, false)
                    .map_err(|source| SimError::Round { round: t, source })?;
            }
        }
        Ok(())
    }

    /// Replaces the controller with an already trained one; training episodes
    /// are then skipped.
    pub fn install_agent(&mut self, agent: Agent) {
        self.agent = agent;
        self.trained = true;
    }

    /// Runs the next round of the evaluated episode.
    pub fn run_round(&mut self) -> Result<RoundRecord, SimError> {
        let t = self.episode.round + 1;
        let outcome = step_round(&self.cfg, self.seed, &mut self.agent, &mut self.episode, t, true)
            .map_err(|source| SimError::Round { round: t, source })?;
        if let Some(loss) = outcome.td_loss {
            self.td_losses.push(loss);
        }
        self.pooled_scores.extend(outcome.auc_scores);
        self.pooled_labels.extend(outcome.auc_labels);
        let record = outcome.record.expect("evaluated rounds produce a record");
        self.records.push(record.clone());
        Ok(record)
    }

    /// Trains the controller, then runs every round of the evaluated episode.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        self.train_agent()?;
        while self.episode.round < self.cfg.rounds {
            self.run_round()?;
        }
        Ok(self.finish())
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn finish(self) -> RunOutput {
        let accs: Vec<f64> = self.records.iter().map(|r| r.accuracy).collect();
        RunOutput {
            seed: self.seed,
            convergence_round: metrics::convergence_round(&accs, CONVERGENCE_WINDOW),
            pooled_auc: roc_auc(&self.pooled_scores, &self.pooled_labels),
            records: self.records,
            trust_history: self.episode.trust.history,
            belief_history: self.episode.beliefs.history,
            malicious: self.episode.threat.identities().to_vec(),
            asr_applicable: self.cfg.attack.kind == AttackKind::Backdoor,
            td_losses: self.td_losses,
        }
    }
}

struct RoundOutcome {
    record: Option<RoundRecord>,
    td_loss: Option<f64>,
    auc_scores: Vec<f64>,
    auc_labels: Vec<bool>,
}

fn step_round(
    cfg: &SimConfig,
    seed: u64,
    agent: &mut Agent,
    ep: &mut Episode,
    t: usize,
    evaluate: bool,
) -> Result<RoundOutcome, RoundError> {
    let e = ep.index;
    let round = t as u64;
    let stream = |purpose: &str, idx: &[u64]| -> RngStream {
        let mut key = vec![e, round];
        key.extend_from_slice(idx);
        derive_stream(seed, purpose, &key)
    };

    ep.trust.snapshot();
    ep.beliefs.snapshot();

    // Roster, poisoning, local training.
    let roster = ep.threat.roster(cfg.n_clients, cfg.participants_per_round, &mut stream("roster", &[]));
    let global_params = ep.global.params().clone();
    let mut honest = Vec::with_capacity(roster.participating.len());
    for &c in &roster.participating {
        let data = if roster.is_malicious(c) && cfg.attack.kind == AttackKind::Backdoor {
            poison_data(&ep.client_data[c], &cfg.attack, &mut stream("attack", &[c as u64]))?
        } else {
            ep.client_data[c].clone()
        };
        honest.push(local_train(
            &ep.global,
            &data,
            &cfg.client_train,
            &mut stream("client-batch", &[c as u64]),
        )?);
    }
    let submitted: Vec<ParamVector> = if cfg.attack.kind == AttackKind::Backdoor {
        honest
    } else {
        let peers: Vec<ParamVector> = roster
            .participating
            .iter()
            .zip(&honest)
            .filter(|(c, _)| roster.is_malicious(**c))
            .map(|(_, u)| u.clone())
            .collect();
        roster
            .participating
            .iter()
            .zip(&honest)
            .map(|(&c, u)| {
                if roster.is_malicious(c) {
                    poison_update(u, &global_params, &peers, &cfg.attack)
                } else {
                    Ok(u.clone())
                }
            })
            .collect::<Result<_, _>>()?
    };

    // Defender-visible pipeline: signals -> beliefs -> controller -> trust.
    let refs: Vec<&ParamVector> = submitted.iter().collect();
    let consensus = mean_delta(&refs, &global_params)?;
    let visible = observes(cfg.signal_budget);
    let base_val_acc = ep.prev_val_acc;
    let mut observations = Vec::with_capacity(submitted.len());
    for u in &submitted {
        let directional = directional_alignment(u, &global_params, &consensus)?;
        let magnitude = magnitude_deviation(u, &refs, &global_params)?;
        let validation = if visible[VAL] {
            let candidate = ep.global.with_params(u.clone())?;
            metrics::accuracy(&candidate, &ep.splits.val)? - base_val_acc
        } else {
            0.0
        };
        let raw = ClientObservation::full(directional, magnitude, validation);
        observations.push(apply_budget(&raw, cfg.signal_budget));
    }
    let scores = observations
        .iter()
        .map(|o| fuse_scores(o, &cfg.signals))
        .collect::<Result<Vec<_>, _>>()?;

    let beliefs_before: Vec<f64> = roster.participating.iter().map(|&c| ep.beliefs.p_malicious[c]).collect();
    for (&c, s) in roster.participating.iter().zip(&scores) {
        ep.beliefs.p_malicious[c] = bayes_update(ep.beliefs.p_malicious[c], s.anomaly, &cfg.trust);
    }

    let states: Vec<AgentState> = roster
        .participating
        .iter()
        .zip(&observations)
        .map(|(&c, o)| encode_state(o, ep.beliefs.p_malicious[c], ep.trust.ts[c]))
        .collect();
    let defense = !cfg.trust.frozen;
    let actions: Vec<TrustAction> = if defense {
        let mut act_rng = stream("action", &[]);
        states.iter().map(|s| agent.select_action(s, &mut act_rng)).collect()
    } else {
        vec![TrustAction::Hold; states.len()]
    };
    if defense {
        for ((&c, s), &a) in roster.participating.iter().zip(&scores).zip(&actions) {
            let evidence = trust_update(ep.trust.ts[c], s.anomaly, s.contribution, &cfg.trust);
            ep.trust.ts[c] = trust_map(ep.beliefs.p_malicious[c], evidence, a, &cfg.trust);
        }
    }

    let contributions: Vec<Contribution<'_>> = roster
        .participating
        .iter()
        .zip(&submitted)
        .map(|(&c, u)| Contribution {
            client: c,
            update: u,
            n_samples: ep.client_data[c].len(),
        })
        .collect();
    let agg = aggregate(&contributions, &ep.trust, cfg.trust.renormalize)?;
    ep.global = ep.global.with_params(agg.params)?;

    // Reward oracle (ground truth lives here and in the metrics only).
    let val_acc = metrics::accuracy(&ep.global, &ep.splits.val)?;
    let asr_now = val_asr(cfg, &ep.global, &ep.splits)?;
    let acc_delta = val_acc - ep.prev_val_acc;
    let asr_delta = asr_now - ep.prev_val_asr;
    ep.prev_val_acc = val_acc;
    ep.prev_val_asr = asr_now;
    let truth: Vec<bool> = roster.participating.iter().map(|&c| roster.is_malicious(c)).collect();
    let terms = round_reward_terms(&actions, &truth, acc_delta, asr_delta);
    let reward = crate::agents::compute_reward(&terms, &cfg.reward_weights);

    let td_loss = if defense && agent.kind.learns() {
        let shares = client_reward_shares(&actions, &truth, acc_delta, asr_delta, &cfg.reward_weights);
        let terminal = t == cfg.rounds;
        let transitions: Vec<Transition> = roster
            .participating
            .iter()
            .enumerate()
            .map(|(j, &c)| Transition {
                state: states[j].0.to_vec(),
                action: actions[j].index(),
                reward: shares[j],
                next_state: encode_state(&observations[j], ep.beliefs.p_malicious[c], ep.trust.ts[c]).0.to_vec(),
                terminal,
            })
            .collect();
        agent.learn(transitions, &mut stream("learn", &[]))
    } else {
        None
    };

    ep.round = t;
    let auc_scores: Vec<f64> = roster.participating.iter().map(|&c| ep.beliefs.p_malicious[c]).collect();
    let record = if evaluate {
        let test = &ep.splits.test;
        let accuracy = metrics::accuracy(&ep.global, test)?;
        let asr = if cfg.attack.kind == AttackKind::Backdoor {
            match metrics::attack_success_rate(&ep.global, test, &cfg.attack) {
                Ok(v) => v,
                Err(MetricError::NoVictims) => 0.0,
                Err(err) => return Err(err.into()),
            }
        } else {
            0.0
        };
        Some(RoundRecord {
            round: t,
            accuracy,
            asr,
            roc_auc: roc_auc(&auc_scores, &truth),
            ece: metrics::model_ece(&ep.global, test, ECE_BINS)?,
            reward,
            per_client_trust: ep.trust.ts.clone(),
            per_client_belief: ep.beliefs.p_malicious.clone(),
        })
    } else {
        None
    };

    ep.last_trace = Some(RoundTrace {
        roster,
        observations,
        scores,
        beliefs_before,
        states,
        actions,
        trust_after: ep.trust.ts.clone(),
        aggregation_weights: agg.weights,
        submitted,
        global_after: ep.global.params().clone(),
    });

    Ok(RoundOutcome {
        record,
        td_loss,
        auc_scores,
        auc_labels: truth,
    })
}

/// Runs a full simulation for `cfg`.
pub fn run_simulation(cfg: SimConfig) -> Result<RunOutput, SimError> {
    Simulation::new(cfg)?.run()
}
