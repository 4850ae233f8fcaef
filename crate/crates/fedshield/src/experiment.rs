//! Multi-seed experiment protocols and their summaries.

use std::path::PathBuf;

use fedshield_core::agents::Agent;
use fedshield_core::config::{AgentKind, SignalBudget};
use fedshield_core::dataset::Splits;
use fedshield_core::metrics::convergence_round;
use fedshield_core::rng::{seed_schedule, Experiment};
use fedshield_core::sim::{RunOutput, SimError, Simulation, CONVERGENCE_WINDOW};
use fedshield_core::SimConfig;
use rayon::prelude::*;
use serde::Serialize;

/// First round included in the per-run AUC statistic.
pub const AUC_FROM_ROUND: usize = 10;

pub const DIRICHLET_SWEEP: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 5.0];

/// One condition of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepValue {
    Base,
    Alpha(f64),
    Budget(SignalBudget),
    Agent(AgentKind),
}

impl SweepValue {
    /// Condition label used in file names and the `condition` CSV column.
    pub fn label(&self) -> String {
        match self {
            SweepValue::Base => "baseline".into(),
            SweepValue::Alpha(a) => format!("alpha={a}"),
            SweepValue::Budget(b) => format!("budget={}", b.label()),
            SweepValue::Agent(k) => format!("agent={}", k.label()),
        }
    }

    pub fn apply(&self, cfg: &mut SimConfig) {
        match *self {
            SweepValue::Base => {}
            SweepValue::Alpha(a) => cfg.dirichlet_alpha = a,
            SweepValue::Budget(b) => cfg.signal_budget = b,
            SweepValue::Agent(k) => cfg.agent_kind = k,
        }
    }
}

pub fn default_sweep(kind: Experiment) -> Vec<SweepValue> {
    match kind {
        Experiment::Baseline => vec![SweepValue::Base],
        Experiment::DirichletSweep => DIRICHLET_SWEEP.iter().map(|&a| SweepValue::Alpha(a)).collect(),
        Experiment::AgentComparison => AgentKind::ALL.iter().map(|&k| SweepValue::Agent(k)).collect(),
        Experiment::SignalBudget => SignalBudget::ALL.iter().map(|&b| SweepValue::Budget(b)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: Experiment,
    pub base_config: SimConfig,
    pub sweep_values: Vec<SweepValue>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Externally supplied data; synthetic data is generated when `None`.
    pub splits: Option<Splits>,
}

impl ExperimentSpec {
    /// Spec with the protocol's default sweep and seed list.
    pub fn new(kind: Experiment, base_config: SimConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            base_config,
            sweep_values: default_sweep(kind),
            seeds: seed_schedule(kind),
            out_dir: out_dir.into(),
            splits: None,
        }
    }

    pub fn n_runs(&self) -> usize {
        self.sweep_values.len() * self.seeds.len()
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub condition: String,
    pub n_runs: usize,
    pub n_failed: usize,
    pub final_accuracy: Option<Stat>,
    pub final_asr: Option<Stat>,
    /// Per-run mean of the defined per-round AUCs from round 10 on.
    pub auc: Option<Stat>,
    pub final_ece: Option<Stat>,
    pub convergence_round: Option<Stat>,
    pub mean_reward: Option<Stat>,
    /// AUC over all participant beliefs of a run pooled across rounds.
    pub pooled_auc: Option<Stat>,
}

/// AUC statistic of one run: the mean defined per-round AUC from round 10
/// (from round 1 when the run is shorter).
pub fn run_auc(out: &RunOutput) -> Option<f64> {
    let last = out.records.last()?.round;
    let from = if last >= AUC_FROM_ROUND { AUC_FROM_ROUND } else { 1 };
    out.mean_auc(from, last)
}

pub fn summarize(condition: &str, runs: &[RunOutput], n_failed: usize) -> RunSummary {
    let finals: Vec<_> = runs.iter().filter_map(|r| r.final_record()).collect();
    let col = |f: &dyn Fn(&fedshield_core::metrics::RoundRecord) -> f64| {
        Stat::of(&finals.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    RunSummary {
        condition: condition.to_string(),
        n_runs: runs.len() + n_failed,
        n_failed,
        final_accuracy: col(&|r| r.accuracy),
        final_asr: col(&|r| r.asr),
        auc: Stat::of(&runs.iter().filter_map(run_auc).collect::<Vec<_>>()),
        final_ece: col(&|r| r.ece),
        convergence_round: Stat::of(
            &runs
                .iter()
                .map(|r| {
                    let acc: Vec<f64> = r.records.iter().map(|x| x.accuracy).collect();
                    convergence_round(&acc, CONVERGENCE_WINDOW) as f64
                })
                .collect::<Vec<_>>(),
        ),
        mean_reward: Stat::of(&runs.iter().map(RunOutput::mean_reward).collect::<Vec<_>>()),
        pooled_auc: Stat::of(&runs.iter().filter_map(|r| r.pooled_auc).collect::<Vec<_>>()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub condition: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub value: SweepValue,
    pub label: String,
    pub runs: Vec<RunOutput>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: Experiment,
    pub seeds: Vec<u64>,
    pub conditions: Vec<ConditionResult>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentReport {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs one simulation, optionally on external data and with a pre-trained
/// controller. Returns the run output and the controller after the run.
pub fn run_single(
    cfg: SimConfig,
    splits: Option<Splits>,
    agent: Option<Agent>,
) -> Result<(RunOutput, Agent), SimError> {
    let mut sim = match splits {
        Some(s) => Simulation::with_splits(cfg, s)?,
        None => Simulation::new(cfg)?,
    };
    if let Some(a) = agent {
        sim.install_agent(a);
    }
    sim.train_agent()?;
    while sim.episode.round < sim.cfg.rounds {
        sim.run_round()?;
    }
    let agent = sim.agent.clone();
    Ok((sim.finish(), agent))
}

/// Runs every condition × seed on a pool of `jobs` worker threads (0 = one
/// per core). Failed runs are reported and left out of the summaries.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> ExperimentReport {
    let tasks: Vec<(usize, u64)> = (0..spec.sweep_values.len())
        .flat_map(|c| spec.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run = |&(c, seed): &(usize, u64)| -> Result<RunOutput, String> {
        let mut cfg = spec.base_config.clone();
        spec.sweep_values[c].apply(&mut cfg);
        cfg.master_seed = seed;
        log::info!("{} seed {seed}: starting", spec.sweep_values[c].label());
        let out = run_single(cfg, spec.splits.clone(), None).map(|(o, _)| o);
        match &out {
            Ok(_) => log::info!("{} seed {seed}: done", spec.sweep_values[c].label()),
            Err(e) => log::error!("{} seed {seed}: {e}", spec.sweep_values[c].label()),
        }
        out.map_err(|e| e.to_string())
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
    let results: Vec<Result<RunOutput, String>> = match pool {
        Ok(pool) => pool.install(|| tasks.par_iter().map(run).collect()),
        Err(e) => {
            log::warn!("could not build a worker pool ({e}); running sequentially");
            tasks.iter().map(run).collect()
        }
    };

    let mut per_condition: Vec<Vec<RunOutput>> = vec![Vec::new(); spec.sweep_values.len()];
    let mut failed = vec![0usize; spec.sweep_values.len()];
    let mut failures = Vec::new();
    for ((c, seed), res) in tasks.into_iter().zip(results) {
        match res {
            Ok(out) => per_condition[c].push(out),
            Err(error) => {
                failed[c] += 1;
                failures.push(RunFailure {
                    condition: spec.sweep_values[c].label(),
                    seed,
                    error,
                });
            }
        }
    }
    let conditions = spec
        .sweep_values
        .iter()
        .zip(per_condition)
        .zip(failed)
        .map(|((value, runs), n_failed)| {
            let label = value.label();
            let summary = summarize(&label, &runs, n_failed);
            ConditionResult {
                value: *value,
                label,
                runs,
                summary,
            }
        })
        .collect();
    ExperimentReport {
        kind: spec.kind,
        seeds: spec.seeds.clone(),
        conditions,
        failures,
    }
}
