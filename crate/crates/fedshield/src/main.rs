use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedshield::checkpoint::{load_agent, save_agent};
use fedshield::data_io::{read_splits, write_splits};
use fedshield::experiment::{run_experiment, run_single, summarize, ConditionResult, ExperimentReport, ExperimentSpec, SweepValue};
use fedshield::output::emit_outputs;
use fedshield::load_config;
use fedshield_core::dataset::make_synthetic;
use fedshield_core::rng::{derive_stream, Experiment};
use fedshield_core::SimConfig;

#[derive(Parser)]
#[command(name = "fedshield", version, about = "Trust-aware federated learning defense simulator")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation (or one per seed with --seeds).
    Run {
        #[command(flatten)]
        common: Common,
        /// Load a trained controller and skip training.
        #[arg(long)]
        load_agent: Option<PathBuf>,
        /// Save the controller after the run (single seed only).
        #[arg(long)]
        save_agent: Option<PathBuf>,
    },
    /// Compare the dqn, linear_q, policy_gradient and random controllers.
    CompareAgents {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the Dirichlet concentration.
    SweepDirichlet {
        #[command(flatten)]
        common: Common,
        /// Alpha values (default 0.1,0.2,...,1.0,5.0).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Compare signal budgets: full, no_validation, directional_only.
    AblateSignals {
        #[command(flatten)]
        common: Common,
    },
    /// Print the resolved configuration (defaults, file, environment, --set) as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write the synthetic train/val/test splits for the configured seed as CSV.
    ExportData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; unset fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for a single run.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list; replaces the protocol's seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Config override, repeatable, e.g. --set trust.lambda_penalty=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for independent runs (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory with train.csv, val.csv and test.csv to use instead of synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = load_config(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        Ok(cfg)
    }

    fn seeds(&self, protocol: Experiment) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(list), _) => list.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => fedshield_core::rng::seed_schedule(protocol),
        }
    }

    fn spec(&self, kind: Experiment) -> Result<ExperimentSpec> {
        let cfg = self.config()?;
        let mut spec = ExperimentSpec::new(kind, cfg.clone(), &self.out);
        spec.seeds = self.seeds(kind);
        if let Some(dir) = &self.data {
            spec.splits = Some(read_splits(dir, cfg.data.n_classes)?);
        }
        Ok(spec)
    }
}

fn finish(report: &ExperimentReport, out: &std::path::Path) -> Result<ExitCode> {
    emit_outputs(out, report).with_context(|| format!("writing outputs to {}", out.display()))?;
    for c in &report.conditions {
        let s = &c.summary;
        let fmt = |x: &Option<fedshield::experiment::Stat>| {
            x.map(|v| format!("{:.4} ± {:.4}", v.mean, v.std)).unwrap_or_else(|| "n/a".into())
        };
        println!(
            "{:<28} acc {}  asr {}  auc {}  reward {}",
            c.label,
            fmt(&s.final_accuracy),
            fmt(&s.final_asr),
            fmt(&s.auc),
            fmt(&s.mean_reward)
        );
    }
    println!("outputs written to {}", out.display());
    if report.all_succeeded() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &report.failures {
            eprintln!("run failed: {} seed {}: {}", f.condition, f.seed, f.error);
        }
        Ok(ExitCode::FAILURE)
    }
}

fn run_command(common: &Common, load: Option<&PathBuf>, save: Option<&PathBuf>) -> Result<ExitCode> {
    let cfg = common.config()?;
    let seeds = match &common.seeds {
        Some(list) => list.clone(),
        None => vec![cfg.master_seed],
    };
    if save.is_some() && seeds.len() != 1 {
        bail!("--save-agent needs a single seed");
    }
    let agent = match load {
        Some(p) => {
            let a = load_agent(p)?;
            if a.kind != cfg.agent_kind {
                bail!(
                    "checkpoint holds a {} controller but the config asks for {}",
                    a.kind.label(),
                    cfg.agent_kind.label()
                );
            }
            Some(a)
        }
        None => None,
    };
    let splits = match &common.data {
        Some(dir) => Some(read_splits(dir, cfg.data.n_classes)?),
        None => None,
    };
    if agent.is_none() && save.is_none() && splits.is_none() {
        let mut spec = ExperimentSpec::new(Experiment::Baseline, cfg, &common.out);
        spec.seeds = seeds;
        return finish(&run_experiment(&spec, common.jobs), &common.out);
    }

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in &seeds {
        let mut c = cfg.clone();
        c.master_seed = seed;
        match run_single(c, splits.clone(), agent.clone()) {
            Ok((out, trained)) => {
                if let Some(p) = save {
                    save_agent(p, &trained)?;
                }
                runs.push(out);
            }
            Err(e) => failures.push(fedshield::experiment::RunFailure {
                condition: SweepValue::Base.label(),
                seed,
                error: e.to_string(),
            }),
        }
    }
    let label = SweepValue::Base.label();
    let summary = summarize(&label, &runs, failures.len());
    let report = ExperimentReport {
        kind: Experiment::Baseline,
        seeds,
        conditions: vec![ConditionResult {
            value: SweepValue::Base,
            label,
            runs,
            summary,
        }],
        failures,
    };
    finish(&report, &common.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            common,
            load_agent,
            save_agent,
        } => run_command(&common, load_agent.as_ref(), save_agent.as_ref()),
        Command::CompareAgents { common } => {
            let spec = common.spec(Experiment::AgentComparison)?;
            finish(&run_experiment(&spec, common.jobs), &common.out)
        }
        Command::SweepDirichlet { common, values } => {
            let mut spec = common.spec(Experiment::DirichletSweep)?;
            if let Some(v) = values {
                if v.is_empty() {
                    bail!("--values is empty");
                }
                spec.sweep_values = v.into_iter().map(SweepValue::Alpha).collect();
            }
            finish(&run_experiment(&spec, common.jobs), &common.out)
        }
        Command::AblateSignals { common } => {
            let spec = common.spec(Experiment::SignalBudget)?;
            finish(&run_experiment(&spec, common.jobs), &common.out)
        }
        Command::Config {
            config,
            seed,
            overrides,
        } => {
            let mut cfg = load_config(config.as_deref(), &overrides)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            print!("{}", fedshield::config::to_toml_string(&cfg));
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportData {
            config,
            seed,
            overrides,
            out,
        } => {
            let mut cfg = load_config(config.as_deref(), &overrides)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let splits = make_synthetic(&cfg.data, &mut derive_stream(cfg.master_seed, "data", &[0]));
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_splits(&out, &splits)?;
            println!("wrote train/val/test CSV to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
