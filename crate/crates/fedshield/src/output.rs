//! Experiment outputs: round CSVs, summary JSON, trust/belief histories and
//! plots.
//!
//! `rounds.csv` columns, in order:
//! `condition,seed,round,accuracy,asr,roc_auc,ece,reward,trust_0,...,trust_{n-1}`.
//! `roc_auc` is empty for rounds without both a malicious and a benign
//! participant; `trust_i` is client i's trust after the round.
//! `trust_history.csv` / `belief_history.csv` columns:
//! `condition,seed,round,client_id,value`, holding the value entering each
//! round.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fedshield_core::sim::RunOutput;
use serde::Serialize;

use crate::experiment::{ExperimentReport, RunFailure, RunSummary, Stat};
use crate::plot::{line_chart, Series};

pub const ROUND_COLUMNS: [&str; 8] = ["condition", "seed", "round", "accuracy", "asr", "roc_auc", "ece", "reward"];
pub const HISTORY_COLUMNS: [&str; 5] = ["condition", "seed", "round", "client_id", "value"];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> OutputError + '_ {
    move |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// A run tagged with its condition label.
pub type LabeledRun<'a> = (&'a str, &'a RunOutput);

fn n_clients(runs: &[LabeledRun<'_>]) -> usize {
    runs.iter()
        .flat_map(|(_, r)| r.records.iter().map(|x| x.per_client_trust.len()))
        .max()
        .unwrap_or(0)
}

pub fn write_rounds_csv(path: &Path, runs: &[LabeledRun<'_>]) -> Result<(), OutputError> {
    let n = n_clients(runs);
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> = ROUND_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|i| format!("trust_{i}")));
    w.write_record(&header).map_err(&err)?;
    for (label, run) in runs {
        for r in &run.records {
            let mut row = vec![
                label.to_string(),
                run.seed.to_string(),
                r.round.to_string(),
                r.accuracy.to_string(),
                r.asr.to_string(),
                r.roc_auc.map(|v| v.to_string()).unwrap_or_default(),
                r.ece.to_string(),
                r.reward.to_string(),
            ];
            row.extend((0..n).map(|i| r.per_client_trust.get(i).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Long-format history: one row per (run, round, client).
pub fn write_history_csv(
    path: &Path,
    runs: &[LabeledRun<'_>],
    pick: impl Fn(&RunOutput) -> &Vec<Vec<f64>>,
) -> Result<(), OutputError> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record(HISTORY_COLUMNS).map_err(&err)?;
    for (label, run) in runs {
        for (t, row) in pick(run).iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                w.write_record([
                    label.to_string(),
                    run.seed.to_string(),
                    (t + 1).to_string(),
                    c.to_string(),
                    v.to_string(),
                ])
                .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    experiment: &'a str,
    seeds: &'a [u64],
    conditions: Vec<&'a RunSummary>,
    failures: &'a [RunFailure],
}

pub fn write_summary_json(path: &Path, report: &ExperimentReport) -> Result<(), OutputError> {
    let doc = SummaryDoc {
        experiment: report.kind.label(),
        seeds: &report.seeds,
        conditions: report.conditions.iter().map(|c| &c.summary).collect(),
        failures: &report.failures,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|source| OutputError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))?;
    f.write_all(b"\n").map_err(io_err(path))
}

/// Per-round mean ± std over the runs of one condition.
pub fn round_band(runs: &[RunOutput], metric: impl Fn(&fedshield_core::metrics::RoundRecord) -> Option<f64>) -> Vec<(f64, Option<(f64, f64)>)> {
    let rounds = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    (0..rounds)
        .map(|t| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.records.get(t)).filter_map(&metric).collect();
            ((t + 1) as f64, Stat::of(&vals).map(|s| (s.mean, s.std)))
        })
        .collect()
}

pub const PLOTS: [(&str, &str); 4] = [
    ("accuracy", "Test accuracy"),
    ("asr", "Attack success rate"),
    ("roc_auc", "ROC-AUC of beliefs"),
    ("reward", "Round reward"),
];

pub fn write_plots(dir: &Path, report: &ExperimentReport) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (name, title) in PLOTS {
        let series: Vec<Series> = report
            .conditions
            .iter()
            .map(|c| Series {
                label: c.label.clone(),
                points: round_band(&c.runs, |r| match name {
                    "accuracy" => Some(r.accuracy),
                    "asr" => Some(r.asr),
                    "roc_auc" => r.roc_auc,
                    _ => Some(r.reward),
                }),
            })
            .collect();
        let svg = line_chart(&format!("{title} (mean ± std over seeds)"), "round", name, &series);
        let path = dir.join(format!("{name}.svg"));
        fs::write(&path, svg).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// File-system-safe form of a condition label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '-' })
        .collect()
}

/// Writes every output of an experiment under `out_dir`.
pub fn emit_outputs(out_dir: &Path, report: &ExperimentReport) -> Result<(), OutputError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let labeled: Vec<LabeledRun<'_>> = report
        .conditions
        .iter()
        .flat_map(|c| c.runs.iter().map(move |r| (c.label.as_str(), r)))
        .collect();
    write_rounds_csv(&out_dir.join("rounds.csv"), &labeled)?;
    write_history_csv(&out_dir.join("trust_history.csv"), &labeled, |r| &r.trust_history)?;
    write_history_csv(&out_dir.join("belief_history.csv"), &labeled, |r| &r.belief_history)?;
    write_summary_json(&out_dir.join("summary.json"), report)?;
    for (label, run) in &labeled {
        let dir = out_dir.join("runs").join(slug(label)).join(format!("seed-{}", run.seed));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_rounds_csv(&dir.join("rounds.csv"), &[(label, run)])?;
    }
    write_plots(&out_dir.join("plots"), report)?;
    Ok(())
}
