//! Acceptance checks. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails. The long criteria (8 to 11) run the full default
//! protocol and take a while on a single core.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use fedshield::experiment::{run_auc, run_experiment, ExperimentReport, ExperimentSpec, Stat, SweepValue};
use fedshield::output::emit_outputs;
use fedshield_core::agents::{dqn_learn, DqnAgent, QNetwork, Transition, N_ACTIONS, STATE_DIM};
use fedshield_core::config::{AgentKind, AttackKind, DqnConfig, SignalBudget, TrustConfig};
use fedshield_core::dataset::Sample;
use fedshield_core::metrics::roc_auc;
use fedshield_core::nn::MlpModel;
use fedshield_core::rng::{seed_schedule, Experiment};
use fedshield_core::trust::{aggregate, bayes_update, trust_update, Contribution, TrustVector, BELIEF_CEILING};
use fedshield_core::{derive_stream, ParamVector, RunOutput, SimConfig};

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    println!("{} criterion {:>2}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.detail);
}

fn minutes(d: Duration) -> f64 {
    d.as_secs_f64() / 60.0
}

// 1 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_fedshield"))
            .args(["run", "--seed", "42", "--set", "rounds=10", "--set", "training_episodes=2", "--out"])
            .arg(&out)
            .env_remove("FEDSHIELD_SEED")
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(out.join("rounds.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    let elapsed = start.elapsed();
    Verdict {
        id: 1,
        pass: a == b && !a.is_empty() && elapsed < Duration::from_secs(60),
        detail: format!(
            "rounds.csv byte-identical across two CLI runs: {} ({} bytes, {:.1}s)",
            a == b,
            a.len(),
            elapsed.as_secs_f64()
        ),
    }
}

// 2 -------------------------------------------------------------------------

fn worst_rel_error(params: &ParamVector, analytic: &[f64], loss: impl Fn(&ParamVector) -> f64) -> f64 {
    const H: f64 = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += H;
        let mut m = params.clone();
        m[i] -= H;
        let numeric = (loss(&p) - loss(&m)) / (2.0 * H);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

fn jitter(p: &ParamVector, seed: u64) -> ParamVector {
    let mut rng = derive_stream(seed, "jitter", &[]);
    ParamVector::from_vec(p.iter().map(|v| v + 0.3 * rng.normal()).collect())
}

fn gradients() -> Verdict {
    let mut client_worst: f64 = 0.0;
    let mut q_worst: f64 = 0.0;
    for probe in 0..20u64 {
        let mut rng = derive_stream(probe, "acceptance-grad", &[]);
        let (d, h, c) = (2 + rng.below(5), 2 + rng.below(6), 2 + rng.below(5));
        let base = MlpModel::init(d, h, c, &mut rng);
        let model = base.with_params(jitter(base.params(), probe)).unwrap();
        let batch: Vec<Sample> = (0..1 + rng.below(8))
            .map(|_| Sample { features: (0..d).map(|_| rng.normal()).collect(), label: rng.below(c) })
            .collect();
        let g = model.grad_cross_entropy(&batch).unwrap();
        client_worst = client_worst.max(worst_rel_error(model.params(), &g, |p| {
            model.with_params(p.clone()).unwrap().mean_loss(&batch).unwrap()
        }));

        let mut net = QNetwork::new(STATE_DIM, 3 + rng.below(8), N_ACTIONS, &mut rng);
        let j = jitter(net.online.params(), probe + 1000);
        net.online.set_params(j);
        let transitions: Vec<Transition> = (0..1 + rng.below(8))
            .map(|_| Transition {
                state: (0..STATE_DIM).map(|_| rng.normal()).collect(),
                action: rng.below(N_ACTIONS),
                reward: rng.normal(),
                next_state: (0..STATE_DIM).map(|_| rng.normal()).collect(),
                terminal: rng.bernoulli(0.3),
            })
            .collect();
        let refs: Vec<&Transition> = transitions.iter().collect();
        let targets = net.td_targets(&refs, 0.9);
        let (_, qg) = net.td_loss_and_grad(&refs, &targets);
        q_worst = q_worst.max(worst_rel_error(net.online.params(), &qg, |p| {
            let mut n = net.clone();
            n.online.set_params(p.clone());
            n.td_loss_and_grad(&refs, &targets).0
        }));
    }
    Verdict {
        id: 2,
        pass: client_worst < 1e-4 && q_worst < 1e-4,
        detail: format!("max relative FD error over 20 probes: client {client_worst:.2e}, Q-network {q_worst:.2e} (tol 1e-4)"),
    }
}

// 3 -------------------------------------------------------------------------

fn bayes() -> Verdict {
    let cfg = TrustConfig::default();
    let mut worst: f64 = 0.0;
    for k in 0..=1000 {
        let prior = 1e-4 + (1.0 - 2e-4) * k as f64 / 1000.0;
        worst = worst.max((bayes_update(prior, cfg.likelihood_center, &cfg) - prior).abs());
    }
    let mut b = 0.5;
    for _ in 0..20 {
        b = bayes_update(b, 1.0, &cfg);
    }
    Verdict {
        id: 3,
        pass: worst < 1e-12 && b > 0.99 * BELIEF_CEILING,
        detail: format!("fixed-point drift {worst:.1e}; belief after 20x A=1: {b:.6} (> {:.6})", 0.99 * BELIEF_CEILING),
    }
}

// 4 -------------------------------------------------------------------------

fn trust_formula() -> Verdict {
    let cfg = TrustConfig::default();
    let v = trust_update(1.0, 1.0, 0.0, &cfg);
    let upper = trust_update(1.0, 0.0, 1.0, &cfg);
    let harsh = TrustConfig { lambda_penalty: 2.0, ..cfg.clone() };
    let lower = trust_update(0.8, 1.0, 0.0, &harsh);
    Verdict {
        id: 4,
        pass: v == 0.7 && upper == 1.0 && lower == 0.0 && cfg.lambda_penalty == 0.3 && cfg.eta_reward == 0.2,
        detail: format!("trust_update(1,1,0) = {v:?}; upper clip {upper:?}; lower clip {lower:?}"),
    }
}

// 5 -------------------------------------------------------------------------

fn aggregation() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut fedavg_exact = true;
    for inst in 0..100u64 {
        let mut rng = derive_stream(inst, "acceptance-agg", &[]);
        let k = 1 + rng.below(10);
        let len = 1 + rng.below(20);
        let n_clients = 10;
        let mut ids: Vec<usize> = (0..n_clients).collect();
        rng.shuffle(&mut ids);
        ids.truncate(k);
        let updates: Vec<ParamVector> =
            (0..k).map(|_| ParamVector::from_vec((0..len).map(|_| 5.0 * rng.normal()).collect())).collect();
        let ns: Vec<usize> = (0..k).map(|_| 1 + rng.below(400)).collect();
        let ts: Vec<f64> = (0..n_clients).map(|_| 0.01 + 0.99 * rng.uniform()).collect();
        let contributions: Vec<Contribution<'_>> = (0..k)
            .map(|i| Contribution { client: ids[i], update: &updates[i], n_samples: ns[i] })
            .collect();
        let got = aggregate(&contributions, &TrustVector::from_scores(ts.clone()), true).unwrap().params;
        let n: f64 = ns.iter().sum::<usize>() as f64;
        let raw: Vec<f64> = (0..k).map(|i| ns[i] as f64 / n * ts[ids[i]]).collect();
        let mass: f64 = raw.iter().sum();
        for j in 0..len {
            let want: f64 = (0..k).map(|i| raw[i] / mass * updates[i][j]).sum();
            worst = worst.max((got[j] - want).abs() / want.abs().max(1.0));
        }

        // All trust 1 and equal sample counts: plain FedAvg.
        let equal: Vec<Contribution<'_>> =
            (0..k).map(|i| Contribution { client: ids[i], update: &updates[i], n_samples: 100 }).collect();
        let avg = aggregate(&equal, &TrustVector::new(n_clients), true).unwrap().params;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| ids[i]);
        let mut fedavg = ParamVector::zeros(len);
        for &i in &order {
            fedavg.add_scaled(100.0 / (100 * k) as f64, &updates[i]);
        }
        fedavg_exact &= avg == fedavg;
    }
    Verdict {
        id: 5,
        pass: worst <= 1e-9 && fedavg_exact,
        detail: format!("max deviation from brute-force oracle on 100 instances {worst:.1e} (tol 1e-9); FedAvg identical: {fedavg_exact}"),
    }
}

// 6 -------------------------------------------------------------------------

fn auc_oracle() -> Verdict {
    let mut mismatches = 0;
    let mut checked = 0;
    let mut set = 0u64;
    while checked < 50 {
        let mut rng = derive_stream(set, "acceptance-auc", &[]);
        set += 1;
        let n = 2 + rng.below(11);
        // Coarse scores so ties occur.
        let scores: Vec<f64> = (0..n).map(|_| (rng.below(6) as f64) / 5.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.4)).collect();
        let Some(auc) = roc_auc(&scores, &labels) else { continue };
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in (0..n).filter(|&i| labels[i]) {
            for j in (0..n).filter(|&j| !labels[j]) {
                pairs += 1.0;
                wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
        if auc != wins / pairs {
            mismatches += 1;
        }
        checked += 1;
    }
    Verdict {
        id: 6,
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches against exhaustive Mann-Whitney on {checked} sets of size <= 12"),
    }
}

// 7 -------------------------------------------------------------------------

fn toy_mdp() -> Verdict {
    // s0: a0 stays (r 0), a1 -> s1 (r 1); s1: a0 -> s0 (r 0.5), a1 stays (r 0).
    let gamma = 0.5;
    let step = |s: usize, a: usize| match (s, a) {
        (0, 0) => (0, 0.0),
        (0, _) => (1, 1.0),
        (_, 0) => (0, 0.5),
        _ => (1, 0.0),
    };
    let hot = |s: usize| if s == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..2000 {
        let prev = q;
        for s in 0..2 {
            for a in 0..2 {
                let (s2, r) = step(s, a);
                q[s][a] = r + gamma * prev[s2][0].max(prev[s2][1]);
            }
        }
    }
    let cfg = DqnConfig { gamma, batch_size: 32, buffer_capacity: 1000, ..DqnConfig::default() };
    let mut rng = derive_stream(7, "acceptance-mdp", &[]);
    let mut agent = DqnAgent::new(2, 2, &cfg, &mut rng);
    let mut s = 0;
    let mut reached = None;
    let mut err = f64::INFINITY;
    for t in 1..10_000 {
        let a = rng.below(2);
        let (s2, r) = step(s, a);
        agent.buffer.push(Transition { state: hot(s), action: a, reward: r, next_state: hot(s2), terminal: false });
        s = s2;
        dqn_learn(&mut agent.net, &agent.buffer, &mut agent.optimizer, &cfg, &mut agent.learn_steps, &mut rng);
        err = (0..4).map(|k| (agent.net.q_values(&hot(k / 2))[k % 2] - q[k / 2][k % 2]).abs()).fold(0.0, f64::max);
        if err < 5e-2 {
            reached = Some(t);
            break;
        }
    }
    Verdict {
        id: 7,
        pass: reached.is_some(),
        detail: match reached {
            Some(t) => format!("within 5e-2 of value iteration after {t} steps (max error {err:.3})"),
            None => format!("not within 5e-2 after 10k steps (max error {err:.3})"),
        },
    }
}

// 8-12: protocol runs ---------------------------------------------------------

fn seeds() -> Vec<u64> {
    seed_schedule(Experiment::AgentComparison)
}

fn run_conditions(kind: Experiment, base: SimConfig, values: Vec<SweepValue>) -> (ExperimentReport, Duration) {
    let mut spec = ExperimentSpec::new(kind, base, "unused");
    spec.sweep_values = values;
    spec.seeds = seeds();
    let start = Instant::now();
    let report = run_experiment(&spec, 0);
    assert!(report.all_succeeded(), "{:?}", report.failures);
    (report, start.elapsed())
}

fn mean_of(runs: &[RunOutput], f: impl Fn(&RunOutput) -> f64) -> f64 {
    runs.iter().map(f).sum::<f64>() / runs.len() as f64
}

fn final_acc(r: &RunOutput) -> f64 {
    r.final_record().unwrap().accuracy
}

fn final_asr(r: &RunOutput) -> f64 {
    r.final_record().unwrap().asr
}

fn detection() -> Verdict {
    let mut base = SimConfig::default();
    base.attack.kind = AttackKind::SignFlip;
    let (rep, took) = run_conditions(
        Experiment::SignalBudget,
        base,
        vec![SweepValue::Budget(SignalBudget::Full), SweepValue::Budget(SignalBudget::DirectionalOnly)],
    );
    let auc = |c: usize| mean_of(&rep.conditions[c].runs, |r| run_auc(r).unwrap_or(0.5));
    let (full, dir) = (auc(0), auc(1));
    Verdict {
        id: 8,
        pass: full >= 0.65 && dir < full && took < Duration::from_secs(600),
        detail: format!(
            "sign_flip mean AUC rounds 10-50: full {full:.4} (>= 0.65), directional_only {dir:.4} (< full); {:.1} min",
            minutes(took)
        ),
    }
}

fn heterogeneity() -> Verdict {
    let (rep, took) = run_conditions(
        Experiment::DirichletSweep,
        SimConfig::default(),
        vec![SweepValue::Alpha(0.1), SweepValue::Alpha(5.0)],
    );
    let low = mean_of(&rep.conditions[0].runs, final_acc);
    let high = mean_of(&rep.conditions[1].runs, final_acc);
    Verdict {
        id: 9,
        pass: high - low >= 0.05 && took < Duration::from_secs(900),
        detail: format!(
            "final accuracy alpha=5.0 {high:.4} vs alpha=0.1 {low:.4}: gap {:.2} pp (>= 5); {:.1} min",
            100.0 * (high - low),
            minutes(took)
        ),
    }
}

fn controllers(rep: &ExperimentReport, took: Duration) -> Verdict {
    let (dqn, random) = (&rep.conditions[0].runs, &rep.conditions[1].runs);
    let (acc_d, acc_r) = (mean_of(dqn, final_acc), mean_of(random, final_acc));
    let (rew_d, rew_r) = (mean_of(dqn, RunOutput::mean_reward), mean_of(random, RunOutput::mean_reward));
    Verdict {
        id: 10,
        pass: acc_d > acc_r && rew_d > rew_r && took < Duration::from_secs(1200),
        detail: format!(
            "DQN vs Random: final accuracy {acc_d:.4} vs {acc_r:.4}, mean reward {rew_d:.4} vs {rew_r:.4}; {:.1} min",
            minutes(took)
        ),
    }
}

fn defense(dqn: &[RunOutput]) -> Verdict {
    let mut frozen = SimConfig::default();
    frozen.trust.frozen = true;
    let (rep, _) = run_conditions(Experiment::Baseline, frozen, vec![SweepValue::Base]);
    let asr_frozen = mean_of(&rep.conditions[0].runs, final_asr);
    let asr_dqn = mean_of(dqn, final_asr);
    Verdict {
        id: 11,
        pass: asr_dqn <= asr_frozen - 0.05,
        detail: format!(
            "backdoor final ASR: DQN {asr_dqn:.4} vs frozen trust {asr_frozen:.4}; reduction {:.2} pp (>= 5)",
            100.0 * (asr_frozen - asr_dqn)
        ),
    }
}

fn exports(rep: &ExperimentReport) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(dir.path(), rep).unwrap();
    let cfg = SimConfig::default();
    let n_seeds = rep.seeds.len();
    let mut problems = Vec::new();

    let mut history = csv::Reader::from_path(dir.path().join("trust_history.csv")).unwrap();
    let mut per_condition = std::collections::BTreeMap::<String, usize>::new();
    for row in history.records() {
        let row = row.unwrap();
        *per_condition.entry(row[0].to_string()).or_default() += 1;
        let v: f64 = row[4].parse().unwrap();
        if !(0.0..=1.0).contains(&v) {
            problems.push(format!("trust {v} out of range"));
        }
    }
    let expected_rows = cfg.rounds * cfg.n_clients * n_seeds;
    for (c, n) in &per_condition {
        if *n != expected_rows {
            problems.push(format!("{c}: {n} history rows, expected {expected_rows}"));
        }
    }

    // Recompute the summary statistics from rounds.csv.
    let mut rounds = csv::Reader::from_path(dir.path().join("rounds.csv")).unwrap();
    let header = rounds.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (c_cond, c_seed, c_round) = (col("condition"), col("seed"), col("round"));
    let fraction_cols: Vec<usize> = ["accuracy", "asr", "roc_auc", "ece"]
        .iter()
        .map(|n| col(n))
        .chain(header.iter().enumerate().filter(|(_, h)| h.starts_with("trust_")).map(|(i, _)| i))
        .collect();
    type Rows = Vec<(u64, usize, csv::StringRecord)>;
    let mut by_condition = std::collections::BTreeMap::<String, Rows>::new();
    for row in rounds.records() {
        let row = row.unwrap();
        for &i in &fraction_cols {
            if !row[i].is_empty() {
                let v: f64 = row[i].parse().unwrap();
                if !(0.0..=1.0).contains(&v) {
                    problems.push(format!("{} = {v} out of [0,1]", &header[i]));
                }
            }
        }
        by_condition.entry(row[c_cond].to_string()).or_default().push((
            row[c_seed].parse().unwrap(),
            row[c_round].parse().unwrap(),
            row,
        ));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for cond in summary["conditions"].as_array().unwrap() {
        let rows = &by_condition[cond["condition"].as_str().unwrap()];
        let per_seed = |f: &dyn Fn(&[&(u64, usize, csv::StringRecord)]) -> Option<f64>| -> Vec<f64> {
            let mut seeds: Vec<u64> = rows.iter().map(|r| r.0).collect();
            seeds.dedup();
            seeds
                .iter()
                .filter_map(|s| {
                    let mut mine: Vec<&(u64, usize, csv::StringRecord)> = rows.iter().filter(|r| r.0 == *s).collect();
                    mine.sort_by_key(|r| r.1);
                    f(&mine)
                })
                .collect()
        };
        let last = |name: &'static str| {
            let i = col(name);
            move |rs: &[&(u64, usize, csv::StringRecord)]| rs.last().map(|r| r.2[i].parse::<f64>().unwrap())
        };
        let reward = col("reward");
        let auc = col("roc_auc");
        let checks: Vec<(&str, Vec<f64>)> = vec![
            ("final_accuracy", per_seed(&last("accuracy"))),
            ("final_asr", per_seed(&last("asr"))),
            ("final_ece", per_seed(&last("ece"))),
            (
                "mean_reward",
                per_seed(&|rs| Some(rs.iter().map(|r| r.2[reward].parse::<f64>().unwrap()).sum::<f64>() / rs.len() as f64)),
            ),
            (
                "auc",
                per_seed(&|rs| {
                    let v: Vec<f64> =
                        rs.iter().filter(|r| r.1 >= 10 && !r.2[auc].is_empty()).map(|r| r.2[auc].parse().unwrap()).collect();
                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                }),
            ),
        ];
        for (key, values) in checks {
            let Some(stat) = Stat::of(&values) else { continue };
            let reported = &cond[key];
            let (m, s) = (reported["mean"].as_f64().unwrap(), reported["std"].as_f64().unwrap());
            worst = worst.max((m - stat.mean).abs()).max((s - stat.std).abs());
            compared += 1;
        }
    }
    if worst > 1e-9 {
        problems.push(format!("summary deviates from recomputation by {worst:.1e}"));
    }
    Verdict {
        id: 12,
        pass: problems.is_empty() && compared > 0,
        detail: if problems.is_empty() {
            format!(
                "trust_history rows = {expected_rows} per condition ({} x {} x {n_seeds}); fractions in [0,1]; {compared} summary stats match rounds.csv within {worst:.1e}",
                cfg.rounds, cfg.n_clients
            )
        } else {
            problems.join("; ")
        },
    }
}

fn main() {
    let mut verdicts = Vec::new();
    for check in [determinism, gradients, bayes, trust_formula, aggregation, auc_oracle, toy_mdp] {
        let v = check();
        report(&v);
        verdicts.push(v);
    }
    let v = detection();
    report(&v);
    verdicts.push(v);
    let v = heterogeneity();
    report(&v);
    verdicts.push(v);

    let (agents, took) = run_conditions(
        Experiment::AgentComparison,
        SimConfig::default(),
        vec![SweepValue::Agent(AgentKind::Dqn), SweepValue::Agent(AgentKind::Random)],
    );
    let v = controllers(&agents, took);
    report(&v);
    verdicts.push(v);
    let v = defense(&agents.conditions[0].runs);
    report(&v);
    verdicts.push(v);
    let v = exports(&agents);
    report(&v);
    verdicts.push(v);

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!("{} of {} criteria pass", verdicts.len() - failed.len(), verdicts.len());
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
