//! Analytic gradients against central finite differences.

use fedshield_core::agents::{AgentState, PgStep, PolicyGradientAgent, QNetwork, Transition, N_ACTIONS, STATE_DIM};
use fedshield_core::dataset::Sample;
use fedshield_core::nn::MlpModel;
use fedshield_core::{derive_stream, ParamVector, RngStream};

const STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
/// Below this magnitude coordinates are compared absolutely (REL_TOL * FLOOR).
const FLOOR: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error over every coordinate.
fn worst_coordinate(params: &ParamVector, analytic: &[f64], loss: impl Fn(&ParamVector) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus[i] += STEP;
        let mut minus = params.clone();
        minus[i] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    worst
}

/// Glorot init leaves biases at zero, which can park a unit exactly on the
/// ReLU kink; probes use fully random parameters instead.
fn jitter(params: &ParamVector, rng: &mut RngStream) -> ParamVector {
    ParamVector::from_vec(params.iter().map(|p| p + 0.3 * rng.normal()).collect())
}

fn random_batch(rng: &mut RngStream, n: usize, dim: usize, classes: usize) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            features: (0..dim).map(|_| rng.normal()).collect(),
            label: rng.below(classes),
        })
        .collect()
}

#[test]
fn client_model_gradient_on_twenty_probes() {
    for probe in 0..20u64 {
        let mut rng = derive_stream(probe, "grad-probe", &[]);
        let (d, h, c) = (2 + rng.below(4), 2 + rng.below(5), 2 + rng.below(4));
        let model = MlpModel::init(d, h, c, &mut rng);
        let model = model.with_params(jitter(model.params(), &mut rng)).unwrap();
        let n = 1 + rng.below(6);
        let batch = random_batch(&mut rng, n, d, c);
        let grad = model.grad_cross_entropy(&batch).unwrap();
        let worst = worst_coordinate(model.params(), &grad, |p| {
            model.with_params(p.clone()).unwrap().mean_loss(&batch).unwrap()
        });
        assert!(worst < REL_TOL, "probe {probe} ({d}-{h}-{c}): relative error {worst:e}");
    }
}

#[test]
fn two_two_two_network_gradient() {
    let params = ParamVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.05, -0.1, 0.7, -0.4, 0.2, 0.6, 0.01, -0.02]);
    let model = MlpModel::from_parts(2, 2, 2, params).unwrap();
    let batch = vec![
        Sample { features: vec![1.0, 2.0], label: 0 },
        Sample { features: vec![-0.5, 0.3], label: 1 },
    ];
    let grad = model.grad_cross_entropy(&batch).unwrap();
    let worst = worst_coordinate(model.params(), &grad, |p| {
        model.with_params(p.clone()).unwrap().mean_loss(&batch).unwrap()
    });
    assert!(worst < REL_TOL, "relative error {worst:e}");
}

#[test]
fn q_network_gradient_on_twenty_probes() {
    for probe in 0..20u64 {
        let mut rng = derive_stream(probe, "q-grad-probe", &[]);
        let hidden = 3 + rng.below(6);
        let mut net = QNetwork::new(STATE_DIM, hidden, N_ACTIONS, &mut rng);
        let jittered = jitter(net.online.params(), &mut rng);
        net.online.set_params(jittered);
        let batch: Vec<Transition> = (0..1 + rng.below(8))
            .map(|_| Transition {
                state: (0..STATE_DIM).map(|_| rng.normal()).collect(),
                action: rng.below(N_ACTIONS),
                reward: rng.normal(),
                next_state: (0..STATE_DIM).map(|_| rng.normal()).collect(),
                terminal: rng.bernoulli(0.3),
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let targets = net.td_targets(&refs, 0.9);
        let (_, grad) = net.td_loss_and_grad(&refs, &targets);
        let worst = worst_coordinate(net.online.params(), &grad, |p| {
            let mut n = net.clone();
            n.online.set_params(p.clone());
            n.td_loss_and_grad(&refs, &targets).0
        });
        assert!(worst < REL_TOL, "probe {probe} (hidden {hidden}): relative error {worst:e}");
    }
}

#[test]
fn policy_surrogate_gradient() {
    let mut rng = derive_stream(5, "pg-grad", &[]);
    let mut policy = PolicyGradientAgent::new(0.1);
    for row in policy.weights.iter_mut() {
        for w in row.iter_mut() {
            *w = 0.5 * rng.normal();
        }
    }
    for b in policy.bias.iter_mut() {
        *b = 0.5 * rng.normal();
    }
    let episode: Vec<PgStep> = (0..6)
        .map(|_| PgStep {
            state: AgentState(core::array::from_fn(|_| rng.normal())),
            action: rng.below(N_ACTIONS),
            reward: rng.normal(),
        })
        .collect();
    let adv = policy.advantages(&episode);
    let (gw, gb) = policy.surrogate_grad(&episode, &adv);
    let flat = |p: &PolicyGradientAgent| {
        let mut v: Vec<f64> = p.weights.iter().flatten().copied().collect();
        v.extend_from_slice(&p.bias);
        ParamVector::from_vec(v)
    };
    let mut analytic: Vec<f64> = gw.iter().flatten().copied().collect();
    analytic.extend_from_slice(&gb);
    let worst = worst_coordinate(&flat(&policy), &analytic, |p| {
        let mut q = policy.clone();
        for a in 0..N_ACTIONS {
            q.weights[a].copy_from_slice(&p[a * STATE_DIM..(a + 1) * STATE_DIM]);
        }
        q.bias.copy_from_slice(&p[N_ACTIONS * STATE_DIM..]);
        q.surrogate(&episode, &adv)
    });
    assert!(worst < REL_TOL, "relative error {worst:e}");
}
