//! Synthetic Gaussian-cluster data, backdoor triggers and Dirichlet label-skew
//! partitioning.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::rng::RngStream;

/// Value written into the trigger coordinates.
pub const TRIGGER_VALUE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("trigger of size {size} needs {needed} features but samples have {available}")]
    TriggerTooLarge {
        size: usize,
        needed: usize,
        available: usize,
    },
    #[error("cannot partition {samples} samples across {clients} clients")]
    TooFewSamples { samples: usize, clients: usize },
    #[error("dirichlet concentration must be positive, got {0}")]
    BadAlpha(f64),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("sample has {got} features, expected {expected}")]
    FeatureDim { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_classes: usize,
    pub feature_dim: usize,
}

impl Dataset {
    /// Builds a dataset, checking labels and feature dimensions.
    pub fn new(samples: Vec<Sample>, n_classes: usize, feature_dim: usize) -> Result<Self, DataError> {
        for s in &samples {
            if s.label >= n_classes {
                return Err(DataError::LabelOutOfRange {
                    label: s.label,
                    n_classes,
                });
            }
            if s.features.len() != feature_dim {
                return Err(DataError::FeatureDim {
                    got: s.features.len(),
                    expected: feature_dim,
                });
            }
        }
        Ok(Self {
            samples,
            n_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    /// Copies the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Vec<Sample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

/// Train / validation / test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Draws one mean vector per class (scaled standard normal) and then samples
/// `mean + noise * N(0, I)` for each split. Labels are balanced: split `i`
/// holds `n / C` samples per class (the first `n % C` classes get one more),
/// in shuffled order.
pub fn make_synthetic(cfg: &DataConfig, rng: &mut RngStream) -> Splits {
    let means: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|_| (0..cfg.feature_dim).map(|_| cfg.mean_scale * rng.normal()).collect())
        .collect();

    let mut split = |n: usize| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
        rng.shuffle(&mut labels);
        let samples = labels
            .into_iter()
            .map(|label| Sample {
                features: means[label].iter().map(|m| m + cfg.noise * rng.normal()).collect(),
                label,
            })
            .collect();
        Dataset {
            samples,
            n_classes: cfg.n_classes,
            feature_dim: cfg.feature_dim,
        }
    };

    let train = split(cfg.n_train);
    let val = split(cfg.n_val);
    let test = split(cfg.n_test);
    Splits { train, val, test }
}

/// Clamps the first `trigger_size²` features to [`TRIGGER_VALUE`] and relabels
/// the sample as `target_label`.
pub fn apply_trigger(sample: &Sample, trigger_size: usize, target_label: usize) -> Result<Sample, DataError> {
    let needed = trigger_size * trigger_size;
    if needed > sample.features.len() {
        return Err(DataError::TriggerTooLarge {
            size: trigger_size,
            needed,
            available: sample.features.len(),
        });
    }
    let mut out = sample.clone();
    out.features[..needed].fill(TRIGGER_VALUE);
    out.label = target_label;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
    pub dirichlet_alpha: f64,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.client_indices.len()
    }

    /// True when every index in `0..pool` appears in exactly one client and
    /// no client is empty.
    pub fn is_exact_cover(&self, pool: usize) -> bool {
        let mut seen = vec![false; pool];
        for client in &self.client_indices {
            if client.is_empty() {
                return false;
            }
            for &i in client {
                if i >= pool || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Per-client label histograms.
    pub fn label_histograms(&self, dataset: &Dataset) -> Vec<Vec<usize>> {
        self.client_indices
            .iter()
            .map(|idx| {
                let mut h = vec![0; dataset.n_classes];
                for &i in idx {
                    h[dataset.samples[i].label] += 1;
                }
                h
            })
            .collect()
    }
}

/// Splits `total` items according to `proportions` with largest-remainder
/// rounding. Ties in the remainder go to the lower index.
pub fn largest_remainder(total: usize, proportions: &[f64]) -> Vec<usize> {
    let sum: f64 = proportions.iter().sum();
    if proportions.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        let mut out = vec![0; proportions.len()];
        out[0] = total;
        return out;
    }
    let quotas: Vec<f64> = proportions.iter().map(|p| p / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Draws `Dirichlet(alpha * 1_n)` proportions via normalized Gamma draws.
/// If every draw underflows, one client receives all of the mass.
pub fn dirichlet_proportions(n: usize, alpha: f64, rng: &mut RngStream) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| rng.gamma(alpha)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|g| g / sum).collect()
    } else {
        let mut p = vec![0.0; n];
        p[rng.below(n)] = 1.0;
        p
    }
}

/// Label-skewed partition: every class is split across clients by its own
/// Dirichlet draw. Empty clients take one sample from the largest client.
pub fn dirichlet_partition(
    dataset: &Dataset,
    n_clients: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Partition, DataError> {
    if !(alpha > 0.0) {
        return Err(DataError::BadAlpha(alpha));
    }
    if dataset.len() < n_clients || n_clients == 0 {
        return Err(DataError::TooFewSamples {
            samples: dataset.len(),
            clients: n_clients,
        });
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }

    let mut clients: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for mut members in by_class {
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let p = dirichlet_proportions(n_clients, alpha, rng);
        let counts = largest_remainder(members.len(), &p);
        let mut rest = members.as_slice();
        for (client, &c) in clients.iter_mut().zip(&counts) {
            let (take, tail) = rest.split_at(c);
            client.extend_from_slice(take);
            rest = tail;
        }
    }

    while let Some(empty) = clients.iter().position(Vec::is_empty) {
        let donor = (0..n_clients)
            .max_by(|&a, &b| clients[a].len().cmp(&clients[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = clients[donor].pop().expect("donor holds >= 2 samples");
        clients[empty].push(moved);
    }
    for c in &mut clients {
        c.sort_unstable();
    }
    Ok(Partition {
        client_indices: clients,
        dirichlet_alpha: alpha,
    })
}

/// Total-variation distance between two count histograms (as distributions).
pub fn total_variation(a: &[usize], b: &[usize]) -> f64 {
    let na: usize = a.iter().sum();
    let nb: usize = b.iter().sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| libm::fabs(x as f64 / na as f64 - y as f64 / nb as f64))
        .sum::<f64>()
}

/// Mean pairwise total-variation distance between client label histograms.
pub fn mean_pairwise_tv(histograms: &[Vec<usize>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..histograms.len() {
        for j in i + 1..histograms.len() {
            total += total_variation(&histograms[i], &histograms[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}
