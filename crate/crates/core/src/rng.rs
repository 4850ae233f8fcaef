//! Deterministic, labelled random streams.
//!
//! Every random draw in a simulation comes from an [`RngStream`] derived from
//! the run's master seed plus a purpose label and a list of indices (episode,
//! round, client, ...). Streams never share state, so the draws a client sees
//! do not depend on the order in which clients are processed.

use core::fmt;
use core::str::FromStr;

use alloc::vec::Vec;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A single-owner random stream keyed by `(master_seed, purpose, indices)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    inner: ChaCha8Rng,
}

/// Derives the stream for `purpose` at `indices` from `master_seed`.
///
/// Identical arguments always reproduce the same sequence; changing any
/// argument (including the position of an index) yields an unrelated one.
pub fn derive_stream(master_seed: u64, purpose: &str, indices: &[u64]) -> RngStream {
    let mut key = splitmix64(master_seed ^ splitmix64(fnv1a(purpose)));
    for (pos, &idx) in indices.iter().enumerate() {
        let salt = splitmix64(idx ^ (pos as u64 + 1).wrapping_mul(GOLDEN));
        key = splitmix64(key ^ salt);
    }
    // Length tag keeps [] and [0] apart.
    key = splitmix64(key ^ (indices.len() as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));

    let mut seed = [0u8; 32];
    let mut state = key;
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    RngStream {
        key,
        inner: ChaCha8Rng::from_seed(seed),
    }
}

impl RngStream {
    /// The 64-bit key this stream was derived from.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-a, a)`.
    pub fn symmetric(&mut self, a: f64) -> f64 {
        (2.0 * self.uniform() - 1.0) * a
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw (Marsaglia polar method, spare discarded).
    ///
    /// Sampled here with `libm` rather than through a distributions crate so
    /// the bits do not depend on which float-math backend other crates in the
    /// build switch on.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * libm::sqrt(-2.0 * libm::log(s) / s);
            }
        }
    }

    /// Gamma(shape, 1) draw (Marsaglia-Tsang). Returns 0.0 for a non-positive
    /// shape and on underflow for tiny shapes.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        if !(shape > 0.0) || !shape.is_finite() {
            return 0.0;
        }
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0);
            let u = self.uniform();
            return g * libm::pow(u, 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x * x * x * x || libm::log(u) < 0.5 * x * x + d * (1.0 - v + libm::log(v)) {
                return d * v;
            }
        }
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// The four experiment protocols, each with a fixed public seed list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    DirichletSweep,
    Baseline,
    AgentComparison,
    SignalBudget,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::DirichletSweep,
        Experiment::Baseline,
        Experiment::AgentComparison,
        Experiment::SignalBudget,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Experiment::DirichletSweep => "dirichlet_sweep",
            Experiment::Baseline => "baseline",
            Experiment::AgentComparison => "agent_comparison",
            Experiment::SignalBudget => "signal_budget",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown experiment label `{0}`")]
pub struct UnknownExperiment(pub alloc::string::String);

impl FromStr for Experiment {
    type Err = UnknownExperiment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.label() == s)
            .ok_or_else(|| UnknownExperiment(s.into()))
    }
}

/// Seeds used for every condition of `experiment`.
pub fn seed_schedule(experiment: Experiment) -> Vec<u64> {
    match experiment {
        Experiment::DirichletSweep | Experiment::AgentComparison => (0..5).map(|r| 42 + r).collect(),
        Experiment::Baseline | Experiment::SignalBudget => alloc::vec![42, 64, 128, 200, 256],
    }
}
