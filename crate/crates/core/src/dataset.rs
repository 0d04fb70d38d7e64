//! Offline datasets: the logged distribution d^D over state-action pairs,
//! built from a behavior policy either in exact-expectation form (the
//! default — every estimator expectation becomes an exact weighted sum) or
//! as seeded i.i.d. samples with empirical weights, plus coverage checking
//! against a target policy.
//!
//! Exact mode eliminates Monte-Carlo noise so acceptance tolerances can be
//! tight; sampled mode exists to exercise the single-sample
//! conditional-expectation bias that sample-based Bellman residuals incur,
//! and is excluded from tight accuracy gates.

use crate::error::{CoverageViolation, Error, Result};
use crate::mdp::{sample_categorical, Policy, TabularMdp};
use crate::oracles::{exact_stationary, exact_visitation};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How the dataset weights were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetMode {
    /// Weights are the exact visitation (γ<1) or stationary (γ=1)
    /// distribution of the behavior policy.
    Exact,
    /// Weights are empirical frequencies of seeded i.i.d. draws.
    Sampled,
}

impl std::fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetMode::Exact => write!(f, "exact"),
            DatasetMode::Sampled => write!(f, "sampled"),
        }
    }
}

impl std::str::FromStr for DatasetMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(DatasetMode::Exact),
            "sampled" => Ok(DatasetMode::Sampled),
            other => Err(Error::DomainError(format!("unknown dataset mode {other:?}"))),
        }
    }
}

/// One logged transition `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTransition<F> {
    pub s: usize,
    pub a: usize,
    pub reward: F,
    pub next_s: usize,
}

/// The offline distribution d^D and its provenance.
#[derive(Debug, Clone)]
pub struct OfflineDataset<F> {
    pub mode: DatasetMode,
    /// d^D: probability vector over flat state-action indices.
    pub weights: Vec<F>,
    /// The behavior policy the data was logged under. Recorded for
    /// provenance and for importance-ratio estimators; Q-LP estimators never
    /// require it.
    pub behavior: Policy<F>,
    /// Logged transitions (`Sampled` mode only).
    pub samples: Option<Vec<SampleTransition<F>>>,
    /// Fingerprint of the source MDP, for cross-checking dataset↔model pairs.
    pub mdp_id: String,
    pub seed: u64,
}

/// Stable fingerprint of an MDP's shape and tables (FNV-1a over the raw
/// bits), so a dataset can be matched to the model it was logged from.
pub fn mdp_fingerprint<F: Scalar>(mdp: &TabularMdp<F>) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    eat(&(mdp.n_states as u64).to_le_bytes());
    eat(&(mdp.n_actions as u64).to_le_bytes());
    let feed = |hashed: &mut dyn FnMut(&[u8]), xs: &[F]| {
        for x in xs {
            hashed(&x.to_f64().unwrap_or(f64::NAN).to_bits().to_le_bytes());
        }
    };
    feed(&mut eat, &[mdp.discount]);
    feed(&mut eat, &mdp.transition);
    feed(&mut eat, &mdp.reward);
    feed(&mut eat, &mdp.initial_dist);
    format!("mdp-{hash:016x}")
}

impl<F: Scalar> OfflineDataset<F> {
    /// Builds d^D from a behavior policy.
    ///
    /// Exact mode: weights are `exact_visitation` (γ<1) or
    /// `exact_stationary` (γ=1; fails with [`Error::NotErgodic`] on
    /// non-ergodic behavior chains), no samples are stored. Sampled mode:
    /// `n_samples ≥ 1` i.i.d. draws `(s,a) ~ exact weights`, then
    /// `s' ~ T(s,a)` and `r = R(s,a)`; weights become empirical frequencies.
    pub fn from_behavior(
        mdp: &TabularMdp<F>,
        behavior: &Policy<F>,
        mode: DatasetMode,
        n_samples: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let exact = if mdp.is_undiscounted() {
            exact_stationary(mdp, behavior)?
        } else {
            exact_visitation(mdp, behavior)?
        };
        let (weights, samples) = match mode {
            DatasetMode::Exact => (exact, None),
            DatasetMode::Sampled => {
                let n = n_samples.ok_or_else(|| {
                    Error::DomainError("sampled mode needs n_samples >= 1".to_string())
                })?;
                if n == 0 {
                    return Err(Error::DomainError("sampled mode needs n_samples >= 1".to_string()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut counts = vec![0usize; mdp.n_sa()];
                let mut samples = Vec::with_capacity(n);
                for _ in 0..n {
                    let z = sample_categorical(&exact, &mut rng);
                    let (s, a) = (z / mdp.n_actions, z % mdp.n_actions);
                    let next_s = sample_categorical(mdp.transition_row(s, a), &mut rng);
                    counts[z] += 1;
                    samples.push(SampleTransition { s, a, reward: mdp.reward[z], next_s });
                }
                let denom = F::cast_usize(n);
                let weights = counts.iter().map(|c| F::cast_usize(*c) / denom).collect();
                (weights, Some(samples))
            }
        };
        Ok(OfflineDataset {
            mode,
            weights,
            behavior: behavior.clone(),
            samples,
            mdp_id: mdp_fingerprint(mdp),
            seed,
        })
    }

    /// Dataset state marginal `m^D(s) = Σ_a d^D(s,a)`.
    pub fn state_marginal(&self, mdp: &TabularMdp<F>) -> Vec<F> {
        let mut m = vec![F::zero(); mdp.n_states];
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                m[s] += self.weights[mdp.sa_index(s, a)];
            }
        }
        m
    }

    /// Lists the coverage violations of d^D against the visitation of a
    /// target policy: pairs where `dπ_target(s,a) > epsilon` but
    /// `d^D(s,a) < epsilon`. An empty list means coverage holds. Requires
    /// γ < 1 (the target visitation is an oracle quantity).
    pub fn coverage_check(
        &self,
        mdp: &TabularMdp<F>,
        target: &Policy<F>,
        epsilon: f64,
    ) -> Result<Vec<CoverageViolation>> {
        let d_target = exact_visitation(mdp, target)?;
        let eps = F::cast(epsilon);
        let mut violations = Vec::new();
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let z = mdp.sa_index(s, a);
                if d_target[z] > eps && self.weights[z] < eps {
                    violations.push(CoverageViolation {
                        state: s,
                        action: a,
                        target_mass: d_target[z].to_f64().unwrap_or(f64::NAN),
                        dataset_mass: self.weights[z].to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(violations)
    }

    /// Returns a copy whose weights are floored at `epsilon` and
    /// renormalized to sum 1. Estimators only apply this when explicitly
    /// asked to — silent clamping would hide support violations.
    pub fn clamped(&self, epsilon: f64) -> Self {
        let eps = F::cast(epsilon);
        let mut out = self.clone();
        for w in out.weights.iter_mut() {
            *w = w.max(eps);
        }
        let total: F = out.weights.iter().copied().sum();
        for w in out.weights.iter_mut() {
            *w /= total;
        }
        out
    }
}
