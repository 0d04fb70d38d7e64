//! JSON file formats for MDPs, datasets, and run results.
//!
//! | File    | Shape |
//! |---------|-------|
//! | MDP     | `{"n_states", "n_actions", "discount", "transition" [s][a][s′], "reward" [s][a], "initial_dist" [s]}` |
//! | dataset | `{"mode", "weights" [s][a], "behavior" [s][a], "samples" [[s,a,r,s′],…] or null, "mdp_id", "seed"}` |
//! | result  | `{"method", "value_estimate", "oracle_value"?, "abs_error"?, "zeta_max_error"?, "converged", "iters", tables…, "config", "seed"}` |
//!
//! Tables are nested per state (not flat) so the files read naturally;
//! loading re-validates through the ordinary constructors, so a hand-edited
//! file that breaks stochasticity or coverage invariants is rejected rather
//! than silently accepted. Numbers are plain decimals and round-trip
//! bit-exactly (shortest-representation printing).

use serde::{Deserialize, Serialize};

use crate::dataset::{mdp_fingerprint, DatasetMode, OfflineDataset, SampleTransition};
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};

/// On-disk form of [`TabularMdp`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MdpJson {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// `transition[s][a][s′]`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    /// `initial_dist[s]`.
    pub initial_dist: Vec<f64>,
}

fn nest_by_state(flat: &[f64], n_states: usize, n_actions: usize) -> Vec<Vec<f64>> {
    (0..n_states)
        .map(|s| flat[s * n_actions..(s + 1) * n_actions].to_vec())
        .collect()
}

fn flatten_checked(
    nested: &[Vec<f64>],
    n_states: usize,
    n_actions: usize,
    what: &str,
) -> Result<Vec<f64>> {
    if nested.len() != n_states {
        return Err(Error::DomainError(format!(
            "{what}: expected {n_states} state rows, found {}",
            nested.len()
        )));
    }
    let mut flat = Vec::with_capacity(n_states * n_actions);
    for (s, row) in nested.iter().enumerate() {
        if row.len() != n_actions {
            return Err(Error::DomainError(format!(
                "{what}: state {s} has {} entries, expected {n_actions}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

impl MdpJson {
    pub fn from_mdp(mdp: &TabularMdp<f64>) -> Self {
        let transition = (0..mdp.n_states)
            .map(|s| {
                (0..mdp.n_actions)
                    .map(|a| {
                        let row = mdp.sa_index(s, a);
                        mdp.transition[row * mdp.n_states..(row + 1) * mdp.n_states].to_vec()
                    })
                    .collect()
            })
            .collect();
        Self {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            discount: mdp.discount,
            transition,
            reward: nest_by_state(&mdp.reward, mdp.n_states, mdp.n_actions),
            initial_dist: mdp.initial_dist.clone(),
        }
    }

    /// Rebuilds the MDP, re-running every constructor validation.
    pub fn to_mdp(&self) -> Result<TabularMdp<f64>> {
        if self.transition.len() != self.n_states {
            return Err(Error::DomainError(format!(
                "transition: expected {} state blocks, found {}",
                self.n_states,
                self.transition.len()
            )));
        }
        let mut transition = Vec::with_capacity(self.n_states * self.n_actions * self.n_states);
        for (s, block) in self.transition.iter().enumerate() {
            if block.len() != self.n_actions {
                return Err(Error::DomainError(format!(
                    "transition: state {s} has {} action rows, expected {}",
                    block.len(),
                    self.n_actions
                )));
            }
            for (a, row) in block.iter().enumerate() {
                if row.len() != self.n_states {
                    return Err(Error::DomainError(format!(
                        "transition[{s}][{a}]: {} entries, expected {}",
                        row.len(),
                        self.n_states
                    )));
                }
                transition.extend_from_slice(row);
            }
        }
        let reward = flatten_checked(&self.reward, self.n_states, self.n_actions, "reward")?;
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            transition,
            reward,
            self.initial_dist.clone(),
            self.discount,
        )
    }
}

/// On-disk form of [`OfflineDataset`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetJson {
    pub mode: String,
    /// `weights[s][a]` — d^D as a probability table.
    pub weights: Vec<Vec<f64>>,
    /// `behavior[s][a]` — the logging policy's action probabilities.
    pub behavior: Vec<Vec<f64>>,
    /// `[[s, a, r, s′], …]`; `null` in exact mode.
    pub samples: Option<Vec<(usize, usize, f64, usize)>>,
    pub mdp_id: String,
    pub seed: u64,
}

impl DatasetJson {
    pub fn from_dataset(dataset: &OfflineDataset<f64>) -> Self {
        let (n_states, n_actions) = (dataset.behavior.n_states, dataset.behavior.n_actions);
        Self {
            mode: dataset.mode.to_string(),
            weights: nest_by_state(&dataset.weights, n_states, n_actions),
            behavior: nest_by_state(&dataset.behavior.probs, n_states, n_actions),
            samples: dataset
                .samples
                .as_ref()
                .map(|ts| ts.iter().map(|t| (t.s, t.a, t.reward, t.next_s)).collect()),
            mdp_id: dataset.mdp_id.clone(),
            seed: dataset.seed,
        }
    }

    /// Rebuilds the dataset against its source MDP, cross-checking the
    /// fingerprint and re-validating the probability tables.
    pub fn to_dataset(&self, mdp: &TabularMdp<f64>) -> Result<OfflineDataset<f64>> {
        let fingerprint = mdp_fingerprint(mdp);
        if fingerprint != self.mdp_id {
            return Err(Error::DomainError(format!(
                "dataset was logged from MDP {}, not the supplied MDP {fingerprint}",
                self.mdp_id
            )));
        }
        let mode = match self.mode.as_str() {
            "exact" => DatasetMode::Exact,
            "sampled" => DatasetMode::Sampled,
            other => {
                return Err(Error::DomainError(format!("unknown dataset mode {other:?}")));
            }
        };
        let weights = flatten_checked(&self.weights, mdp.n_states, mdp.n_actions, "weights")?;
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::DomainError("dataset weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::DomainError(format!(
                "dataset weights sum to {total}, expected 1"
            )));
        }
        let behavior_probs =
            flatten_checked(&self.behavior, mdp.n_states, mdp.n_actions, "behavior")?;
        let behavior = Policy::new(mdp.n_states, mdp.n_actions, behavior_probs)?;
        let samples = match (&mode, &self.samples) {
            (DatasetMode::Exact, None) => None,
            (DatasetMode::Sampled, Some(rows)) => {
                for (i, (s, a, _, next_s)) in rows.iter().enumerate() {
                    if *s >= mdp.n_states || *a >= mdp.n_actions || *next_s >= mdp.n_states {
                        return Err(Error::DomainError(format!(
                            "sample {i} indexes outside the MDP: ({s}, {a}, ·, {next_s})"
                        )));
                    }
                }
                Some(
                    rows.iter()
                        .map(|(s, a, reward, next_s)| SampleTransition {
                            s: *s,
                            a: *a,
                            reward: *reward,
                            next_s: *next_s,
                        })
                        .collect(),
                )
            }
            (DatasetMode::Exact, Some(_)) => {
                return Err(Error::DomainError("exact-mode dataset carries samples".into()));
            }
            (DatasetMode::Sampled, None) => {
                return Err(Error::DomainError("sampled-mode dataset without samples".into()));
            }
        };
        Ok(OfflineDataset { mode, weights, behavior, samples, mdp_id: self.mdp_id.clone(), seed: self.seed })
    }
}

/// Solver settings as echoed into result files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfigJson {
    pub step_size_min: f64,
    pub step_size_max: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_decay: String,
    pub averaging: bool,
}

impl From<&crate::solver::SolverConfig> for SolverConfigJson {
    fn from(config: &crate::solver::SolverConfig) -> Self {
        Self {
            step_size_min: config.step_size_min,
            step_size_max: config.step_size_max,
            max_iters: config.max_iters,
            grad_tol: config.grad_tol,
            step_decay: config.step_decay.to_string(),
            averaging: config.averaging,
        }
    }
}

/// Everything a run resolved to, echoed so the result file is
/// self-describing.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigEchoJson {
    pub mdp: String,
    pub method: String,
    pub behavior: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub dataset_mode: String,
    pub solver: SolverConfigJson,
}

/// The JSON document `run` writes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunResultJson {
    pub method: String,
    pub value_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta_max_error: Option<f64>,
    pub converged: bool,
    pub iters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta_table: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_table: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_table: Option<Vec<f64>>,
    pub config: ConfigEchoJson,
    pub seed: u64,
}
