//! The state-value linear program: optimization and evaluation where the
//! decision variable lives over states instead of state-action pairs.
//!
//! The regularized optimization problem `max_{d≥0} ⟨d,R⟩ − D_f(d‖d^D)`
//! subject to the per-state flow constraints dualizes to a minimization over
//! two functions — the state values `V` and a multiplier `K ≥ 0` for the
//! nonnegativity of `d`:
//!
//! ```text
//!   min_{K≥0, V} (1−γ)·E_{μ0}[V] + E_{d^D}[ f*( K + R + γTV − V ) ]
//! ```
//!
//! with `(TV)(s,a) = Σ_{s'} T(s'|s,a)·V(s')`. The optimal density is read
//! off as `d* = d^D · f*′(K* + R + γTV* − V*)` and the optimal policy by
//! Bayes' rule, `π*(a|s) = d*(s,a) / Σ_a d*(s,a)`.
//!
//! For KL regularization the conjugate restricted to normalized densities is
//! the log-mean-exp, whose domain already keeps `d` nonnegative, so `K`
//! disappears and the dual collapses to the classical REPS objective
//!
//! ```text
//!   min_V (1−γ)·E_{μ0}[V] + log E_{d^D}[ exp(R + γTV − V) ].
//! ```
//!
//! Note the gauge: adding a constant to `V` moves the two terms by `(1−γ)c`
//! and `−(1−γ)c`, so the REPS gradient is exactly orthogonal to the constant
//! direction and the solver simply never moves along it.
//!
//! [`vlp_policy_eval_lagrangian`] runs the V-LP the other way around: fixing
//! a target policy and treating its state visitation `μ` as the primal
//! variable. Unlike every Q-LP method in this crate, its data expectation
//! reweights each pair by `π(a|s) / d^D(a|s)` — the behavior conditional must
//! be known, which is the price of working over states.

use crate::convex::{log_mean_exp, softmax_weights, ConvexGenerator};
use crate::dataset::OfflineDataset;
use crate::error::{Error, Result};
use crate::estimators::{require_coverage, require_discounted};
use crate::mdp::{transition_adjoint, transition_forward, Policy, TabularMdp};
use crate::scalar::Scalar;
use crate::solver::{solve_min, solve_saddle, SolveReport, SolverConfig};

/// Output of a V-LP solve.
#[derive(Debug, Clone)]
pub struct VlpResult<F> {
    pub method: String,
    pub v_table: Vec<F>,
    /// Multiplier of the `d ≥ 0` constraint; `None` in KL mode, where the
    /// conjugate's domain enforces nonnegativity by itself.
    pub k_table: Option<Vec<F>>,
    /// Recovered density, renormalized to sum exactly to one.
    pub recovered_d: Vec<F>,
    pub recovered_policy: Policy<F>,
    /// States whose recovered mass was all zero; their policy rows fell back
    /// to uniform.
    pub uniform_fallback_states: Vec<usize>,
    /// Σ recovered_d before renormalization — drifts from 1 only by solver
    /// tolerance.
    pub raw_d_sum: F,
    pub objective_value: F,
    pub report: SolveReport<F>,
}

/// Per-state Bayes normalization of a nonnegative state-action table:
/// `π(a|s) = d(s,a) / Σ_a d(s,a)`, uniform where the denominator vanishes.
fn bayes_policy<F: Scalar>(
    n_states: usize,
    n_actions: usize,
    d: &[F],
) -> (Policy<F>, Vec<usize>) {
    let mut probs = vec![F::zero(); d.len()];
    let mut fallback = Vec::new();
    for s in 0..n_states {
        let row = &d[s * n_actions..(s + 1) * n_actions];
        let mass: F = row.iter().copied().sum();
        if mass > F::zero() {
            for a in 0..n_actions {
                probs[s * n_actions + a] = row[a] / mass;
            }
        } else {
            fallback.push(s);
            let uniform = F::one() / F::cast_usize(n_actions);
            for a in 0..n_actions {
                probs[s * n_actions + a] = uniform;
            }
        }
    }
    let policy = Policy::new(n_states, n_actions, probs).expect("Bayes rows are normalized");
    (policy, fallback)
}

/// Clamps a recovered density at zero and renormalizes it to sum exactly to
/// one, returning the raw (pre-normalization) sum alongside.
fn normalize_density<F: Scalar>(mut d: Vec<F>) -> (Vec<F>, F) {
    for v in &mut d {
        *v = v.max(F::zero());
    }
    let raw_sum: F = d.iter().copied().sum();
    if raw_sum > F::zero() {
        for v in &mut d {
            *v /= raw_sum;
        }
    }
    (d, raw_sum)
}

/// Maximum-likelihood policy extraction: the closed-form per-state maximizer
/// of `E_{d^D}[(1/Z(s))·w(s,a)·log π(a|s)]`, namely `π(a|s) ∝ d^D(s,a)·w(s,a)`
/// with `Z(s) = Σ_a d^D(s,a)·w(s,a)`. Rows with all-zero mass fall back to
/// uniform.
pub fn max_likelihood_policy<F: Scalar>(
    dataset: &OfflineDataset<F>,
    weights: &[F],
) -> Policy<F> {
    assert_eq!(weights.len(), dataset.weights.len(), "weight table shape");
    assert!(weights.iter().all(|w| *w >= F::zero()), "weights must be nonnegative");
    let reweighted: Vec<F> =
        dataset.weights.iter().zip(weights).map(|(d, w)| *d * *w).collect();
    let (policy, _) = bayes_policy(dataset.behavior.n_states, dataset.behavior.n_actions, &reweighted);
    policy
}

/// The f-divergence V-LP dual over `(K ≥ 0, V)`, with `K = exp(k)`.
pub fn vlp_fdiv_dual<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
    gen: &ConvexGenerator,
    config: &SolverConfig,
) -> Result<VlpResult<F>> {
    require_discounted(mdp)?;
    if matches!(gen, ConvexGenerator::Kl) {
        return Err(Error::DomainError(
            "the KL-regularized V-LP has no K multiplier; use reps_objective_solve".into(),
        ));
    }
    require_full_support(dataset)?;
    let n_sa = mdp.n_sa();
    let n_states = mdp.n_states;
    let one_minus_gamma = F::one() - mdp.discount;
    let weights = &dataset.weights;

    // Parameter layout: [k (n_sa) | V (n_states)].
    let objective = |x: &[F]| {
        let (k, v) = x.split_at(n_sa);
        let tv = transition_forward(mdp, v);
        let mut value = F::zero();
        let mut grad = vec![F::zero(); n_sa + n_states];
        let mut outer = vec![F::zero(); n_sa];
        for z in 0..n_sa {
            let big_k = k[z].exp();
            let arg = big_k + mdp.reward[z] + mdp.discount * tv[z] - v[z / mdp.n_actions];
            value += weights[z] * gen.conjugate(arg);
            outer[z] = weights[z] * gen.conjugate_derivative(arg);
            grad[z] = outer[z] * big_k;
        }
        let state_adjoint = transition_adjoint(mdp, &outer);
        for s in 0..n_states {
            value += one_minus_gamma * mdp.initial_dist[s] * v[s];
            let mut row_mass = F::zero();
            for a in 0..mdp.n_actions {
                row_mass += outer[mdp.sa_index(s, a)];
            }
            grad[n_sa + s] = one_minus_gamma * mdp.initial_dist[s]
                + mdp.discount * state_adjoint[s]
                - row_mass;
        }
        (value, grad)
    };

    let (x_hat, report) = solve_min(objective, vec![F::zero(); n_sa + n_states], config)?;
    let (k_hat, v_hat) = x_hat.split_at(n_sa);
    let tv = transition_forward(mdp, v_hat);
    let mut d_raw = vec![F::zero(); n_sa];
    for z in 0..n_sa {
        let arg = k_hat[z].exp() + mdp.reward[z] + mdp.discount * tv[z] - v_hat[z / mdp.n_actions];
        d_raw[z] = weights[z] * gen.conjugate_derivative(arg);
    }
    let (recovered_d, raw_d_sum) = normalize_density(d_raw);
    let (recovered_policy, uniform_fallback_states) =
        bayes_policy(n_states, mdp.n_actions, &recovered_d);
    Ok(VlpResult {
        method: format!("vlp:{gen}"),
        v_table: v_hat.to_vec(),
        k_table: Some(k_hat.iter().map(|k| k.exp()).collect()),
        recovered_d,
        recovered_policy,
        uniform_fallback_states,
        raw_d_sum,
        objective_value: report.objective_value,
        report,
    })
}

/// The REPS objective — the KL instance of the V-LP dual, where the
/// normalized conjugate removes the `K` multiplier:
///
/// ```text
///   min_V (1−γ)·E_{μ0}[V] + log E_{d^D}[exp(R + γTV − V)]
/// ```
///
/// The density is recovered through the softmax weights of the advantage
/// `R + γTV* − V*` and the policy by per-state Bayes normalization (equal to
/// [`max_likelihood_policy`] at those weights).
pub fn reps_objective_solve<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
    config: &SolverConfig,
) -> Result<VlpResult<F>> {
    require_discounted(mdp)?;
    require_full_support(dataset)?;
    let n_sa = mdp.n_sa();
    let n_states = mdp.n_states;
    let one_minus_gamma = F::one() - mdp.discount;
    let weights = &dataset.weights;

    let advantage = |v: &[F]| -> Vec<F> {
        let tv = transition_forward(mdp, v);
        (0..n_sa)
            .map(|z| mdp.reward[z] + mdp.discount * tv[z] - v[z / mdp.n_actions])
            .collect()
    };
    let objective = |v: &[F]| {
        let arg = advantage(v);
        let mut value = log_mean_exp(&arg, weights);
        let sw = softmax_weights(&arg, weights);
        let outer: Vec<F> = (0..n_sa).map(|z| weights[z] * sw[z]).collect();
        let state_adjoint = transition_adjoint(mdp, &outer);
        let mut grad = vec![F::zero(); n_states];
        for s in 0..n_states {
            value += one_minus_gamma * mdp.initial_dist[s] * v[s];
            let mut row_mass = F::zero();
            for a in 0..mdp.n_actions {
                row_mass += outer[mdp.sa_index(s, a)];
            }
            grad[s] = one_minus_gamma * mdp.initial_dist[s] + mdp.discount * state_adjoint[s]
                - row_mass;
        }
        (value, grad)
    };

    let (v_hat, report) = solve_min(objective, vec![F::zero(); n_states], config)?;
    let sw = softmax_weights(&advantage(&v_hat), weights);
    let recovered_policy = max_likelihood_policy(dataset, &sw);
    let d_raw: Vec<F> = (0..n_sa).map(|z| weights[z] * sw[z]).collect();
    let (recovered_d, raw_d_sum) = normalize_density(d_raw);
    let uniform_fallback_states = (0..n_states)
        .filter(|s| {
            (0..mdp.n_actions).all(|a| recovered_d[mdp.sa_index(*s, a)] == F::zero())
        })
        .collect();
    Ok(VlpResult {
        method: "reps".to_string(),
        v_table: v_hat,
        k_table: None,
        recovered_d,
        recovered_policy,
        uniform_fallback_states,
        raw_d_sum,
        objective_value: report.objective_value,
        report,
    })
}

/// Policy evaluation through the V-LP: the visitation LP
/// `max_μ Σ_s μ(s)·Σ_a π(a|s)R(s,a)` subject to the flow constraints
/// `μ = (1−γ)μ0 + γT*(μ×π)` is solved through its Lagrangian, a GDA saddle
/// over `(V, ω)` with `μ = m^D·ω`, `ω = e^u`. Every data expectation carries
/// the importance ratio `π(a|s)/d^D(a|s)` — this estimator needs the behavior
/// conditional, unlike the behavior-agnostic Q-LP Lagrangians.
pub fn vlp_policy_eval_lagrangian<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    config: &SolverConfig,
) -> Result<(Vec<F>, F)> {
    let (mu, value, _) = vlp_policy_eval_reported(mdp, target, dataset, config)?;
    Ok((mu, value))
}

/// [`vlp_policy_eval_lagrangian`] plus the solve report, for callers that
/// surface convergence diagnostics (the method registry).
pub(crate) fn vlp_policy_eval_reported<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    config: &SolverConfig,
) -> Result<(Vec<F>, F, crate::solver::SolveReport<F>)> {
    require_discounted(mdp)?;
    require_coverage(mdp, target, dataset)?;
    let n_sa = mdp.n_sa();
    let n_states = mdp.n_states;
    let one_minus_gamma = F::one() - mdp.discount;

    // c(s,a) = d^D(s,a)·π(a|s)/d^D(a|s) = m^D(s)·π(a|s): the reweighted pair
    // mass the Lagrangian sums over. Assembled through the behavior
    // conditional to make the dependence explicit.
    let state_marginal = dataset.state_marginal(mdp);
    let mut c = vec![F::zero(); n_sa];
    for s in 0..n_states {
        for a in 0..mdp.n_actions {
            let z = mdp.sa_index(s, a);
            if dataset.weights[z] > F::zero() {
                let behavior_conditional = dataset.weights[z] / state_marginal[s];
                c[z] = dataset.weights[z] * target.prob(s, a) / behavior_conditional;
            } else {
                // Coverage guarantees π(a|s) = 0 here; the pair carries no mass.
                c[z] = F::zero();
            }
        }
    }

    let objective = |v: &[F], u: &[F]| {
        let tv = transition_forward(mdp, v);
        let omega: Vec<F> = u.iter().map(|ui| ui.exp()).collect();
        let mut value = F::zero();
        let mut grad_u = vec![F::zero(); n_states];
        let mut mass = vec![F::zero(); n_sa];
        for z in 0..n_sa {
            let s = z / mdp.n_actions;
            let residual = mdp.reward[z] + mdp.discount * tv[z] - v[s];
            let weighted = c[z] * omega[s];
            value += weighted * residual;
            grad_u[s] += weighted * residual;
            mass[z] = weighted;
        }
        let state_adjoint = transition_adjoint(mdp, &mass);
        let mut grad_v = vec![F::zero(); n_states];
        for s in 0..n_states {
            value += one_minus_gamma * mdp.initial_dist[s] * v[s];
            let mut row_mass = F::zero();
            for a in 0..mdp.n_actions {
                row_mass += mass[mdp.sa_index(s, a)];
            }
            grad_v[s] = one_minus_gamma * mdp.initial_dist[s] + mdp.discount * state_adjoint[s]
                - row_mass;
        }
        (value, grad_v, grad_u)
    };

    let (_v_hat, u_hat, report) =
        solve_saddle(objective, vec![F::zero(); n_states], vec![F::zero(); n_states], config)?;
    let mu: Vec<F> = (0..n_states).map(|s| state_marginal[s] * u_hat[s].exp()).collect();
    let mut value = F::zero();
    for s in 0..n_states {
        for a in 0..mdp.n_actions {
            value += mu[s] * target.prob(s, a) * mdp.reward[mdp.sa_index(s, a)];
        }
    }
    Ok((mu, value, report))
}

/// Full dataset support: the V-LP duals roam over every density, so every
/// pair needs mass.
pub(crate) fn require_full_support<F: Scalar>(dataset: &OfflineDataset<F>) -> Result<()> {
    let n_actions = dataset.behavior.n_actions;
    let violations: Vec<_> = dataset
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w <= F::zero())
        .map(|(z, w)| crate::error::CoverageViolation {
            state: z / n_actions,
            action: z % n_actions,
            target_mass: 1.0 / dataset.weights.len() as f64,
            dataset_mass: w.to_f64().unwrap_or(0.0),
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::CoverageError(violations))
    }
}
