//! Offline policy optimization in the discounted regime.
//!
//! Everything here maximizes a *regularized* return from a fixed dataset,
//!
//! ```text
//!   J(π) = reward_on·ρ(π) − α·D_f(dπ ‖ d^D),
//! ```
//!
//! attacked not on dπ directly but through the Q-function dual, which needs
//! no samples from π:
//!
//! ```text
//!   max_π min_Q (1−γ)·E_{μ0,π}[Q] + E_{d^D}[ (αf)*( h + γPπQ − Q ) ]
//! ```
//!
//! with `h = R` when `reward_on` (pure imitation drops it) and the scaled
//! conjugate `(αf)*(y) = α·f*(y/α)`. The KL variant replaces the conjugate
//! sum with the normalized form `log E_{d^D}[exp(R + γPπQ − Q)]`.
//!
//! The policy is a per-state softmax of a logit table. Its gradient enters
//! the objective in two places — the initial distribution `ν_π` and the
//! backup `PπQ` — and both contributions share the same per-state factor, so
//! the full logit gradient collapses to
//!
//! ```text
//!   ∂/∂logit(s,b) = m(s) · π(b|s) · (Q(s,b) − Σ_a π(a|s)Q(s,a)),
//!   m(s) = (1−γ)·μ0(s) + γ·(T* outer)(s),
//! ```
//!
//! where `outer` is the conjugate-derivative weight of each dataset pair. At
//! the saddle `m` becomes the discounted state visitation and the expression
//! reduces to the classical advantage-weighted policy gradient, which is what
//! [`policy_gradient_via_lagrangian`] extracts exactly.
//!
//! Expectations are taken against the dataset's pair weights; the backup
//! `PπQ` is always applied with the known transition model, so a sampled
//! dataset differs from an exact one only through its empirical weights.

use std::cell::{Cell, RefCell};

use crate::convex::{f_divergence, log_mean_exp, softmax_weights, ConvexGenerator};
use crate::dataset::OfflineDataset;
use crate::error::{Error, Result};
use crate::estimators::{require_coverage, require_discounted};
use crate::mdp::{
    policy_adjoint, policy_forward, policy_value_average, transition_adjoint, Policy, TabularMdp,
};
use crate::oracles::{exact_value, exact_visitation};
use crate::scalar::Scalar;
use crate::solver::{solve_min, solve_saddle, SolveReport, SolverConfig};

/// Gradient tolerance every nested inner solve must reach before the outer
/// iteration is allowed to proceed.
pub const INNER_TOLERANCE: f64 = 1e-6;

/// Solver settings plus the loop-structure switch.
#[derive(Debug, Clone, Default)]
pub struct PolicyOptConfig {
    pub solver: SolverConfig,
    /// `false`: single-loop GDA with equal steps and iterate averaging.
    /// `true`: the Q problem is re-solved to [`INNER_TOLERANCE`] before every
    /// policy ascent step. [`policy_gradient_via_lagrangian`] requires nested
    /// mode; the optimizers accept either.
    pub nested: bool,
}

/// Output of a policy optimization run.
#[derive(Debug, Clone)]
pub struct OptResult<F> {
    pub method: String,
    /// Per-state logits; their row softmax is the returned policy.
    pub policy_logits: Vec<F>,
    pub q_table: Vec<F>,
    /// ρ of the returned policy, computed by the exact oracle — deliberately
    /// independent of the learned `q_table`'s accuracy.
    pub value_of_policy: F,
    /// J(π) at the returned policy, likewise oracle-computed.
    pub regularized_objective: F,
    pub report: SolveReport<F>,
}

impl<F: Scalar> OptResult<F> {
    /// The returned policy itself (row softmax of `policy_logits`).
    pub fn policy(&self, mdp: &TabularMdp<F>) -> Policy<F> {
        Policy::from_logits(mdp.n_states, mdp.n_actions, &self.policy_logits)
    }
}

/// The penalty half of the objective: how dataset residuals are charged.
enum QlpPenalty<'a, F> {
    /// `E_{d^D}[(αf)*(res)]` with `(αf)*(y) = α·f*(y/α)`.
    Conjugate { gen: &'a ConvexGenerator, alpha: F },
    /// `log E_{d^D}[exp(res)]` — the KL conjugate restricted to normalized
    /// densities.
    LogMeanExp,
}

impl<F: Scalar> QlpPenalty<'_, F> {
    /// Penalty value and its residual derivative scaled by the dataset
    /// weights (`outer_z = d^D_z · g′(res_z)`), which is the mass every
    /// gradient below flows through.
    fn value_and_outer(&self, residual: &[F], weights: &[F]) -> (F, Vec<F>) {
        match self {
            QlpPenalty::Conjugate { gen, alpha } => {
                let mut value = F::zero();
                let mut outer = vec![F::zero(); residual.len()];
                for z in 0..residual.len() {
                    if weights[z] == F::zero() {
                        continue;
                    }
                    let scaled = residual[z] / *alpha;
                    value += weights[z] * *alpha * gen.conjugate(scaled);
                    outer[z] = weights[z] * gen.conjugate_derivative(scaled);
                }
                (value, outer)
            }
            QlpPenalty::LogMeanExp => {
                let value = log_mean_exp(residual, weights);
                let sw = softmax_weights(residual, weights);
                let outer = (0..residual.len()).map(|z| weights[z] * sw[z]).collect();
                (value, outer)
            }
        }
    }
}

struct PrimalParts<F> {
    value: F,
    grad_q: Vec<F>,
    grad_logits: Vec<F>,
}

/// Objective value and both gradients of the primal at `(logits, q)`.
fn primal_parts<F: Scalar>(
    mdp: &TabularMdp<F>,
    weights: &[F],
    logits: &[F],
    q: &[F],
    include_reward: bool,
    penalty: &QlpPenalty<F>,
) -> PrimalParts<F> {
    let n_sa = mdp.n_sa();
    let policy = Policy::from_logits(mdp.n_states, mdp.n_actions, logits);
    let nu = mdp.initial_sa_dist(&policy);
    let one_minus_gamma = F::one() - mdp.discount;

    let backup = policy_forward(mdp, &policy, q);
    let mut residual = vec![F::zero(); n_sa];
    for z in 0..n_sa {
        let h = if include_reward { mdp.reward[z] } else { F::zero() };
        residual[z] = h + mdp.discount * backup[z] - q[z];
    }
    let (mut value, outer) = penalty.value_and_outer(&residual, weights);

    // ∂/∂Q: (1−γ)ν + γPπ*outer − outer.
    let adjoint = policy_adjoint(mdp, &policy, &outer);
    let mut grad_q = vec![F::zero(); n_sa];
    for z in 0..n_sa {
        value += one_minus_gamma * nu[z] * q[z];
        grad_q[z] = one_minus_gamma * nu[z] + mdp.discount * adjoint[z] - outer[z];
    }

    let grad_logits = logits_gradient(mdp, &policy, q, &outer);
    PrimalParts { value, grad_q, grad_logits }
}

/// The shared logit gradient: `m(s)·π(b|s)·(Q(s,b) − V̄(s))` with
/// `m = (1−γ)μ0 + γT*outer`. At γ=1 the initial-distribution term drops out,
/// which is exactly the average-reward case.
pub(crate) fn logits_gradient<F: Scalar>(
    mdp: &TabularMdp<F>,
    policy: &Policy<F>,
    q: &[F],
    outer: &[F],
) -> Vec<F> {
    let one_minus_gamma = F::one() - mdp.discount;
    let state_mass = transition_adjoint(mdp, outer);
    let v_bar = policy_value_average(mdp, policy, q);
    let mut grad = vec![F::zero(); mdp.n_sa()];
    for s in 0..mdp.n_states {
        let m = one_minus_gamma * mdp.initial_dist[s] + mdp.discount * state_mass[s];
        for b in 0..mdp.n_actions {
            let z = mdp.sa_index(s, b);
            grad[z] = m * policy.prob(s, b) * (q[z] - v_bar[s]);
        }
    }
    grad
}

/// Coverage for *every* candidate policy: pairs reachable under the uniform
/// policy are a superset of those reachable under any policy, so checking the
/// uniform candidate once suffices.
fn require_all_policy_coverage<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
) -> Result<()> {
    let uniform = Policy::uniform(mdp.n_states, mdp.n_actions);
    require_coverage(mdp, &uniform, dataset)
}

/// J(π) with every piece computed by the exact oracles: the policy's true
/// value (when `reward_on`) minus `α·D_f(dπ‖d^D)`.
pub fn oracle_regularized_objective<F: Scalar>(
    mdp: &TabularMdp<F>,
    weights: &[F],
    policy: &Policy<F>,
    gen: &ConvexGenerator,
    alpha: F,
    reward_on: bool,
) -> Result<F> {
    let reward_part = if reward_on { exact_value(mdp, policy)? } else { F::zero() };
    let d_pi = exact_visitation(mdp, policy)?;
    let divergence = f_divergence(gen, &d_pi, weights)?;
    Ok(reward_part - alpha * divergence)
}

/// Runs the max-min problem either as single-loop GDA (Q descends, logits
/// ascend, averaged iterates) or, when `nested`, as plain ascent on the
/// Danskin gradient with the inner Q problem re-solved each step.
fn optimize<F: Scalar>(
    mdp: &TabularMdp<F>,
    weights: &[F],
    include_reward: bool,
    penalty: &QlpPenalty<F>,
    config: &PolicyOptConfig,
) -> Result<(Vec<F>, Vec<F>, SolveReport<F>)> {
    let n_sa = mdp.n_sa();
    if !config.nested {
        let objective = |q: &[F], logits: &[F]| {
            let parts = primal_parts(mdp, weights, logits, q, include_reward, penalty);
            (parts.value, parts.grad_q, parts.grad_logits)
        };
        return solve_saddle(objective, vec![F::zero(); n_sa], vec![F::zero(); n_sa], &config.solver);
    }

    // Nested: each evaluation of the outer (negated, so minimized) objective
    // re-solves min_Q from a warm start, then hands back the Danskin gradient.
    let inner_config = SolverConfig {
        step_size_min: config.solver.step_size_min,
        step_size_max: config.solver.step_size_min,
        grad_tol: INNER_TOLERANCE.min(config.solver.grad_tol),
        averaging: false,
        ..config.solver.clone()
    };
    let outer_config = SolverConfig {
        step_size_min: config.solver.step_size_max,
        step_size_max: config.solver.step_size_max,
        max_iters: (config.solver.max_iters / 100).max(1),
        averaging: false,
        ..config.solver.clone()
    };
    let q_store = RefCell::new(vec![F::zero(); n_sa]);
    let inner_failed = Cell::new(false);
    let negated = |logits: &[F]| {
        if inner_failed.get() {
            // A failed inner solve already poisoned the run; report a zero
            // gradient so the outer loop halts at the last good iterate.
            return (F::zero(), vec![F::zero(); n_sa]);
        }
        let inner = |q: &[F]| {
            let parts = primal_parts(mdp, weights, logits, q, include_reward, penalty);
            (parts.value, parts.grad_q)
        };
        let warm_start = q_store.borrow().clone();
        match solve_min(inner, warm_start, &inner_config) {
            Ok((q_hat, inner_report)) if inner_report.converged => {
                let parts = primal_parts(mdp, weights, logits, &q_hat, include_reward, penalty);
                *q_store.borrow_mut() = q_hat;
                (-parts.value, parts.grad_logits.iter().map(|g| -*g).collect())
            }
            _ => {
                inner_failed.set(true);
                (F::zero(), vec![F::zero(); n_sa])
            }
        }
    };
    let (logits, mut report) = solve_min(negated, vec![F::zero(); n_sa], &outer_config)?;
    report.objective_value = -report.objective_value;
    for point in &mut report.trajectory {
        point.1 = -point.1;
    }
    if inner_failed.get() {
        report.converged = false;
    }
    Ok((q_store.into_inner(), logits, report))
}

fn finish<F: Scalar>(
    mdp: &TabularMdp<F>,
    weights: &[F],
    method: String,
    gen: &ConvexGenerator,
    alpha: F,
    reward_on: bool,
    q_table: Vec<F>,
    policy_logits: Vec<F>,
    report: SolveReport<F>,
) -> Result<OptResult<F>> {
    let policy = Policy::from_logits(mdp.n_states, mdp.n_actions, &policy_logits);
    let value_of_policy = exact_value(mdp, &policy)?;
    let regularized_objective =
        oracle_regularized_objective(mdp, weights, &policy, gen, alpha, reward_on)?;
    Ok(OptResult {
        method,
        policy_logits,
        q_table,
        value_of_policy,
        regularized_objective,
        report,
    })
}

/// Regularized offline policy optimization:
///
/// ```text
///   max_π min_Q (1−γ)·E_{μ0,π}[Q] + E_{d^D}[ α·f*((h + γPπQ − Q)/α) ]
/// ```
///
/// with `h = R` when `reward_on`. Setting `reward_on = false` turns the
/// problem into pure imitation: the optimum of `−α·D_f(dπ‖d^D)` is the
/// behavior that produced the dataset.
pub fn algaedice_primal<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
    gen: &ConvexGenerator,
    reward_on: bool,
    alpha: F,
    config: &PolicyOptConfig,
) -> Result<OptResult<F>> {
    require_discounted(mdp)?;
    require_all_policy_coverage(mdp, dataset)?;
    assert!(alpha > F::zero(), "regularizer weight must be positive");
    let penalty = QlpPenalty::Conjugate { gen, alpha };
    let method = if reward_on {
        format!("algaedice:{gen}")
    } else {
        format!("algaedice:{gen}:noreward")
    };
    let (q_table, logits, report) =
        optimize(mdp, &dataset.weights, reward_on, &penalty, config)?;
    finish(mdp, &dataset.weights, method, gen, alpha, reward_on, q_table, logits, report)
}

/// KL-regularized optimization with the normalized conjugate:
///
/// ```text
///   max_π min_Q (1−γ)·E_{μ0,π}[Q] + log E_{d^D}[exp(R + γPπQ − Q)]
/// ```
///
/// The optimum trades return against KL(dπ‖d^D); with a constant reward the
/// KL term dominates and the behavior policy itself is optimal.
pub fn kl_qlp_optimize<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
    config: &PolicyOptConfig,
) -> Result<OptResult<F>> {
    require_discounted(mdp)?;
    require_all_policy_coverage(mdp, dataset)?;
    let penalty = QlpPenalty::LogMeanExp;
    let (q_table, logits, report) = optimize(mdp, &dataset.weights, true, &penalty, config)?;
    finish(
        mdp,
        &dataset.weights,
        "klqlp".to_string(),
        &ConvexGenerator::Kl,
        F::one(),
        true,
        q_table,
        logits,
        report,
    )
}

/// Exact policy-gradient extraction from offline data via Danskin's
/// argument: solve the reward-mode evaluation Lagrangian
///
/// ```text
///   min_Q max_ζ (1−γ)·E_{μ0,π}[Q] + E_{d^D}[ζ·(R + γPπQ − Q)]
/// ```
///
/// at the fixed policy, then differentiate the Lagrangian in the logits at
/// the solution. The saddle decouples into two least-squares problems — the
/// Bellman residual in Q and the flow residual in ζ = e^w — each driven to
/// [`INNER_TOLERANCE`]; at their solutions the assembled gradient equals the
/// true on-policy gradient `μπ(s)·π(b|s)·(Qπ(s,b) − Vπ(s))`.
pub fn policy_gradient_via_lagrangian<F: Scalar>(
    mdp: &TabularMdp<F>,
    dataset: &OfflineDataset<F>,
    logits: &[F],
    config: &PolicyOptConfig,
) -> Result<Vec<F>> {
    require_discounted(mdp)?;
    if !config.nested {
        return Err(Error::DomainError(
            "policy_gradient_via_lagrangian requires nested mode (config.nested = true)".into(),
        ));
    }
    let policy = Policy::from_logits(mdp.n_states, mdp.n_actions, logits);
    require_coverage(mdp, &policy, dataset)?;
    let n_sa = mdp.n_sa();
    let weights = &dataset.weights;
    let nu = mdp.initial_sa_dist(&policy);
    let one_minus_gamma = F::one() - mdp.discount;
    let inner_config = SolverConfig {
        step_size_max: config.solver.step_size_min,
        grad_tol: INNER_TOLERANCE.min(config.solver.grad_tol),
        averaging: false,
        ..config.solver.clone()
    };

    // min_Q ½·Σ_z d^D_z (R + γPπQ − Q)_z²  — solved by Qπ on the support.
    let bellman = |q: &[F]| {
        let backup = policy_forward(mdp, &policy, q);
        let mut value = F::zero();
        let mut weighted = vec![F::zero(); n_sa];
        for z in 0..n_sa {
            let res = mdp.reward[z] + mdp.discount * backup[z] - q[z];
            value += F::cast(0.5) * weights[z] * res * res;
            weighted[z] = weights[z] * res;
        }
        let adjoint = policy_adjoint(mdp, &policy, &weighted);
        let grad = (0..n_sa).map(|z| mdp.discount * adjoint[z] - weighted[z]).collect();
        (value, grad)
    };
    let (q_hat, q_report) = solve_min(bellman, vec![F::zero(); n_sa], &inner_config)?;
    if !q_report.converged {
        return Err(Error::InnerNonconvergence {
            context: "Bellman least squares",
            residual: q_report.final_grad_norm.to_f64().unwrap_or(f64::NAN),
        });
    }

    // min_w ½·‖(1−γ)ν + γPπ*m − m‖², m = d^D·e^w — solved by m = dπ.
    let flow = |w: &[F]| {
        let m: Vec<F> = (0..n_sa).map(|z| weights[z] * w[z].exp()).collect();
        let adjoint = policy_adjoint(mdp, &policy, &m);
        let mut g = vec![F::zero(); n_sa];
        let mut value = F::zero();
        for z in 0..n_sa {
            g[z] = one_minus_gamma * nu[z] + mdp.discount * adjoint[z] - m[z];
            value += F::cast(0.5) * g[z] * g[z];
        }
        let forward = policy_forward(mdp, &policy, &g);
        let grad = (0..n_sa).map(|z| m[z] * (mdp.discount * forward[z] - g[z])).collect();
        (value, grad)
    };
    let (w_hat, w_report) = solve_min(flow, vec![F::zero(); n_sa], &inner_config)?;
    if !w_report.converged {
        return Err(Error::InnerNonconvergence {
            context: "flow least squares",
            residual: w_report.final_grad_norm.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mass: Vec<F> = (0..n_sa).map(|z| weights[z] * w_hat[z].exp()).collect();
    Ok(logits_gradient(mdp, &policy, &q_hat, &mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMode;
    use crate::oracles::{
        exact_policy_gradient, exact_regularized_optimum, RegularizedMode,
    };
    use crate::scalar::{sup_distance, sup_norm};
    use crate::solver::StepDecay;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One state, two actions, R = [1, 0]: the simplest instance where the
    /// regularized optimum is a strict interior mixture.
    fn two_action_bandit(gamma: f64) -> TabularMdp<f64> {
        TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0], gamma).unwrap()
    }

    /// Two states, two actions: action 0 stays, action 1 swaps.
    fn two_action_swap(gamma: f64) -> TabularMdp<f64> {
        TabularMdp::new(
            2,
            2,
            vec![
                1.0, 0.0, // (s0, stay)
                0.0, 1.0, // (s0, swap)
                0.0, 1.0, // (s1, stay)
                1.0, 0.0, // (s1, swap)
            ],
            vec![0.3, 0.0, 0.8, 0.1],
            vec![1.0, 0.0],
            gamma,
        )
        .unwrap()
    }

    fn exact_dataset(mdp: &TabularMdp<f64>, behavior: &Policy<f64>) -> OfflineDataset<f64> {
        OfflineDataset::from_behavior(mdp, behavior, DatasetMode::Exact, None, 0).unwrap()
    }

    /// Single-loop GDA settings for the policy saddles: the conjugate term
    /// keeps the Q block strongly damped, so equal moderate steps with
    /// averaging converge without the bilinear orbit problem. The averaged
    /// iterate's gradient floor decays like 1/K (measured ~1e-5 at 300k on
    /// the fixtures here) even as the policy itself converges to ~1e-6, so
    /// the tolerance is set at that floor.
    fn opt_config(max_iters: usize) -> PolicyOptConfig {
        PolicyOptConfig {
            solver: SolverConfig {
                step_size_min: 0.4,
                step_size_max: 0.4,
                max_iters,
                grad_tol: 5e-5,
                step_decay: StepDecay::None,
                seed: 0,
                averaging: true,
            },
            nested: false,
        }
    }

    /// Exhaustive sweep of the oracle objective over 1-parameter policies of
    /// a 1-state 2-action instance.
    fn bandit_sweep(
        mdp: &TabularMdp<f64>,
        weights: &[f64],
        gen: &ConvexGenerator,
        alpha: f64,
        reward_on: bool,
    ) -> (f64, f64) {
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let policy = Policy::new(1, 2, vec![p, 1.0 - p]).unwrap();
            let j =
                oracle_regularized_objective(mdp, weights, &policy, gen, alpha, reward_on).unwrap();
            if j > best.1 {
                best = (p, j);
            }
        }
        best
    }

    #[test]
    fn algaedice_square_bandit_matches_sweep() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let gen = ConvexGenerator::Square;
        let result =
            algaedice_primal(&mdp, &dataset, &gen, true, 1.0, &opt_config(300_000)).unwrap();

        // Analytic optimum of p − p² − (1−p)²: p* = 3/4, J* = 1/8.
        let (best_p, best_j) = bandit_sweep(&mdp, &dataset.weights, &gen, 1.0, true);
        assert!((best_p - 0.75).abs() < 1e-3, "sweep oracle sanity: {best_p}");
        assert!((best_j - 0.125).abs() < 1e-6, "sweep oracle sanity: {best_j}");

        let policy = result.policy(&mdp);
        assert!(result.report.converged);
        assert!(policy.prob(0, 0) > 0.5, "mass on the rewarding action: {}", policy.prob(0, 0));
        assert!(
            (result.regularized_objective - best_j).abs() < 1e-3,
            "objective {} vs sweep max {best_j}",
            result.regularized_objective
        );
        assert_eq!(result.method, "algaedice:square");
        assert!((result.value_of_policy - policy.prob(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn algaedice_chisquare_bandit_matches_sweep() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let gen = ConvexGenerator::ChiSquare;
        let result =
            algaedice_primal(&mdp, &dataset, &gen, true, 1.0, &opt_config(300_000)).unwrap();

        // Analytic optimum of p − ½(2p−1)²: p* = 3/4, J* = 5/8.
        let (best_p, best_j) = bandit_sweep(&mdp, &dataset.weights, &gen, 1.0, true);
        assert!((best_p - 0.75).abs() < 1e-3);
        assert!((best_j - 0.625).abs() < 1e-6);
        assert!(result.policy(&mdp).prob(0, 0) > 0.5);
        assert!((result.regularized_objective - best_j).abs() < 1e-3);
    }

    #[test]
    fn algaedice_alpha_scales_the_regularizer() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let gen = ConvexGenerator::Square;
        let alpha = 2.0;
        let result =
            algaedice_primal(&mdp, &dataset, &gen, true, alpha, &opt_config(300_000)).unwrap();

        // Analytic optimum of p − 2(p² + (1−p)²): p* = 5/8, J* = −7/16.
        let (best_p, best_j) = bandit_sweep(&mdp, &dataset.weights, &gen, alpha, true);
        assert!((best_p - 0.625).abs() < 1e-3);
        assert!((best_j + 0.4375).abs() < 1e-6);
        assert!((result.regularized_objective - best_j).abs() < 1e-3);
    }

    #[test]
    fn algaedice_imitation_recovers_expert() {
        let mdp = two_action_swap(0.6);
        // Deterministic expert: swap in state 0, stay in state 1. The dataset
        // comes from a lightly smoothed version so every pair keeps support.
        let expert = Policy::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let behavior = crate::mdp::blend_with_uniform(&expert, 0.1);
        let dataset = exact_dataset(&mdp, &behavior);
        let gen = ConvexGenerator::Square;
        let result =
            algaedice_primal(&mdp, &dataset, &gen, false, 1.0, &opt_config(300_000)).unwrap();

        let policy = result.policy(&mdp);
        assert!(policy.prob(0, 1) > policy.prob(0, 0), "state 0 argmax is the expert's swap");
        assert!(policy.prob(1, 0) > policy.prob(1, 1), "state 1 argmax is the expert's stay");
        assert_eq!(result.method, "algaedice:square:noreward");

        // Imitation consistency: the returned policy is no farther from the
        // dataset (in D_f) than the uniform initialization was.
        let d_returned = exact_visitation(&mdp, &policy).unwrap();
        let d_init = exact_visitation(&mdp, &Policy::uniform(2, 2)).unwrap();
        let div_returned = f_divergence(&gen, &d_returned, &dataset.weights).unwrap();
        let div_init = f_divergence(&gen, &d_init, &dataset.weights).unwrap();
        assert!(
            div_returned <= div_init + 1e-12,
            "divergence decreased: {div_returned} vs {div_init}"
        );
    }

    #[test]
    fn algaedice_single_action_is_trivial() {
        let mdp = crate::mdp::swap_chain(0.6);
        let behavior = Policy::uniform(2, 1);
        let dataset = exact_dataset(&mdp, &behavior);
        // With one action there is no max player at all — the problem is a
        // damped pure minimization, where raw iterates converge linearly and
        // averaging would only lag behind.
        let mut config = opt_config(200_000);
        config.solver.averaging = false;
        config.solver.grad_tol = 1e-8;
        let result =
            algaedice_primal(&mdp, &dataset, &ConvexGenerator::Square, true, 1.0, &config)
                .unwrap();

        // No policy degrees of freedom: the softmax of any 1-action logit
        // table is the unique policy, and the Q block reaches its fixed point.
        let policy = result.policy(&mdp);
        assert_eq!(policy.prob(0, 0), 1.0);
        assert_eq!(policy.prob(1, 0), 1.0);
        assert!(result.report.converged);
        assert!(result.report.final_grad_norm < 1e-6);
        assert!((result.value_of_policy - exact_value(&mdp, &behavior).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn algaedice_nested_matches_single_loop() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let gen = ConvexGenerator::Square;
        let mut config = opt_config(200_000);
        config.nested = true;
        config.solver.step_size_max = 2.0; // outer ascent step on the logits
        let result = algaedice_primal(&mdp, &dataset, &gen, true, 1.0, &config).unwrap();
        assert!(result.report.converged);
        assert!((result.policy(&mdp).prob(0, 0) - 0.75).abs() < 5e-3);
        assert!((result.regularized_objective - 0.125).abs() < 1e-3);
    }

    #[test]
    fn algaedice_flags_nonconvergence() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let mut config = opt_config(10);
        config.solver.grad_tol = 1e-14;
        let result =
            algaedice_primal(&mdp, &dataset, &ConvexGenerator::Square, true, 1.0, &config)
                .unwrap();
        assert!(!result.report.converged);
    }

    #[test]
    fn algaedice_rejects_uncovered_dataset() {
        let mdp = two_action_swap(0.6);
        // A deterministic behavior leaves half the pairs with zero mass, so
        // candidate policies that use them are uncovered.
        let expert = Policy::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let dataset = exact_dataset(&mdp, &expert);
        let err = algaedice_primal(
            &mdp,
            &dataset,
            &ConvexGenerator::Square,
            true,
            1.0,
            &opt_config(1000),
        )
        .unwrap_err();
        assert!(matches!(err, Error::CoverageError(v) if !v.is_empty()));
    }

    #[test]
    fn klqlp_bandit_matches_sweep() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let result = kl_qlp_optimize(&mdp, &dataset, &opt_config(300_000)).unwrap();

        // Analytic optimum of p − KL(dπ‖uniform): p* = e/(1+e) ≈ 0.731.
        let (best_p, best_j) =
            bandit_sweep(&mdp, &dataset.weights, &ConvexGenerator::Kl, 1.0, true);
        let p_star = std::f64::consts::E / (1.0 + std::f64::consts::E);
        assert!((best_p - p_star).abs() < 1e-3, "sweep sanity: {best_p} vs {p_star}");

        let policy = result.policy(&mdp);
        assert!(result.report.converged);
        assert!(policy.prob(0, 0) > 0.5);
        assert!((result.regularized_objective - best_j).abs() < 1e-3);
        assert_eq!(result.method, "klqlp");
    }

    #[test]
    fn klqlp_gradient_matches_finite_differences() {
        let mdp = crate::mdp::random_mdp(3, 2, 0.5, 0);
        let dataset = exact_dataset(&mdp, &Policy::uniform(3, 2));
        let penalty = QlpPenalty::LogMeanExp;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n_sa = mdp.n_sa();
        for _ in 0..3 {
            let logits: Vec<f64> = (0..n_sa).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q: Vec<f64> = (0..n_sa).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let analytic =
                primal_parts(&mdp, &dataset.weights, &logits, &q, true, &penalty).grad_logits;
            let eps = 1e-5;
            for i in 0..n_sa {
                let mut hi = logits.clone();
                let mut lo = logits.clone();
                hi[i] += eps;
                lo[i] -= eps;
                let f_hi = primal_parts(&mdp, &dataset.weights, &hi, &q, true, &penalty).value;
                let f_lo = primal_parts(&mdp, &dataset.weights, &lo, &q, true, &penalty).value;
                let numerical = (f_hi - f_lo) / (2.0 * eps);
                assert!(
                    (analytic[i] - numerical).abs() < 1e-6,
                    "coordinate {i}: analytic {} vs finite difference {numerical}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn klqlp_constant_reward_recovers_behavior() {
        let mut mdp = crate::mdp::random_mdp(2, 2, 0.4, 0);
        mdp.reward = vec![0.7; 4];
        let behavior =
            crate::mdp::blend_with_uniform(&crate::mdp::random_policy(2, 2, 3), 0.4);
        let dataset = exact_dataset(&mdp, &behavior);
        let result = kl_qlp_optimize(&mdp, &dataset, &opt_config(300_000)).unwrap();

        // With R ≡ c the KL term decides alone: dπ* = d^D, i.e. the behavior
        // policy, with objective value c.
        let policy = result.policy(&mdp);
        for s in 0..2 {
            for a in 0..2 {
                assert!(
                    (policy.prob(s, a) - behavior.prob(s, a)).abs() < 1e-2,
                    "π̂({a}|{s}) = {} vs behavior {}",
                    policy.prob(s, a),
                    behavior.prob(s, a)
                );
            }
        }
        let (_, oracle_value) = exact_regularized_optimum(
            &mdp,
            &dataset.weights,
            &ConvexGenerator::Kl,
            RegularizedMode::DiscountedVlp,
        )
        .unwrap();
        assert!((result.regularized_objective - oracle_value).abs() < 1e-3);
        assert!((result.regularized_objective - 0.7).abs() < 1e-3);
    }

    #[test]
    fn policy_gradient_matches_exact_oracle() {
        let mdp = crate::mdp::random_mdp(2, 2, 0.5, 0);
        let dataset = exact_dataset(&mdp, &Policy::uniform(2, 2));
        let mut config = opt_config(400_000);
        config.nested = true;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for point in 0..5 {
            let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = policy_gradient_via_lagrangian(&mdp, &dataset, &logits, &config).unwrap();
            // exact_policy_gradient is itself finite-difference validated, so
            // this also covers the Danskin consistency property.
            let oracle = exact_policy_gradient(&mdp, &logits).unwrap();
            assert!(
                sup_distance(&grad, &oracle) < 1e-3,
                "point {point}: {grad:?} vs {oracle:?}"
            );
        }
    }

    #[test]
    fn policy_gradient_single_action_is_zero() {
        let mdp = crate::mdp::swap_chain(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(2, 1));
        let mut config = opt_config(200_000);
        config.nested = true;
        let grad =
            policy_gradient_via_lagrangian(&mdp, &dataset, &[0.3, -0.2], &config).unwrap();
        assert_eq!(grad, vec![0.0, 0.0]);
    }

    #[test]
    fn policy_gradient_vanishes_at_near_optimal_logits() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        // The target ratio at the saturated action is ~4e-9, so the flow
        // least-squares boundary coordinate decays like 1/√t and needs the
        // larger budget to push its gradient below the inner tolerance.
        let mut config = opt_config(3_000_000);
        config.nested = true;
        config.solver.grad_tol = 1e-6;
        let grad =
            policy_gradient_via_lagrangian(&mdp, &dataset, &[20.0, 0.0], &config).unwrap();
        assert!(sup_norm(&grad) < 1e-3, "gradient at the saturated optimum: {grad:?}");
    }

    #[test]
    fn policy_gradient_requires_nested_mode() {
        let mdp = two_action_bandit(0.5);
        let dataset = exact_dataset(&mdp, &Policy::uniform(1, 2));
        let err = policy_gradient_via_lagrangian(&mdp, &dataset, &[0.0, 0.0], &opt_config(100))
            .unwrap_err();
        assert!(matches!(err, Error::DomainError(_)));
    }
}

