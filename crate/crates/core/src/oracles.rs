//! Exact ground-truth quantities via direct linear solves and brute-force
//! convex search: Qπ, dπ, ρ(π), the exact policy gradient, the undiscounted
//! stationary distribution, and regularized optima under flow constraints.
//! Every estimator in this crate is accepted against these references.
//!
//! | quantity            | defining equation                 | method            |
//! |---------------------|-----------------------------------|-------------------|
//! | `exact_q_values`    | (I − γPπ) Q = R                   | dense LU          |
//! | `exact_visitation`  | (I − γPπ*) d = (1−γ)·μ0π          | dense LU          |
//! | `exact_value`       | (1−γ)⟨μ0π, Q⟩ = ⟨dπ, R⟩           | both, must agree  |
//! | `exact_policy_gradient` | ∂ρ/∂logits via dπ, Qπ, softmax Jacobian | assembled |
//! | `exact_stationary`  | Pπ* d = d, Σd = 1                 | power iteration   |
//! | `exact_regularized_optimum` | max_d ⟨d,R⟩ − D_f(d‖d^D) s.t. flow | projected ascent |

use crate::convex::{f_divergence, ConvexGenerator};
use crate::error::{Error, Result};
use crate::linalg::{AffineProjector, DenseMatrix, LuFactors};
use crate::mdp::{policy_value_average, Policy, TabularMdp};
use crate::scalar::{dot, sup_distance, Scalar};

/// Tolerance at which the two value forms must agree in [`exact_value`].
pub const VALUE_IDENTITY_TOL: f64 = 1e-9;

/// Builds the dense matrix `I − γ·Mπ` (or its transpose) over state-action
/// indices, where `Mπ[(s,a),(s',a')] = T(s'|s,a)·π(a'|s')`.
pub fn discounted_operator_matrix<F: Scalar>(
    mdp: &TabularMdp<F>,
    policy: &Policy<F>,
    transpose: bool,
) -> DenseMatrix<F> {
    let n = mdp.n_sa();
    let m = mdp.policy_matrix(policy);
    let mut a = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            let coupling = if transpose { m[(j, i)] } else { m[(i, j)] };
            a[(i, j)] -= mdp.discount * coupling;
        }
    }
    a
}

/// Exact Q-values: solves `(I − γPπ) Q = R`.
pub fn exact_q_values<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>) -> Result<Vec<F>> {
    if mdp.is_undiscounted() {
        return Err(Error::UndiscountedUnsupported);
    }
    let a = discounted_operator_matrix(mdp, policy, false);
    let lu = LuFactors::factorize(a)?;
    Ok(lu.solve(&mdp.reward))
}

/// Exact state values `V(s) = Σ_a π(a|s) Q(s,a)`.
pub fn exact_v_values<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>) -> Result<Vec<F>> {
    let q = exact_q_values(mdp, policy)?;
    Ok(policy_value_average(mdp, policy, &q))
}

/// Exact discounted visitation: solves `d = (1−γ)·μ0π + γPπ*d`. The result
/// is a probability distribution over state-action pairs and does not depend
/// on the reward table.
pub fn exact_visitation<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>) -> Result<Vec<F>> {
    if mdp.is_undiscounted() {
        return Err(Error::UndiscountedUnsupported);
    }
    let a = discounted_operator_matrix(mdp, policy, true);
    let lu = LuFactors::factorize(a)?;
    let one_minus_gamma = F::one() - mdp.discount;
    let rhs: Vec<F> = mdp.initial_sa_dist(policy).iter().map(|v| *v * one_minus_gamma).collect();
    Ok(lu.solve(&rhs))
}

/// Exact policy value ρ(π), computed BOTH as `(1−γ)·E_{μ0,π}[Qπ]` and as
/// `E_{dπ}[R]`; the two must agree within [`VALUE_IDENTITY_TOL`] or the
/// call fails with [`Error::IdentityMismatch`] (which would signal an oracle
/// bug, not a property of the MDP). Returns the visitation form.
pub fn exact_value<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>) -> Result<F> {
    let q = exact_q_values(mdp, policy)?;
    let d = exact_visitation(mdp, policy)?;
    let nu = mdp.initial_sa_dist(policy);
    let q_form = (F::one() - mdp.discount) * dot(&nu, &q);
    let d_form = dot(&d, &mdp.reward);
    let diff = (q_form - d_form).abs();
    if diff > F::cast(VALUE_IDENTITY_TOL) {
        return Err(Error::IdentityMismatch {
            primal: q_form.to_f64().unwrap_or(f64::NAN),
            visitation: d_form.to_f64().unwrap_or(f64::NAN),
            diff: diff.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(d_form)
}

/// Exact gradient of ρ with respect to per-state softmax logits:
///
/// ∂ρ/∂logit(s,b) = μπ(s) · π(b|s) · (Qπ(s,b) − Vπ(s)),
///
/// where μπ(s) = Σ_a dπ(s,a). Assembled from the exact visitation, exact
/// Q-values, and the softmax Jacobian; the flat layout matches
/// [`Policy::from_logits`].
pub fn exact_policy_gradient<F: Scalar>(mdp: &TabularMdp<F>, logits: &[F]) -> Result<Vec<F>> {
    let policy = Policy::from_logits(mdp.n_states, mdp.n_actions, logits);
    let q = exact_q_values(mdp, &policy)?;
    let d = exact_visitation(mdp, &policy)?;
    let v = policy_value_average(mdp, &policy, &q);
    let mut grad = vec![F::zero(); mdp.n_sa()];
    for s in 0..mdp.n_states {
        let mu: F = (0..mdp.n_actions).map(|a| d[mdp.sa_index(s, a)]).sum();
        for b in 0..mdp.n_actions {
            let z = mdp.sa_index(s, b);
            grad[z] = mu * policy.prob(s, b) * (q[z] - v[s]);
        }
    }
    Ok(grad)
}

/// Iteration budget for [`exact_stationary`]'s power method.
pub const STATIONARY_MAX_ITERS: usize = 10_000;
/// Successive-iterate distance below which power iteration stops early.
pub const STATIONARY_EARLY_EXIT: f64 = 1e-13;
/// Final successive-iterate distance above which the chain is declared
/// non-ergodic.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Stationary state-action distribution of the chain induced by `policy`:
/// power iteration `d ← Pπ*d` from a deterministically tilted near-uniform
/// distribution. The discount factor is ignored.
///
/// The tilt matters: the exactly uniform start is itself a fixed point on
/// symmetric periodic chains (e.g. the two-state swap), which would make the
/// iteration "converge" on a chain with no limit distribution. A tilted
/// start oscillates forever there and still converges on ergodic chains.
///
/// Declares [`Error::NotErgodic`] when the iteration has not settled after
/// [`STATIONARY_MAX_ITERS`] steps (periodic chains oscillate forever — no
/// Cesàro averaging is attempted) or when the limit puts zero mass on some
/// state (reducible chains), since ergodicity requires a unique positive
/// stationary distribution.
pub fn exact_stationary<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>) -> Result<Vec<F>> {
    let n = mdp.n_sa();
    let mut d: Vec<F> = (0..n)
        .map(|z| F::one() + F::cast_usize(z + 1) / F::cast_usize(n))
        .collect();
    let mass: F = d.iter().copied().sum();
    for v in d.iter_mut() {
        *v /= mass;
    }
    let mut residual = F::infinity();
    let mut iters = 0;
    for k in 1..=STATIONARY_MAX_ITERS {
        let next = crate::mdp::policy_adjoint(mdp, policy, &d);
        residual = sup_distance(&next, &d);
        d = next;
        iters = k;
        if residual <= F::cast(STATIONARY_EARLY_EXIT) {
            break;
        }
    }
    if residual > F::cast(STATIONARY_TOL) {
        return Err(Error::NotErgodic {
            residual: residual.to_f64().unwrap_or(f64::NAN),
            iters,
        });
    }
    // Ergodicity means every state carries positive stationary mass; a
    // converged power iteration on a reducible chain does not.
    for s in 0..mdp.n_states {
        let mu: F = (0..mdp.n_actions).map(|a| d[mdp.sa_index(s, a)]).sum();
        if mu <= F::cast(1e-12) {
            return Err(Error::NotErgodic {
                residual: residual.to_f64().unwrap_or(f64::NAN),
                iters,
            });
        }
    }
    Ok(d)
}

/// Constraint family for [`exact_regularized_optimum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizedMode {
    /// Discounted flow constraints `Σ_a d(s,a) − γ(T*d)(s) = (1−γ)μ0(s)`.
    DiscountedVlp,
    /// Stationarity `Σ_a d(s,a) = (T*d)(s)` plus normalization `Σd = 1`.
    Undiscounted,
}

/// Brute-force dimension budget for [`exact_regularized_optimum`].
pub const REG_OPT_MAX_DIM: usize = 64;
const REG_OPT_MAX_ITERS: usize = 300_000;
const REG_OPT_TOL: f64 = 1e-8;
const REG_OPT_FEAS_TOL: f64 = 1e-10;
const PROJECTION_ROUNDS: usize = 50;

/// Projects `x` onto `{x: Ax = b, x ≥ 0}` by alternating least-squares
/// affine projection and clamping at zero, up to [`PROJECTION_ROUNDS`]
/// rounds.
fn project_feasible<F: Scalar>(projector: &AffineProjector<F>, x: &mut [F]) {
    for _ in 0..PROJECTION_ROUNDS {
        projector.project(x);
        let mut clamped = false;
        for v in x.iter_mut() {
            if *v < F::zero() {
                *v = F::zero();
                clamped = true;
            }
        }
        if !clamped && projector.infeasibility(x) <= F::cast(REG_OPT_FEAS_TOL) {
            return;
        }
    }
    // Leave the last projected-and-clamped point; the caller checks
    // infeasibility before declaring convergence.
    projector.project(x);
    for v in x.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Brute-force reference for the regularized optimum
///
///   max_d ⟨d, R⟩ − D_f(d‖d_ref)   subject to the flow constraints of `mode`
///
/// solved by projected gradient ascent on `d` with explicit flow-constraint
/// projection, to feasibility 1e-8 and fixed-point residual 1e-8. Requires a
/// full-support `d_ref` (every state-action pair weighted) and at most
/// [`REG_OPT_MAX_DIM`] state-action pairs. Returns `(d*, value)`.
pub fn exact_regularized_optimum<F: Scalar>(
    mdp: &TabularMdp<F>,
    d_ref: &[F],
    gen: &ConvexGenerator,
    mode: RegularizedMode,
) -> Result<(Vec<F>, F)> {
    let n = mdp.n_sa();
    if n > REG_OPT_MAX_DIM {
        return Err(Error::BudgetExceeded { what: "regularized-optimum dimension", limit: REG_OPT_MAX_DIM, got: n });
    }
    if d_ref.len() != n {
        return Err(Error::ShapeMismatch { what: "reference weights", expected: n, got: d_ref.len() });
    }
    if d_ref.iter().any(|v| *v <= F::zero()) {
        return Err(Error::DomainError(
            "regularized-optimum oracle needs full-support reference weights".to_string(),
        ));
    }

    // Build the affine constraint system Ad = b.
    let (a, b, mut d) = match mode {
        RegularizedMode::DiscountedVlp => {
            if mdp.is_undiscounted() {
                return Err(Error::UndiscountedUnsupported);
            }
            let mut a = DenseMatrix::zeros(mdp.n_states, n);
            for s in 0..mdp.n_states {
                for act in 0..mdp.n_actions {
                    a[(s, mdp.sa_index(s, act))] += F::one();
                }
                for sp in 0..mdp.n_states {
                    for act in 0..mdp.n_actions {
                        a[(s, mdp.sa_index(sp, act))] -= mdp.discount * mdp.transition_prob(sp, act, s);
                    }
                }
            }
            let b: Vec<F> =
                mdp.initial_dist.iter().map(|v| (F::one() - mdp.discount) * *v).collect();
            let init = exact_visitation(mdp, &Policy::uniform(mdp.n_states, mdp.n_actions))?;
            (a, b, init)
        }
        RegularizedMode::Undiscounted => {
            if !mdp.is_undiscounted() {
                return Err(Error::DomainError(
                    "undiscounted regularized optimum needs discount = 1".to_string(),
                ));
            }
            // The n_states stationarity rows sum to zero, so the last one is
            // dropped in favor of the normalization row.
            let mut a = DenseMatrix::zeros(mdp.n_states, n);
            for s in 0..mdp.n_states.saturating_sub(1) {
                for act in 0..mdp.n_actions {
                    a[(s, mdp.sa_index(s, act))] += F::one();
                }
                for sp in 0..mdp.n_states {
                    for act in 0..mdp.n_actions {
                        a[(s, mdp.sa_index(sp, act))] -= mdp.transition_prob(sp, act, s);
                    }
                }
            }
            for z in 0..n {
                a[(mdp.n_states - 1, z)] = F::one();
            }
            let mut b = vec![F::zero(); mdp.n_states];
            b[mdp.n_states - 1] = F::one();
            let init = exact_stationary(mdp, &Policy::uniform(mdp.n_states, mdp.n_actions))?;
            (a, b, init)
        }
    };
    let projector = AffineProjector::new(a, b)?;
    project_feasible(&projector, &mut d);

    let objective = |d: &[F]| -> Result<F> {
        Ok(dot(d, &mdp.reward) - f_divergence(gen, d, d_ref)?)
    };
    // Ascent gradient: R − f'(d/d_ref); the KL derivative gets a floor so a
    // clamped-to-zero coordinate produces a large finite push back inward.
    let gradient = |d: &[F]| -> Vec<F> {
        d.iter()
            .zip(d_ref)
            .zip(&mdp.reward)
            .map(|((di, ri), rew)| {
                let ratio = (*di / *ri).max(F::cast(1e-12));
                *rew - gen.derivative(ratio)
            })
            .collect()
    };

    // Step size from the divergence curvature f''/d_ref; halved whenever a
    // step fails to improve the (concave) objective.
    let d_ref_min = d_ref.iter().fold(F::infinity(), |m, v| m.min(*v));
    let curvature_guess = match gen {
        ConvexGenerator::Kl => F::cast(10.0), // f''(x) = 1/x, sized for ratios ≥ 0.1
        _ => F::one(),
    };
    let mut eta = F::cast(0.5) * d_ref_min / curvature_guess;
    let tol = F::cast(REG_OPT_TOL);
    let mut value = objective(&d)?;

    for _ in 0..REG_OPT_MAX_ITERS {
        let g = gradient(&d);
        let mut cand: Vec<F> = d.iter().zip(&g).map(|(di, gi)| *di + eta * *gi).collect();
        project_feasible(&projector, &mut cand);
        let cand_value = objective(&cand)?;
        if cand_value < value - F::cast(1e-14) {
            eta *= F::cast(0.5);
            if eta < F::cast(1e-30) {
                break;
            }
            continue;
        }
        let residual = sup_distance(&cand, &d) / eta;
        d = cand;
        value = cand_value;
        if residual < tol && projector.infeasibility(&d) <= F::cast(REG_OPT_FEAS_TOL) {
            return Ok((d, value));
        }
    }
    Err(Error::Nonconvergence {
        context: "exact_regularized_optimum projected ascent",
        iters: REG_OPT_MAX_ITERS,
        residual: f64::NAN,
    })
}
