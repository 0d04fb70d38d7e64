//! Discounted (γ<1) off-policy evaluation from the linear-programming view
//! of policy value.
//!
//! All estimators here work from the saddle-point (or dual) form of
//!
//! ```text
//!   ρ(π) = min_Q max_{ζ≥0} (1−γ)·E_{μ0,π}[Q] + E_{d^D}[ ζ·(h + γPπQ − Q) ] − E_{d^D}[f(ζ)]
//! ```
//!
//! with `h` and `f` chosen per mode:
//!
//! | mode       | h | f        | value reported              |
//! |------------|---|----------|-----------------------------|
//! | `Reward`   | R | absent   | L(Q̂, ζ̂)                    |
//! | `Zero`     | 0 | absent   | E_{d^D}[ζ̂·R]                |
//! | `FDiv(f)`  | 0 | f        | E_{d^D}[ζ̂·R]                |
//!
//! `dualdice_dual` eliminates the inner maximization of the `FDiv` mode in
//! closed form through the conjugate f*, leaving the unconstrained convex
//! minimization `min_Q (1−γ)E_{μ0,π}[Q] + E_{d^D}[f*(γPπQ − Q)]`, from whose
//! minimizer the density ratio is read off as ζ̂ = f*′(γPπQ̂ − Q̂). For
//! f = ½x² the dual is an exact quadratic and admits a direct linear solve.
//!
//! With an `Exact`-mode dataset every expectation is a finite weighted sum
//! and the backup `PπQ` is applied exactly, so estimates are limited only by
//! solver accuracy. `Sampled` datasets replace the outer expectations with
//! empirical sums and the backup with the single sampled next state; for the
//! nonlinear conjugate objectives this incurs the well-known
//! conditional-expectation bias, which is deliberate — the exact mode exists
//! precisely to show it.

use crate::convex::ConvexGenerator;
use crate::dataset::{DatasetMode, OfflineDataset, SampleTransition};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, DenseMatrix};
use crate::mdp::{policy_adjoint, policy_forward, Policy, TabularMdp};
use crate::oracles::discounted_operator_matrix;
use crate::scalar::{dot, Scalar};
use crate::solver::{solve_min, solve_saddle, SolveReport, SolverConfig};

/// Coverage threshold: the target's visitation must not put more than this
/// much mass anywhere the dataset has less.
pub const COVERAGE_EPSILON: f64 = 1e-8;

/// The `h` term of the evaluation Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub enum HMode {
    /// h = R: the Lagrangian itself estimates ρ(π) and is doubly robust.
    Reward,
    /// h = 0: the saddle pins ζ̂ to the density ratio; value read off as
    /// E_{d^D}[ζ̂·R].
    Zero,
    /// h = 0 plus an f-divergence penalty −E_{d^D}[f(ζ)].
    FDiv(ConvexGenerator),
}

impl HMode {
    pub fn method_name(&self) -> String {
        match self {
            HMode::Reward => "lagrangian:reward".to_string(),
            HMode::Zero => "lagrangian:zero".to_string(),
            HMode::FDiv(gen) => format!("lagrangian:fdiv:{gen}"),
        }
    }
}

/// Output of an evaluation run.
#[derive(Debug, Clone)]
pub struct EvalResult<F> {
    pub method: String,
    /// ρ̂(π).
    pub value_estimate: F,
    pub q_table: Vec<F>,
    /// ζ̂ = estimated d^π/d^D, nonnegative by construction.
    pub zeta_table: Vec<F>,
    pub report: SolveReport<F>,
}

pub(crate) fn require_discounted<F: Scalar>(mdp: &TabularMdp<F>) -> Result<()> {
    if mdp.is_undiscounted() {
        return Err(Error::UndiscountedUnsupported);
    }
    Ok(())
}

pub(crate) fn require_coverage<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
) -> Result<()> {
    let violations = dataset.coverage_check(mdp, target, COVERAGE_EPSILON)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::CoverageError(violations))
    }
}

/// ρ̂ = E_{d^D}[ζ·R] — the change-of-variables importance estimate at a
/// given ratio table.
pub fn value_from_zeta<F: Scalar>(
    dataset: &OfflineDataset<F>,
    mdp: &TabularMdp<F>,
    zeta_table: &[F],
) -> F {
    assert_eq!(zeta_table.len(), mdp.n_sa(), "zeta table has wrong length");
    let mut total = F::zero();
    for z in 0..mdp.n_sa() {
        total += dataset.weights[z] * zeta_table[z] * mdp.reward[z];
    }
    total
}

/// The reward-mode Lagrangian evaluated at supplied tables — no
/// optimization. Either argument being exact makes the output exact (the
/// doubly robust property): at Q = Qπ the residual term vanishes, at
/// ζ = dπ/d^D the Q-terms telescope through the flow constraint.
pub fn doubly_robust_eval<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    q_table: &[F],
    zeta_table: &[F],
) -> F {
    assert!(!mdp.is_undiscounted(), "doubly robust evaluation needs discounting");
    assert_eq!(q_table.len(), mdp.n_sa());
    assert_eq!(zeta_table.len(), mdp.n_sa());
    let nu = mdp.initial_sa_dist(target);
    let lead = (F::one() - mdp.discount) * dot(&nu, q_table);
    match dataset.mode {
        DatasetMode::Exact => {
            let backup = policy_forward(mdp, target, q_table);
            let mut correction = F::zero();
            for z in 0..mdp.n_sa() {
                let residual = mdp.reward[z] + mdp.discount * backup[z] - q_table[z];
                correction += dataset.weights[z] * zeta_table[z] * residual;
            }
            lead + correction
        }
        DatasetMode::Sampled => {
            let samples = dataset.samples.as_ref().expect("sampled dataset has samples");
            let inv_n = F::one() / F::cast_usize(samples.len());
            let mut correction = F::zero();
            for t in samples {
                let z = mdp.sa_index(t.s, t.a);
                let backup = sampled_backup(mdp, target, q_table, t);
                correction += inv_n * zeta_table[z] * (t.reward + mdp.discount * backup - q_table[z]);
            }
            lead + correction
        }
    }
}

/// `Σ_{a'} π(a'|s′) Q(s′,a')` at the sampled next state.
fn sampled_backup<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    q: &[F],
    t: &SampleTransition<F>,
) -> F {
    let mut v = F::zero();
    for a in 0..mdp.n_actions {
        v += target.prob(t.next_s, a) * q[mdp.sa_index(t.next_s, a)];
    }
    v
}

/// Lagrangian contributions for one candidate pair (`q`, `zeta`) under an
/// exact dataset: objective pieces and both gradients.
struct ExactLagrangianParts<F> {
    residual_term: F,
    grad_q_flow: Vec<F>,
    residual: Vec<F>,
}

fn exact_lagrangian_parts<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    weights: &[F],
    include_reward: bool,
    q: &[F],
    zeta: &[F],
) -> ExactLagrangianParts<F> {
    let backup = policy_forward(mdp, target, q);
    let n_sa = mdp.n_sa();
    let mut residual = vec![F::zero(); n_sa];
    let mut mass = vec![F::zero(); n_sa];
    let mut residual_term = F::zero();
    for z in 0..n_sa {
        let h = if include_reward { mdp.reward[z] } else { F::zero() };
        residual[z] = h + mdp.discount * backup[z] - q[z];
        mass[z] = weights[z] * zeta[z];
        residual_term += mass[z] * residual[z];
    }
    // ∂/∂Q of ⟨mass, h + γPπQ − Q⟩ = γPπ*mass − mass.
    let mass_backup = policy_adjoint(mdp, target, &mass);
    let mut grad_q_flow = vec![F::zero(); n_sa];
    for z in 0..n_sa {
        grad_q_flow[z] = mdp.discount * mass_backup[z] - mass[z];
    }
    ExactLagrangianParts { residual_term, grad_q_flow, residual }
}

/// Lagrangian OPE: simultaneous gradient descent-ascent on (Q, w) with
/// ζ = exp(w), from Q = 0, w = 0.
pub fn lagrangian_ope<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    h_mode: &HMode,
    config: &SolverConfig,
) -> Result<EvalResult<F>> {
    require_discounted(mdp)?;
    require_coverage(mdp, target, dataset)?;
    let n_sa = mdp.n_sa();
    let nu = mdp.initial_sa_dist(target);
    let one_minus_gamma = F::one() - mdp.discount;
    let include_reward = matches!(h_mode, HMode::Reward);
    let fgen = match h_mode {
        HMode::FDiv(gen) => Some(*gen),
        _ => None,
    };

    let objective = |q: &[F], w: &[F]| -> (F, Vec<F>, Vec<F>) {
        let zeta: Vec<F> = w.iter().map(|wi| wi.exp()).collect();
        let (mut value, mut grad_q, mut grad_w) = match dataset.mode {
            DatasetMode::Exact => {
                let parts =
                    exact_lagrangian_parts(mdp, target, &dataset.weights, include_reward, q, &zeta);
                let grad_w: Vec<F> = (0..n_sa)
                    .map(|z| dataset.weights[z] * zeta[z] * parts.residual[z])
                    .collect();
                (parts.residual_term, parts.grad_q_flow, grad_w)
            }
            DatasetMode::Sampled => {
                let samples = dataset.samples.as_ref().expect("sampled dataset has samples");
                let inv_n = F::one() / F::cast_usize(samples.len());
                let mut value = F::zero();
                let mut grad_q = vec![F::zero(); n_sa];
                let mut grad_w = vec![F::zero(); n_sa];
                for t in samples {
                    let z = mdp.sa_index(t.s, t.a);
                    let h = if include_reward { t.reward } else { F::zero() };
                    let backup = sampled_backup(mdp, target, q, t);
                    let residual = h + mdp.discount * backup - q[z];
                    let scaled = inv_n * zeta[z];
                    value += scaled * residual;
                    grad_w[z] += scaled * residual;
                    grad_q[z] -= scaled;
                    for a in 0..mdp.n_actions {
                        grad_q[mdp.sa_index(t.next_s, a)] +=
                            scaled * mdp.discount * target.prob(t.next_s, a);
                    }
                }
                (value, grad_q, grad_w)
            }
        };
        for z in 0..n_sa {
            value += one_minus_gamma * nu[z] * q[z];
            grad_q[z] += one_minus_gamma * nu[z];
        }
        if let Some(gen) = &fgen {
            for z in 0..n_sa {
                value -= dataset.weights[z] * gen.eval(zeta[z]);
                grad_w[z] -= dataset.weights[z] * gen.derivative(zeta[z]) * zeta[z];
            }
        }
        (value, grad_q, grad_w)
    };

    let (q_hat, w_hat, report) =
        solve_saddle(objective, vec![F::zero(); n_sa], vec![F::zero(); n_sa], config)?;
    let zeta_hat: Vec<F> = w_hat.iter().map(|wi| wi.exp()).collect();
    let value_estimate = match h_mode {
        HMode::Reward => objective(&q_hat, &w_hat).0,
        HMode::Zero | HMode::FDiv(_) => value_from_zeta(dataset, mdp, &zeta_hat),
    };
    Ok(EvalResult {
        method: h_mode.method_name(),
        value_estimate,
        q_table: q_hat,
        zeta_table: zeta_hat,
        report,
    })
}

/// The conjugate dual of the f-divergence Lagrangian: an unconstrained
/// convex minimization over Q alone. With `closed_form` (½x² only) the
/// first-order condition `(I−γPπ)ᵀ diag(d^D) (I−γPπ) Q = −(1−γ)ν` is solved
/// directly.
pub fn dualdice_dual<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    gen: &ConvexGenerator,
    config: &SolverConfig,
    closed_form: bool,
) -> Result<EvalResult<F>> {
    require_discounted(mdp)?;
    require_coverage(mdp, target, dataset)?;
    let n_sa = mdp.n_sa();
    let nu = mdp.initial_sa_dist(target);
    let one_minus_gamma = F::one() - mdp.discount;
    let method = format!("dualdice:{gen}{}", if closed_form { ":closed" } else { "" });

    let (q_hat, report) = if closed_form {
        if !matches!(gen, ConvexGenerator::Square) {
            return Err(Error::ClosedFormUnsupported { generator: gen.name().to_string() });
        }
        // A = I − γPπ; minimize (1−γ)νᵀQ + ½‖diag(d^D)^{1/2} A Q‖² by
        // solving the normal equations AᵀDA Q = −(1−γ)ν.
        let a = discounted_operator_matrix(mdp, target, false);
        let mut normal = DenseMatrix::zeros(n_sa, n_sa);
        for i in 0..n_sa {
            let di = dataset.weights[i];
            if di == F::zero() {
                continue;
            }
            for j in 0..n_sa {
                let aij = a[(i, j)];
                if aij == F::zero() {
                    continue;
                }
                for k in 0..n_sa {
                    normal[(j, k)] += aij * di * a[(i, k)];
                }
            }
        }
        let rhs: Vec<F> = nu.iter().map(|v| -one_minus_gamma * *v).collect();
        let q = lu_solve(normal, &rhs)?;
        let report = SolveReport {
            converged: true,
            iters_used: 0,
            final_grad_norm: F::zero(),
            objective_value: F::zero(),
            trajectory: Vec::new(),
        };
        (q, report)
    } else {
        let objective = |q: &[F]| -> (F, Vec<F>) {
            let mut value = F::zero();
            let mut grad = vec![F::zero(); n_sa];
            match dataset.mode {
                DatasetMode::Exact => {
                    let backup = policy_forward(mdp, target, q);
                    let mut outer = vec![F::zero(); n_sa];
                    for z in 0..n_sa {
                        let residual = mdp.discount * backup[z] - q[z];
                        value += dataset.weights[z] * gen.conjugate(residual);
                        outer[z] = dataset.weights[z] * gen.conjugate_derivative(residual);
                    }
                    let outer_backup = policy_adjoint(mdp, target, &outer);
                    for z in 0..n_sa {
                        grad[z] = mdp.discount * outer_backup[z] - outer[z];
                    }
                }
                DatasetMode::Sampled => {
                    let samples = dataset.samples.as_ref().expect("sampled dataset has samples");
                    let inv_n = F::one() / F::cast_usize(samples.len());
                    for t in samples {
                        let z = mdp.sa_index(t.s, t.a);
                        let backup = sampled_backup(mdp, target, q, t);
                        let residual = mdp.discount * backup - q[z];
                        value += inv_n * gen.conjugate(residual);
                        let outer = inv_n * gen.conjugate_derivative(residual);
                        grad[z] -= outer;
                        for a in 0..mdp.n_actions {
                            grad[mdp.sa_index(t.next_s, a)] +=
                                outer * mdp.discount * target.prob(t.next_s, a);
                        }
                    }
                }
            }
            for z in 0..n_sa {
                value += one_minus_gamma * nu[z] * q[z];
                grad[z] += one_minus_gamma * nu[z];
            }
            (value, grad)
        };
        solve_min(objective, vec![F::zero(); n_sa], config)?
    };

    // ζ̂ = f*′(γPπQ̂ − Q̂) with the exact backup (the operator is model-known).
    let backup = policy_forward(mdp, target, &q_hat);
    let zeta_hat: Vec<F> = (0..n_sa)
        .map(|z| gen.conjugate_derivative(mdp.discount * backup[z] - q_hat[z]))
        .collect();
    let value_estimate = value_from_zeta(dataset, mdp, &zeta_hat);
    Ok(EvalResult { method, value_estimate, q_table: q_hat, zeta_table: zeta_hat, report })
}

/// Objective value of the DualDICE dual at a given Q (exact dataset) — the
/// quantity strong duality matches to the Lagrangian saddle value and to
/// −D_f(dπ‖d^D).
pub fn dualdice_objective_value<F: Scalar>(
    mdp: &TabularMdp<F>,
    target: &Policy<F>,
    dataset: &OfflineDataset<F>,
    gen: &ConvexGenerator,
    q: &[F],
) -> F {
    let nu = mdp.initial_sa_dist(target);
    let backup = policy_forward(mdp, target, q);
    let one_minus_gamma = F::one() - mdp.discount;
    let mut value = one_minus_gamma * dot(&nu, q);
    for z in 0..mdp.n_sa() {
        value += dataset.weights[z] * gen.conjugate(mdp.discount * backup[z] - q[z]);
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::f_divergence;
    use crate::dataset::DatasetMode;
    use crate::mdp::{random_mdp, random_policy, swap_chain};
    use crate::oracles::{exact_q_values, exact_value, exact_visitation};
    use crate::scalar::sup_distance;
    use crate::solver::StepDecay;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_state_mdp() -> TabularMdp<f64> {
        TabularMdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0], 0.5).unwrap()
    }

    fn exact_dataset(mdp: &TabularMdp<f64>, behavior: &Policy<f64>) -> OfflineDataset<f64> {
        OfflineDataset::from_behavior(mdp, behavior, DatasetMode::Exact, None, 0).unwrap()
    }

    /// Ratio oracle dπ/d^D.
    fn oracle_ratio(
        mdp: &TabularMdp<f64>,
        target: &Policy<f64>,
        dataset: &OfflineDataset<f64>,
    ) -> Vec<f64> {
        let d = exact_visitation(mdp, target).unwrap();
        d.iter().zip(&dataset.weights).map(|(a, b)| a / b).collect()
    }

    /// Recipe for the bilinear (Reward/Zero) saddles: constant steps scaled
    /// as 1/√K with averaging, and the max-player (w, with ζ=e^w) stepped
    /// 1000× slower than Q. Symmetric steps leave the averaged iterates at
    /// the orbit center, which Jensen's inequality on e^w biases away from
    /// the saddle; slowing w shrinks its swing and with it that bias.
    fn bilinear_config(max_iters: usize) -> SolverConfig {
        let step = (500.0 / max_iters as f64).sqrt();
        SolverConfig {
            step_size_min: step,
            step_size_max: step * 1e-3,
            max_iters,
            grad_tol: 1e-12,
            step_decay: StepDecay::None,
            seed: 0,
            averaging: true,
        }
    }

    /// Raw-iterate config for the strongly damped problems (FDiv mode,
    /// DualDICE descent), whose plain iterates converge linearly.
    fn damped_config(step: f64, max_iters: usize) -> SolverConfig {
        SolverConfig {
            step_size_min: step,
            step_size_max: step,
            max_iters,
            grad_tol: 1e-10,
            step_decay: StepDecay::None,
            seed: 0,
            averaging: false,
        }
    }

    #[test]
    fn single_state_all_lagrangian_modes() {
        let mdp = single_state_mdp();
        let pi = Policy::uniform(1, 1);
        let ds = exact_dataset(&mdp, &pi);
        for h_mode in [HMode::Reward, HMode::Zero, HMode::FDiv(ConvexGenerator::Square)] {
            let cfg = match h_mode {
                HMode::FDiv(_) => damped_config(0.5, 100_000),
                _ => bilinear_config(200_000),
            };
            let out = lagrangian_ope(&mdp, &pi, &ds, &h_mode, &cfg).unwrap();
            assert!(
                (out.value_estimate - 1.0).abs() < 1e-4,
                "{}: value {}",
                out.method,
                out.value_estimate
            );
            assert!((out.zeta_table[0] - 1.0).abs() < 1e-3, "{}: ζ̂ {:?}", out.method, out.zeta_table);
        }
    }

    #[test]
    fn single_state_dualdice_both_generators() {
        let mdp = single_state_mdp();
        let pi = Policy::uniform(1, 1);
        let ds = exact_dataset(&mdp, &pi);
        for gen in [ConvexGenerator::Square, ConvexGenerator::Kl] {
            let out = dualdice_dual(&mdp, &pi, &ds, &gen, &damped_config(0.5, 200_000), false).unwrap();
            assert!((out.value_estimate - 1.0).abs() < 1e-4, "{}: {}", out.method, out.value_estimate);
            assert!((out.zeta_table[0] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn dualdice_single_state_closed_form_matches_hand_solution() {
        // min (1−γ)Q + ½(γQ−Q)² = 0.5Q + 0.125Q² → Q* = −2, residual 1.
        let mdp = single_state_mdp();
        let pi = Policy::uniform(1, 1);
        let ds = exact_dataset(&mdp, &pi);
        let out = dualdice_dual(&mdp, &pi, &ds, &ConvexGenerator::Square, &damped_config(0.5, 10), true)
            .unwrap();
        assert!((out.q_table[0] - (-2.0)).abs() < 1e-12);
        assert!((out.zeta_table[0] - 1.0).abs() < 1e-12);
        let dual_value =
            dualdice_objective_value(&mdp, &pi, &ds, &ConvexGenerator::Square, &out.q_table);
        assert!((dual_value - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_mdp_evaluates_to_zero() {
        let mut mdp = random_mdp::<f64>(3, 2, 0.7, 2);
        mdp.reward.iter_mut().for_each(|r| *r = 0.0);
        let pi = Policy::uniform(3, 2);
        let ds = exact_dataset(&mdp, &pi);
        let out =
            dualdice_dual(&mdp, &pi, &ds, &ConvexGenerator::Square, &damped_config(0.5, 10), true)
                .unwrap();
        assert_eq!(out.value_estimate, 0.0);
    }

    #[test]
    fn swap_chain_zero_mode_recovers_unit_ratio() {
        // Behavior is the (unique, hence uniform and deterministic) policy of
        // the one-action swap chain, so dπ = d^D and the ratio is 1.
        let mdp = swap_chain::<f64>(0.5);
        let pi = Policy::uniform(2, 1);
        let ds = exact_dataset(&mdp, &pi);
        let out = lagrangian_ope(&mdp, &pi, &ds, &HMode::Zero, &bilinear_config(200_000)).unwrap();
        let ratio = oracle_ratio(&mdp, &pi, &ds);
        assert!(sup_distance(&out.zeta_table, &ratio) < 1e-3, "ζ̂ {:?}", out.zeta_table);
    }

    #[test]
    fn fdiv_square_seed0_matches_exact_value() {
        let mdp = random_mdp::<f64>(4, 2, 0.5, 0);
        let behavior = Policy::uniform(4, 2);
        let target = random_policy::<f64>(4, 2, 1);
        let ds = exact_dataset(&mdp, &behavior);
        let out = lagrangian_ope(
            &mdp,
            &target,
            &ds,
            &HMode::FDiv(ConvexGenerator::Square),
            &damped_config(0.5, 200_000),
        )
        .unwrap();
        let oracle = exact_value(&mdp, &target).unwrap();
        assert!(
            (out.value_estimate - oracle).abs() < 1e-3,
            "value {} vs oracle {}",
            out.value_estimate,
            oracle
        );
    }

    #[test]
    fn dualdice_closed_form_and_descent_agree_with_ratio_oracle() {
        let mdp = random_mdp::<f64>(4, 2, 0.5, 0);
        let behavior = Policy::uniform(4, 2);
        let target = random_policy::<f64>(4, 2, 1);
        let ds = exact_dataset(&mdp, &behavior);
        let ratio = oracle_ratio(&mdp, &target, &ds);

        let closed =
            dualdice_dual(&mdp, &target, &ds, &ConvexGenerator::Square, &damped_config(0.5, 10), true)
                .unwrap();
        assert!(sup_distance(&closed.zeta_table, &ratio) < 1e-8);

        let descent = dualdice_dual(
            &mdp,
            &target,
            &ds,
            &ConvexGenerator::Square,
            &damped_config(0.5, 400_000),
            false,
        )
        .unwrap();
        assert!(sup_distance(&descent.zeta_table, &closed.zeta_table) < 1e-4);
        assert!((descent.value_estimate - closed.value_estimate).abs() < 1e-4);
    }

    #[test]
    fn ratio_recovery_across_paths() {
        for seed in [0u64, 3, 7] {
            let mdp = random_mdp::<f64>(4, 2, 0.5, seed);
            let behavior = Policy::uniform(4, 2);
            let target = random_policy::<f64>(4, 2, seed + 40);
            let ds = exact_dataset(&mdp, &behavior);
            let ratio = oracle_ratio(&mdp, &target, &ds);

            let closed = dualdice_dual(
                &mdp,
                &target,
                &ds,
                &ConvexGenerator::Square,
                &damped_config(0.5, 10),
                true,
            )
            .unwrap();
            assert!(sup_distance(&closed.zeta_table, &ratio) < 1e-8, "closed, seed {seed}");

            let descent = dualdice_dual(
                &mdp,
                &target,
                &ds,
                &ConvexGenerator::Square,
                &damped_config(0.5, 400_000),
                false,
            )
            .unwrap();
            assert!(sup_distance(&descent.zeta_table, &ratio) < 1e-2, "descent, seed {seed}");

            let fdiv = lagrangian_ope(
                &mdp,
                &target,
                &ds,
                &HMode::FDiv(ConvexGenerator::Square),
                &damped_config(0.5, 400_000),
            )
            .unwrap();
            assert!(sup_distance(&fdiv.zeta_table, &ratio) < 1e-2, "fdiv, seed {seed}");
        }
    }

    #[test]
    fn doubly_robust_is_exact_in_either_slot() {
        for seed in 0..20u64 {
            let mdp = random_mdp::<f64>(4, 2, 0.8, seed);
            let behavior = Policy::uniform(4, 2);
            let target = random_policy::<f64>(4, 2, seed + 100);
            let ds = exact_dataset(&mdp, &behavior);
            let oracle = exact_value(&mdp, &target).unwrap();
            let q_star = exact_q_values(&mdp, &target).unwrap();
            let ratio = oracle_ratio(&mdp, &target, &ds);

            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let random_zeta: Vec<f64> = (0..mdp.n_sa()).map(|_| rng.gen::<f64>() * 3.0).collect();
            let random_q: Vec<f64> = (0..mdp.n_sa()).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();

            let with_q_star = doubly_robust_eval(&mdp, &target, &ds, &q_star, &random_zeta);
            assert!((with_q_star - oracle).abs() < 1e-9, "seed {seed}: Q* slot");
            let with_zeta_star = doubly_robust_eval(&mdp, &target, &ds, &random_q, &ratio);
            assert!((with_zeta_star - oracle).abs() < 1e-9, "seed {seed}: ζ* slot");
        }
    }

    #[test]
    fn doubly_robust_at_zero_tables_is_zero() {
        let mdp = random_mdp::<f64>(3, 2, 0.9, 4);
        let pi = Policy::uniform(3, 2);
        let ds = exact_dataset(&mdp, &pi);
        let zeros = vec![0.0f64; mdp.n_sa()];
        assert_eq!(doubly_robust_eval(&mdp, &pi, &ds, &zeros, &zeros), 0.0);
    }

    #[test]
    fn value_from_zeta_identities() {
        let mdp = random_mdp::<f64>(4, 2, 0.75, 6);
        let behavior = Policy::uniform(4, 2);
        let target = random_policy::<f64>(4, 2, 60);
        let ds = exact_dataset(&mdp, &behavior);

        let ones = vec![1.0f64; mdp.n_sa()];
        let expected: f64 =
            ds.weights.iter().zip(&mdp.reward).map(|(w, r)| w * r).sum();
        assert!((value_from_zeta(&ds, &mdp, &ones) - expected).abs() < 1e-15);

        let ratio = oracle_ratio(&mdp, &target, &ds);
        let oracle = exact_value(&mdp, &target).unwrap();
        assert!((value_from_zeta(&ds, &mdp, &ratio) - oracle).abs() < 1e-10);

        let zeros = vec![0.0f64; mdp.n_sa()];
        assert_eq!(value_from_zeta(&ds, &mdp, &zeros), 0.0);
    }

    #[test]
    fn strong_duality_triple() {
        let mdp = random_mdp::<f64>(4, 2, 0.5, 0);
        let behavior = Policy::uniform(4, 2);
        let target = random_policy::<f64>(4, 2, 1);
        let ds = exact_dataset(&mdp, &behavior);
        let gen = ConvexGenerator::Square;

        let d_target = exact_visitation(&mdp, &target).unwrap();
        let oracle = -f_divergence(&gen, &d_target, &ds.weights).unwrap();

        let dual = dualdice_dual(&mdp, &target, &ds, &gen, &damped_config(0.5, 400_000), false).unwrap();
        let dual_value = dualdice_objective_value(&mdp, &target, &ds, &gen, &dual.q_table);

        let saddle =
            lagrangian_ope(&mdp, &target, &ds, &HMode::FDiv(gen), &damped_config(0.5, 400_000))
                .unwrap();
        let saddle_value = saddle.report.objective_value;

        assert!((dual_value - oracle).abs() < 1e-4, "dual {dual_value} vs oracle {oracle}");
        assert!((saddle_value - oracle).abs() < 1e-4, "saddle {saddle_value} vs oracle {oracle}");
        assert!((saddle_value - dual_value).abs() < 1e-4);
    }

    #[test]
    fn coverage_violation_is_surfaced() {
        let mdp = random_mdp::<f64>(2, 2, 0.9, 5);
        let behavior = Policy::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let target = Policy::uniform(2, 2);
        let ds = exact_dataset(&mdp, &behavior);
        let err = lagrangian_ope(&mdp, &target, &ds, &HMode::Zero, &SolverConfig::default());
        assert!(matches!(err, Err(Error::CoverageError(_))));
    }

    #[test]
    fn undiscounted_mdp_is_rejected() {
        let mdp = random_mdp::<f64>(3, 2, 1.0, 8);
        let pi = Policy::uniform(3, 2);
        let ds = exact_dataset(&mdp, &pi);
        assert!(matches!(
            lagrangian_ope(&mdp, &pi, &ds, &HMode::Zero, &SolverConfig::default()),
            Err(Error::UndiscountedUnsupported)
        ));
        assert!(matches!(
            dualdice_dual(&mdp, &pi, &ds, &ConvexGenerator::Square, &SolverConfig::default(), true),
            Err(Error::UndiscountedUnsupported)
        ));
    }

    #[test]
    fn nonconvergence_still_returns_result() {
        let mdp = random_mdp::<f64>(4, 2, 0.5, 0);
        let pi = Policy::uniform(4, 2);
        let ds = exact_dataset(&mdp, &pi);
        let cfg = SolverConfig { max_iters: 10, grad_tol: 1e-14, ..SolverConfig::default() };
        let out = lagrangian_ope(&mdp, &pi, &ds, &HMode::Reward, &cfg).unwrap();
        assert!(!out.report.converged);
        assert!(out.value_estimate.is_finite());
    }

    #[test]
    fn sampled_mode_reward_lagrangian_is_close_with_many_samples() {
        let mdp = random_mdp::<f64>(3, 2, 0.5, 3);
        let behavior = Policy::uniform(3, 2);
        let ds = OfflineDataset::from_behavior(&mdp, &behavior, DatasetMode::Sampled, Some(40_000), 1)
            .unwrap();
        let target = random_policy::<f64>(3, 2, 30);
        let out = lagrangian_ope(&mdp, &target, &ds, &HMode::Reward, &bilinear_config(400_000)).unwrap();
        let oracle = exact_value(&mdp, &target).unwrap();
        assert!(
            (out.value_estimate - oracle).abs() < 0.05,
            "sampled value {} vs oracle {}",
            out.value_estimate,
            oracle
        );
        // The dual path also runs on samples; it is biased, so only finiteness
        // and rough agreement are checked.
        let dual =
            dualdice_dual(&mdp, &target, &ds, &ConvexGenerator::Square, &damped_config(0.3, 100_000), false)
                .unwrap();
        assert!(dual.value_estimate.is_finite());
        assert!((dual.value_estimate - oracle).abs() < 0.2);
    }
}
