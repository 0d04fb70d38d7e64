//! Convex conjugacy toolkit: the generator catalog, f-divergences and their
//! (un)constrained conjugates, mean-normalized softmax weights, and a
//! primal/dual gap checker for composite problems `min_x f(x) + g(Ax)`.
//!
//! The generator catalog and their conjugates `f*(y) = sup_x ⟨x,y⟩ − f(x)`:
//!
//! | generator  | f(x)          | f*(y)            | (f*)'(y)          |
//! |------------|---------------|------------------|-------------------|
//! | square     | ½x²           | ½y²              | y                 |
//! | chisquare  | ½(x−1)²       | y + ½y²          | 1 + y             |
//! | kl         | x·ln x        | exp(y−1)         | exp(y−1)          |
//! | pnorm:p    | |x|^p / p     | |y|^q / q        | sign(y)·|y|^(q−1) |
//!
//! with `1/p + 1/q = 1`, `p > 1`. The KL row is the *unconstrained*
//! conjugate (over all of ℝ₊); restricted to a probability simplex, the KL
//! divergence's conjugate is instead the log-mean-exp
//! `log E_p[exp y]`, exposed through [`divergence_conjugate`] with
//! `constrained = true`. These tabulated forms are cross-checked against a
//! brute-force grid maximization ([`conjugate_grid_oracle`]) in the tests,
//! not trusted on faith.

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, DenseMatrix};
use crate::scalar::{sup_norm, Scalar};
use crate::solver::{solve_min, SolverConfig};

/// Convex generator `f` for an f-divergence `D_f(d‖p) = E_p[f(d/p)]`.
///
/// Each variant carries closed forms for `f`, `f'`, the conjugate `f*`, and
/// `(f*)'`. Values outside the domain of `f` evaluate to `+∞` (proper convex
/// extension), never to garbage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexGenerator {
    /// `f(x) = ½x²` on all of ℝ. NB: `f(1) = ½ ≠ 0`, so this generator's
    /// divergence does not vanish at `d = p`.
    Square,
    /// `f(x) = ½(x−1)²` on all of ℝ; half the χ² divergence, `f(1) = 0`.
    ChiSquare,
    /// `f(x) = x·ln x` on `x ≥ 0` (with `f(0) = 0`); the KL generator.
    Kl,
    /// `f(x) = |x|^p/p` for `p > 1`.
    PNorm(f64),
}

impl ConvexGenerator {
    /// Builds a p-norm generator, rejecting `p ≤ 1` (the conjugate exponent
    /// `q = p/(p−1)` would not exist).
    pub fn pnorm(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::DomainError(format!("pnorm generator needs p > 1, got {p}")));
        }
        Ok(ConvexGenerator::PNorm(p))
    }

    /// Parses `"square" | "chisquare" | "kl" | "pnorm:<p>"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(ConvexGenerator::Square),
            "chisquare" => Ok(ConvexGenerator::ChiSquare),
            "kl" => Ok(ConvexGenerator::Kl),
            other => {
                if let Some(p_str) = other.strip_prefix("pnorm:") {
                    let p: f64 = p_str
                        .parse()
                        .map_err(|_| Error::DomainError(format!("bad pnorm exponent {p_str:?}")))?;
                    Self::pnorm(p)
                } else {
                    Err(Error::DomainError(format!("unknown generator {other:?}")))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ConvexGenerator::Square => "square".to_string(),
            ConvexGenerator::ChiSquare => "chisquare".to_string(),
            ConvexGenerator::Kl => "kl".to_string(),
            ConvexGenerator::PNorm(p) => format!("pnorm:{p}"),
        }
    }

    /// Human-readable domain restriction of `f`.
    pub fn domain_note(&self) -> &'static str {
        match self {
            ConvexGenerator::Square => "all of R",
            ConvexGenerator::ChiSquare => "all of R",
            ConvexGenerator::Kl => "x >= 0 (f(0) = 0 by continuity)",
            ConvexGenerator::PNorm(_) => "all of R, p > 1",
        }
    }

    /// `f(x)`, `+∞` outside the domain.
    pub fn eval<F: Scalar>(&self, x: F) -> F {
        let half = F::cast(0.5);
        match self {
            ConvexGenerator::Square => half * x * x,
            ConvexGenerator::ChiSquare => {
                let d = x - F::one();
                half * d * d
            }
            ConvexGenerator::Kl => {
                if x < F::zero() {
                    F::infinity()
                } else if x == F::zero() {
                    F::zero()
                } else {
                    x * x.ln()
                }
            }
            ConvexGenerator::PNorm(p) => {
                let p = F::cast(*p);
                x.abs().powf(p) / p
            }
        }
    }

    /// `f'(x)`; for KL this is `ln x + 1` (−∞ at 0, NaN-free).
    pub fn derivative<F: Scalar>(&self, x: F) -> F {
        match self {
            ConvexGenerator::Square => x,
            ConvexGenerator::ChiSquare => x - F::one(),
            ConvexGenerator::Kl => {
                if x <= F::zero() {
                    F::neg_infinity()
                } else {
                    x.ln() + F::one()
                }
            }
            ConvexGenerator::PNorm(p) => {
                let p = F::cast(*p);
                x.signum() * x.abs().powf(p - F::one())
            }
        }
    }

    /// Conjugate `f*(y)`; finite for every real `y` for all catalog members.
    pub fn conjugate<F: Scalar>(&self, y: F) -> F {
        let half = F::cast(0.5);
        match self {
            ConvexGenerator::Square => half * y * y,
            ConvexGenerator::ChiSquare => y + half * y * y,
            ConvexGenerator::Kl => (y - F::one()).exp(),
            ConvexGenerator::PNorm(p) => {
                let q = F::cast(conjugate_exponent(*p));
                y.abs().powf(q) / q
            }
        }
    }

    /// `(f*)'(y)`, the maximizer `x*(y)` of `⟨x,y⟩ − f(x)`; the density
    /// recovery map of every dual estimator in this crate.
    pub fn conjugate_derivative<F: Scalar>(&self, y: F) -> F {
        match self {
            ConvexGenerator::Square => y,
            ConvexGenerator::ChiSquare => F::one() + y,
            ConvexGenerator::Kl => (y - F::one()).exp(),
            ConvexGenerator::PNorm(p) => {
                let q = F::cast(conjugate_exponent(*p));
                y.signum() * y.abs().powf(q - F::one())
            }
        }
    }
}

impl std::fmt::Display for ConvexGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `f*(y)` for a single point — the tabulated closed form.
pub fn conjugate_eval<F: Scalar>(gen: &ConvexGenerator, y: F) -> F {
    gen.conjugate(y)
}

/// Brute-force conjugate: `max_i x_i·y − f(x_i)` over an inclusive uniform
/// grid of `n_grid ≥ 1000` points on `[x_lo, x_hi]`. This is the independent
/// oracle the closed forms are verified against; accuracy is limited by the
/// grid pitchup to the local curvature of `f`.
pub fn conjugate_grid_oracle<F: Scalar>(
    gen: &ConvexGenerator,
    y: F,
    x_lo: F,
    x_hi: F,
    n_grid: usize,
) -> Result<F> {
    if n_grid < 1000 {
        return Err(Error::DomainError(format!("grid oracle needs n_grid >= 1000, got {n_grid}")));
    }
    if !(x_hi > x_lo) {
        return Err(Error::DomainError("grid oracle needs x_hi > x_lo".to_string()));
    }
    let span = x_hi - x_lo;
    let denom = F::cast_usize(n_grid - 1);
    let mut best = F::neg_infinity();
    for i in 0..n_grid {
        let x = x_lo + span * F::cast_usize(i) / denom;
        let candidate = x * y - gen.eval(x);
        // f = +∞ outside its domain makes the candidate −∞; it loses naturally.
        if candidate > best {
            best = candidate;
        }
    }
    Ok(best)
}

/// f-divergence `D_f(d‖p) = Σ_z p(z) · f(d(z)/p(z))`.
///
/// Pairs with `p(z) = 0` and `d(z) = 0` contribute nothing; `p(z) = 0` with
/// `d(z) > 0` is a [`Error::SupportViolation`]. Inputs need not be normalized.
pub fn f_divergence<F: Scalar>(gen: &ConvexGenerator, d: &[F], p: &[F]) -> Result<F> {
    if d.len() != p.len() {
        return Err(Error::ShapeMismatch { what: "f-divergence arguments", expected: p.len(), got: d.len() });
    }
    let mut total = F::zero();
    for (i, (di, pi)) in d.iter().zip(p).enumerate() {
        if *pi == F::zero() {
            if *di != F::zero() {
                return Err(Error::SupportViolation {
                    index: i,
                    reference: 0.0,
                    candidate: di.to_f64().unwrap_or(f64::NAN),
                });
            }
            continue;
        }
        total += *pi * gen.eval(*di / *pi);
    }
    Ok(total)
}

/// Conjugate of the divergence `D_f(·‖p)` evaluated at a function `y`:
///
/// * unconstrained (over all nonnegative measures): `E_p[f*(y)]`;
/// * constrained to the probability simplex (`constrained = true`, KL only):
///   `log E_p[exp y]`, computed with max subtraction.
pub fn divergence_conjugate<F: Scalar>(
    gen: &ConvexGenerator,
    y: &[F],
    p: &[F],
    constrained: bool,
) -> Result<F> {
    if y.len() != p.len() {
        return Err(Error::ShapeMismatch { what: "divergence conjugate arguments", expected: p.len(), got: y.len() });
    }
    if constrained {
        if *gen != ConvexGenerator::Kl {
            return Err(Error::UnsupportedConstrainedGenerator { generator: gen.name() });
        }
        return Ok(log_mean_exp(y, p));
    }
    let mut total = F::zero();
    for (yi, pi) in y.iter().zip(p) {
        if *pi == F::zero() {
            continue;
        }
        total += *pi * gen.conjugate(*yi);
    }
    Ok(total)
}

/// `log Σ_z p(z)·exp(y(z))` with max subtraction over the support of `p`.
pub fn log_mean_exp<F: Scalar>(y: &[F], p: &[F]) -> F {
    debug_assert_eq!(y.len(), p.len());
    let max = y
        .iter()
        .zip(p)
        .filter(|(_, pi)| **pi > F::zero())
        .fold(F::neg_infinity(), |m, (yi, _)| m.max(*yi));
    if !max.is_finite() {
        return F::neg_infinity();
    }
    let mut sum = F::zero();
    for (yi, pi) in y.iter().zip(p) {
        if *pi > F::zero() {
            sum += *pi * (*yi - max).exp();
        }
    }
    max + sum.ln()
}

/// Mean-normalized softmax weights under a base distribution `p`:
/// `w(z) = exp(h(z)) / E_p[exp h]`, so that `E_p[w] = 1` by construction.
/// Computed with max subtraction over the support of `p`.
pub fn softmax_weights<F: Scalar>(h: &[F], p: &[F]) -> Vec<F> {
    debug_assert_eq!(h.len(), p.len());
    let max = h
        .iter()
        .zip(p)
        .filter(|(_, pi)| **pi > F::zero())
        .fold(F::neg_infinity(), |m, (hi, _)| m.max(*hi));
    let mut denom = F::zero();
    for (hi, pi) in h.iter().zip(p) {
        if *pi > F::zero() {
            denom += *pi * (*hi - max).exp();
        }
    }
    h.iter().map(|hi| (*hi - max).exp() / denom).collect()
}

/// The outer function `g` of a composite problem `min_x f(x) + g(Ax)`:
/// either the indicator of a point (`g = δ_{b}`, i.e. the constraint
/// `Ax = b`) or of the nonnegative orthant (`Ax ≥ 0`).
#[derive(Debug, Clone, PartialEq)]
pub enum Indicator<F> {
    AtPoint(Vec<F>),
    Nonnegative,
}

/// Composite Fenchel problem `min_x Σ_i f(x_i) + g(Ax)` with `f` applied
/// coordinatewise.
#[derive(Debug, Clone)]
pub struct FenchelProblem<F> {
    pub f: ConvexGenerator,
    pub a: DenseMatrix<F>,
    pub g: Indicator<F>,
}

/// Result of [`fenchel_gap_check`].
#[derive(Debug, Clone)]
pub struct GapReport<F> {
    pub primal_value: F,
    pub dual_value: F,
    /// `|primal − dual|`; zero at strong duality.
    pub gap: F,
    /// Primal point recovered from the dual solution: `x* = (f*)'(−Aᵀy*)`.
    pub primal_recovered: Vec<F>,
    pub dual_y: Vec<F>,
}

/// Maximum problem dimension accepted by [`fenchel_gap_check`].
pub const GAP_CHECK_MAX_DIM: usize = 32;

/// Solves the composite primal `min_x Σf(x_i) + g(Ax)` and the Fenchel dual
/// `max_y −Σf*((−Aᵀy)_i) − g*(y)` by independent routes and reports both
/// values, their gap, and the primal point recovered from the dual.
///
/// The dual is solved by gradient descent (projected onto `y ≤ 0` in the
/// nonnegativity case, where the optimum may sit on the boundary). The primal
/// is solved by substitution: `g = δ_{b}` pins `Ax = b`, solved exactly for a
/// square `A`; `g = δ_{≥0}` reports the recovered point's objective after a
/// feasibility check.
pub fn fenchel_gap_check<F: Scalar>(
    problem: &FenchelProblem<F>,
    config: &SolverConfig,
) -> Result<GapReport<F>> {
    let a = &problem.a;
    let dim = a.n_rows.max(a.n_cols);
    if dim > GAP_CHECK_MAX_DIM {
        return Err(Error::BudgetExceeded { what: "gap check dimension", limit: GAP_CHECK_MAX_DIM, got: dim });
    }
    let f = problem.f;

    let sum_conjugate = |neg_aty: &[F]| -> F { neg_aty.iter().map(|v| f.conjugate(*v)).sum() };

    match &problem.g {
        Indicator::AtPoint(b) => {
            if b.len() != a.n_rows {
                return Err(Error::ShapeMismatch { what: "indicator point", expected: a.n_rows, got: b.len() });
            }
            // Dual: min_y Σf*((−Aᵀy)_i) + ⟨b,y⟩ (negate for the dual value).
            let objective = |y: &[F]| {
                let mut neg_aty = a.matvec_transpose(y);
                for v in neg_aty.iter_mut() {
                    *v = -*v;
                }
                let value = sum_conjugate(&neg_aty) + crate::scalar::dot(b, y);
                let fprime: Vec<F> = neg_aty.iter().map(|v| f.conjugate_derivative(*v)).collect();
                let mut grad = a.matvec(&fprime);
                for (g, bi) in grad.iter_mut().zip(b) {
                    *g = -*g + *bi;
                }
                (value, grad)
            };
            let (y_star, report) = solve_min(objective, vec![F::zero(); a.n_rows], config)?;
            if !report.converged {
                return Err(Error::Nonconvergence {
                    context: "fenchel gap check dual",
                    iters: report.iters_used,
                    residual: report.final_grad_norm.to_f64().unwrap_or(f64::NAN),
                });
            }
            let dual_value = -report.objective_value;

            // Independent primal: substitution pins Ax = b exactly.
            if a.n_rows != a.n_cols {
                return Err(Error::DomainError(
                    "indicator-at-point primal substitution needs a square A".to_string(),
                ));
            }
            let x_pinned = lu_solve(a.clone(), b)
                .map_err(|_| Error::Infeasible("Ax = b has no unique solution".to_string()))?;
            let primal_value: F = x_pinned.iter().map(|v| f.eval(*v)).sum();

            let mut neg_aty = a.matvec_transpose(&y_star);
            for v in neg_aty.iter_mut() {
                *v = -*v;
            }
            let primal_recovered: Vec<F> = neg_aty.iter().map(|v| f.conjugate_derivative(*v)).collect();
            Ok(GapReport {
                primal_value,
                dual_value,
                gap: (primal_value - dual_value).abs(),
                primal_recovered,
                dual_y: y_star,
            })
        }
        Indicator::Nonnegative => {
            // Dual: max_{y≤0} −Σf*((−Aᵀy)_i), i.e. minimize h(y) over the
            // nonpositive orthant. The optimum typically sits on the
            // boundary, so this branch runs projected gradient descent with
            // the fixed-point residual ‖y − Π(y − η∇h)‖/η as its stopping
            // rule ([`solve_min`] stays unconstrained and generic).
            let eta = F::cast(config.step_size_min);
            let tol = F::cast(config.grad_tol);
            let mut y = vec![F::zero(); a.n_rows];
            let mut converged = false;
            let mut iters = 0usize;
            for k in 0..=config.max_iters {
                let mut neg_aty = a.matvec_transpose(&y);
                for v in neg_aty.iter_mut() {
                    *v = -*v;
                }
                let fprime: Vec<F> = neg_aty.iter().map(|v| f.conjugate_derivative(*v)).collect();
                let grad = a.matvec(&fprime); // ∇h = −A f*'(−Aᵀy), negated below
                let mut residual = F::zero();
                let mut next = y.clone();
                for (ni, gi) in next.iter_mut().zip(&grad) {
                    let stepped = (*ni + eta * *gi).min(F::zero());
                    residual = residual.max(((*ni - stepped) / eta).abs());
                    *ni = stepped;
                }
                if !residual.is_finite() {
                    return Err(Error::NonFiniteObjective { iter: k });
                }
                iters = k;
                if residual < tol {
                    converged = true;
                    break;
                }
                y = next;
            }
            if !converged {
                return Err(Error::Nonconvergence {
                    context: "fenchel gap check dual",
                    iters,
                    residual: f64::NAN,
                });
            }
            let y_star = y;
            let mut neg_aty = a.matvec_transpose(&y_star);
            for v in neg_aty.iter_mut() {
                *v = -*v;
            }
            let dual_value = -sum_conjugate(&neg_aty);
            let primal_recovered: Vec<F> = neg_aty.iter().map(|v| f.conjugate_derivative(*v)).collect();
            // Primal value at the recovered point, with a feasibility check.
            let ax = a.matvec(&primal_recovered);
            let worst = ax.iter().fold(F::zero(), |m, v| m.max(-*v));
            if worst > F::cast(1e-6) * (F::one() + sup_norm(&ax)) {
                return Err(Error::Infeasible(format!(
                    "recovered point violates Ax >= 0 by {}",
                    worst.to_f64().unwrap_or(f64::NAN)
                )));
            }
            let primal_value: F = primal_recovered.iter().map(|v| f.eval(*v)).sum();
            Ok(GapReport {
                primal_value,
                dual_value,
                gap: (primal_value - dual_value).abs(),
                primal_recovered,
                dual_y: y_star,
            })
        }
    }
}
