//! First-order solvers: plain gradient descent and simultaneous
//! gradient-descent-ascent (GDA) with uniform iterate averaging.
//!
//! Nothing here knows about MDPs. Objectives are closures returning a value
//! and gradient block(s); positivity constraints are the caller's business
//! (reparameterize, e.g. ζ = exp(w)). Runs are bitwise deterministic for a
//! fixed config: there is no randomness in the iteration itself.
//!
//! Saddle convergence is declared at the *averaged* point: simultaneous GDA
//! orbits around bilinear saddles, but the uniform average of the orbit
//! drifts into the solution. `inverse-sqrt` step decay keeps those orbits
//! from spiraling outward on long runs.

use crate::error::{Error, Result};
use crate::scalar::{sup_norm, Scalar};

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepDecay {
    /// Constant step size.
    #[default]
    None,
    /// `η_k = η / √(k+1)`.
    InverseSqrt,
}

impl std::fmt::Display for StepDecay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepDecay::None => write!(f, "none"),
            StepDecay::InverseSqrt => write!(f, "inverse-sqrt"),
        }
    }
}

impl std::str::FromStr for StepDecay {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(StepDecay::None),
            "inverse-sqrt" => Ok(StepDecay::InverseSqrt),
            other => Err(Error::DomainError(format!("unknown step decay {other:?}"))),
        }
    }
}

/// Solver configuration. Step sizes and tolerances are kept in `f64` and cast
/// into the scalar type at run time.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size for the descent block (and for plain minimization).
    pub step_size_min: f64,
    /// Step size for the ascent block of a saddle problem.
    pub step_size_max: f64,
    pub max_iters: usize,
    /// Convergence threshold on the sup norm of the gradient (at the averaged
    /// point for saddle problems).
    pub grad_tol: f64,
    pub step_decay: StepDecay,
    /// Recorded for provenance; the iterations themselves are deterministic.
    pub seed: u64,
    /// Uniform iterate averaging for saddle problems (ignored by `solve_min`).
    pub averaging: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_size_min: 0.1,
            step_size_max: 0.1,
            max_iters: 200_000,
            grad_tol: 1e-8,
            step_decay: StepDecay::None,
            seed: 0,
            averaging: true,
        }
    }
}

impl SolverConfig {
    fn step<F: Scalar>(&self, base: f64, k: usize) -> F {
        match self.step_decay {
            StepDecay::None => F::cast(base),
            StepDecay::InverseSqrt => F::cast(base / ((k + 1) as f64).sqrt()),
        }
    }
}

/// Outcome summary attached to every solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<F> {
    pub converged: bool,
    pub iters_used: usize,
    /// Gradient sup norm at the returned point.
    pub final_grad_norm: F,
    /// Objective value at the returned point.
    pub objective_value: F,
    /// `(iteration, objective)` samples along the raw iterate path.
    pub trajectory: Vec<(usize, F)>,
}

fn all_finite<F: Scalar>(value: F, grads: &[&[F]]) -> bool {
    value.is_finite() && grads.iter().all(|g| g.iter().all(|x| x.is_finite()))
}

/// Gradient descent on `objective`, which returns `(value, gradient)`.
///
/// Stops when the gradient sup norm drops below `grad_tol` or `max_iters`
/// steps have been taken; the latter case returns the last iterate with
/// `converged = false`. A non-finite value or gradient aborts with
/// [`Error::NonFiniteObjective`].
pub fn solve_min<F, O>(objective: O, init: Vec<F>, config: &SolverConfig) -> Result<(Vec<F>, SolveReport<F>)>
where
    F: Scalar,
    O: Fn(&[F]) -> (F, Vec<F>),
{
    let mut x = init;
    let stride = (config.max_iters / 100).max(1);
    let mut trajectory = Vec::new();
    let tol = F::cast(config.grad_tol);
    let mut iters_used = 0;

    for k in 0..=config.max_iters {
        let (value, grad) = objective(&x);
        if !all_finite(value, &[&grad]) {
            return Err(Error::NonFiniteObjective { iter: k });
        }
        let gnorm = sup_norm(&grad);
        if k % stride == 0 {
            trajectory.push((k, value));
        }
        let converged = gnorm < tol;
        if converged || k == config.max_iters {
            return Ok((
                x,
                SolveReport { converged, iters_used, final_grad_norm: gnorm, objective_value: value, trajectory },
            ));
        }
        let eta = config.step::<F>(config.step_size_min, k);
        for (xi, gi) in x.iter_mut().zip(&grad) {
            *xi -= eta * *gi;
        }
        iters_used = k + 1;
    }
    unreachable!("loop always returns");
}

/// Simultaneous GDA on `objective(min_block, max_block) → (value, grad_min,
/// grad_max)`: the min block descends its gradient while the max block
/// ascends, both evaluated at the same point.
///
/// With `averaging` on, the returned blocks are the uniform average of the
/// iterate path (evaluated for convergence every few hundred iterations); the
/// best averaged point seen is returned when the tolerance is never reached.
pub fn solve_saddle<F, O>(
    objective: O,
    init_min: Vec<F>,
    init_max: Vec<F>,
    config: &SolverConfig,
) -> Result<(Vec<F>, Vec<F>, SolveReport<F>)>
where
    F: Scalar,
    O: Fn(&[F], &[F]) -> (F, Vec<F>, Vec<F>),
{
    let mut x = init_min;
    let mut y = init_max;
    let mut x_sum: Vec<F> = x.iter().map(|_| F::zero()).collect();
    let mut y_sum: Vec<F> = y.iter().map(|_| F::zero()).collect();

    let stride = (config.max_iters / 100).max(1);
    let check_every = (config.max_iters / 200).clamp(50, 2_000);
    let tol = F::cast(config.grad_tol);
    let mut trajectory = Vec::new();

    // Best averaged (or raw, if averaging is off) point seen so far.
    let mut best_x = x.clone();
    let mut best_y = y.clone();
    let mut best_residual = F::infinity();
    let mut best_value = F::nan();

    let averaged_point = |x_sum: &[F], y_sum: &[F], n: usize, x: &[F], y: &[F]| -> (Vec<F>, Vec<F>) {
        if n == 0 {
            (x.to_vec(), y.to_vec())
        } else {
            let denom = F::cast_usize(n);
            (x_sum.iter().map(|v| *v / denom).collect(), y_sum.iter().map(|v| *v / denom).collect())
        }
    };

    let mut iters_used = 0;
    for k in 0..=config.max_iters {
        let (value, gx, gy) = objective(&x, &y);
        if !all_finite(value, &[&gx, &gy]) {
            return Err(Error::NonFiniteObjective { iter: k });
        }
        if k % stride == 0 {
            trajectory.push((k, value));
        }

        // Periodically measure the residual where the answer will be read off.
        if k % check_every == 0 || k == config.max_iters {
            let (cand_x, cand_y) = if config.averaging {
                averaged_point(&x_sum, &y_sum, n_averaged, &x, &y)
            } else {
                (x.clone(), y.clone())
            };
            let (cand_value, cgx, cgy) = objective(&cand_x, &cand_y);
            if !all_finite(cand_value, &[&cgx, &cgy]) {
                return Err(Error::NonFiniteObjective { iter: k });
            }
            let residual = sup_norm(&cgx).max(sup_norm(&cgy));
            if residual < best_residual {
                best_residual = residual;
                best_x = cand_x;
                best_y = cand_y;
                best_value = cand_value;
            }
            if best_residual < tol || k == config.max_iters {
                return Ok((
                    best_x,
                    best_y,
                    SolveReport {
                        converged: best_residual < tol,
                        iters_used,
                        final_grad_norm: best_residual,
                        objective_value: best_value,
                        trajectory,
                    },
                ));
            }
        }

        let eta_min = config.step::<F>(config.step_size_min, k);
        let eta_max = config.step::<F>(config.step_size_max, k);
        for (xi, gi) in x.iter_mut().zip(&gx) {
            *xi -= eta_min * *gi;
        }
        for (yi, gi) in y.iter_mut().zip(&gy) {
            *yi += eta_max * *gi;
        }
        for (sx, xi) in x_sum.iter_mut().zip(&x) {
            *sx += *xi;
        }
        for (sy, yi) in y_sum.iter_mut().zip(&y) {
            *sy += *yi;
        }
        n_averaged += 1;
        iters_used = k + 1;
    }
    unreachable!("loop always returns");
}
