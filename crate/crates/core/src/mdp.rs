//! Tabular MDPs, policies, and the four linear operators every objective in
//! this crate is built from.
//!
//! With `N = n_states · n_actions` and flat index `z = s·n_actions + a`:
//!
//! | operator            | shape  | definition                                              |
//! |---------------------|--------|---------------------------------------------------------|
//! | policy forward      | SA→SA  | `(PπQ)(s,a) = Σ_{s'} T(s'|s,a) Σ_{a'} π(a'|s') Q(s',a')` |
//! | policy adjoint      | SA→SA  | `(Pπ*d)(s,a) = π(a|s) Σ_{s̃,ã} T(s|s̃,ã) d(s̃,ã)`          |
//! | transition forward  | S→SA   | `(TV)(s,a) = Σ_{s'} T(s'|s,a) V(s')`                     |
//! | transition adjoint  | SA→S   | `(T*d)(s) = Σ_{s̃,ã} T(s|s̃,ã) d(s̃,ã)`                    |
//!
//! The two pairs are adjoint: `⟨d, PπQ⟩ = ⟨Pπ*d, Q⟩` and `⟨d, TV⟩ = ⟨T*d, V⟩`,
//! and the adjoints preserve total mass. Those identities are what the whole
//! duality machinery rests on, so they are enforced by tests rather than
//! assumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, MdpViolation, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Tolerance for stochasticity checks (row sums, distribution sums).
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite MDP with dense tables.
///
/// `transition` is flat row-major `[s][a][s']`, `reward` is flat `[s][a]`,
/// `initial_dist` has length `n_states`. `discount` lies in `(0, 1]`; a
/// discount of exactly 1 marks the undiscounted (average-reward) regime,
/// which the discounted oracles refuse.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<F> {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<F>,
    pub reward: Vec<F>,
    pub initial_dist: Vec<F>,
    pub discount: F,
}

impl<F: Scalar> TabularMdp<F> {
    /// Builds and validates an MDP from dense tables.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<F>,
        reward: Vec<F>,
        initial_dist: Vec<F>,
        discount: F,
    ) -> Result<Self> {
        let mdp = Self { n_states, n_actions, transition, reward, initial_dist, discount };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// Number of state-action pairs (the length of every SA-shaped table).
    #[inline]
    pub fn n_sa(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Flat index of the pair `(s, a)`.
    #[inline]
    pub fn sa_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// `T(s'|s,a)`.
    #[inline]
    pub fn transition_prob(&self, s: usize, a: usize, next_s: usize) -> F {
        self.transition[(s * self.n_actions + a) * self.n_states + next_s]
    }

    /// The transition row for `(s, a)` as a slice over next states.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[F] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// True when `discount == 1`, i.e. the MDP is in the average-reward regime.
    #[inline]
    pub fn is_undiscounted(&self) -> bool {
        self.discount == F::one()
    }

    /// Initial state-action distribution `ν(s,a) = μ0(s) · π(a|s)`.
    pub fn initial_sa_dist(&self, policy: &Policy<F>) -> Vec<F> {
        let mut nu = vec![F::zero(); self.n_sa()];
        for s in 0..self.n_states {
            let mu = self.initial_dist[s];
            for a in 0..self.n_actions {
                nu[self.sa_index(s, a)] = mu * policy.prob(s, a);
            }
        }
        nu
    }

    /// Dense matrix of the policy-forward operator: `M[(s,a),(s',a')] =
    /// T(s'|s,a) · π(a'|s')`. Its transpose is the policy-adjoint operator, so
    /// one matrix serves both directions.
    pub fn policy_matrix(&self, policy: &Policy<F>) -> DenseMatrix<F> {
        let n_sa = self.n_sa();
        let mut m = DenseMatrix::zeros(n_sa, n_sa);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.sa_index(s, a);
                let t_row = self.transition_row(s, a);
                for next_s in 0..self.n_states {
                    let t = t_row[next_s];
                    if t == F::zero() {
                        continue;
                    }
                    for next_a in 0..self.n_actions {
                        m[(row, self.sa_index(next_s, next_a))] = t * policy.prob(next_s, next_a);
                    }
                }
            }
        }
        m
    }
}

/// Validates stochasticity (each transition row and the initial distribution
/// sum to 1 within [`STOCHASTIC_TOL`]), nonnegativity, and the discount range.
/// Returns every violation found, not just the first.
pub fn validate_mdp<F: Scalar>(mdp: &TabularMdp<F>) -> Result<()> {
    let mut violations = Vec::new();
    let n_sa = mdp.n_sa();
    if mdp.transition.len() != n_sa * mdp.n_states {
        return Err(Error::ShapeMismatch {
            what: "transition table",
            expected: n_sa * mdp.n_states,
            got: mdp.transition.len(),
        });
    }
    if mdp.reward.len() != n_sa {
        return Err(Error::ShapeMismatch { what: "reward table", expected: n_sa, got: mdp.reward.len() });
    }
    if mdp.initial_dist.len() != mdp.n_states {
        return Err(Error::ShapeMismatch {
            what: "initial distribution",
            expected: mdp.n_states,
            got: mdp.initial_dist.len(),
        });
    }

    let tol = F::cast(STOCHASTIC_TOL);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.transition_row(s, a);
            let sum: F = row.iter().copied().sum();
            if (sum - F::one()).abs() > tol {
                violations.push(MdpViolation::NonStochasticRow {
                    state: s,
                    action: a,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }
    for (i, v) in mdp.transition.iter().enumerate() {
        if *v < F::zero() {
            violations.push(MdpViolation::NegativeEntry {
                table: "transition",
                index: i,
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let init_sum: F = mdp.initial_dist.iter().copied().sum();
    if (init_sum - F::one()).abs() > tol {
        violations.push(MdpViolation::NonStochasticInitialDist {
            sum: init_sum.to_f64().unwrap_or(f64::NAN),
        });
    }
    for (i, v) in mdp.initial_dist.iter().enumerate() {
        if *v < F::zero() {
            violations.push(MdpViolation::NegativeEntry {
                table: "initial_dist",
                index: i,
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    if mdp.discount <= F::zero() || mdp.discount > F::one() {
        violations.push(MdpViolation::BadDiscount { value: mdp.discount.to_f64().unwrap_or(f64::NAN) });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidMdp(violations))
    }
}

/// A stationary policy: row-stochastic table `probs[s][a]` (flat row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<F> {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<F>,
}

impl<F: Scalar> Policy<F> {
    /// Builds a policy and validates row-stochasticity and nonnegativity.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<F>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                what: "policy table",
                expected: n_states * n_actions,
                got: probs.len(),
            });
        }
        let policy = Self { n_states, n_actions, probs };
        let tol = F::cast(STOCHASTIC_TOL);
        let mut violations = Vec::new();
        for s in 0..n_states {
            let row = policy.row(s);
            let sum: F = row.iter().copied().sum();
            if (sum - F::one()).abs() > tol {
                violations.push(MdpViolation::NonStochasticRow {
                    state: s,
                    action: 0,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
            for (a, v) in row.iter().enumerate() {
                if *v < F::zero() {
                    violations.push(MdpViolation::NegativeEntry {
                        table: "policy",
                        index: s * n_actions + a,
                        value: v.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        if violations.is_empty() {
            Ok(policy)
        } else {
            Err(Error::InvalidPolicy(violations))
        }
    }

    /// The uniform policy.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = F::one() / F::cast_usize(n_actions);
        Self { n_states, n_actions, probs: vec![p; n_states * n_actions] }
    }

    /// Row-softmax of a per-state logit table; always a valid policy.
    pub fn from_logits(n_states: usize, n_actions: usize, logits: &[F]) -> Self {
        assert_eq!(logits.len(), n_states * n_actions, "logit table shape");
        let mut probs = vec![F::zero(); logits.len()];
        for s in 0..n_states {
            let row = &logits[s * n_actions..(s + 1) * n_actions];
            let max = row.iter().fold(F::neg_infinity(), |m, v| m.max(*v));
            let mut sum = F::zero();
            for (a, l) in row.iter().enumerate() {
                let e = (*l - max).exp();
                probs[s * n_actions + a] = e;
                sum += e;
            }
            for a in 0..n_actions {
                probs[s * n_actions + a] /= sum;
            }
        }
        Self { n_states, n_actions, probs }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> F {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[F] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }
}

/// Vector indexed by state-action pairs, flat row-major (`z = s·n_actions + a`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionVector<F> {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<F>,
}

impl<F: Scalar> StateActionVector<F> {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<F>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                what: "state-action vector",
                expected: n_states * n_actions,
                got: values.len(),
            });
        }
        Ok(Self { n_states, n_actions, values })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, values: vec![F::zero(); n_states * n_actions] }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> F {
        self.values[s * self.n_actions + a]
    }
}

/// Vector indexed by states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<F> {
    pub values: Vec<F>,
}

impl<F: Scalar> StateVector<F> {
    pub fn new(values: Vec<F>) -> Self {
        Self { values }
    }
}

/// The four linear operators, for the shape-checked [`apply_operator`] entry
/// point. Estimator hot paths use the raw-slice helpers below instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// SA→SA, needs a policy: expectation of the next state-action value.
    PolicyForward,
    /// SA→SA, needs a policy: pushes an occupancy one step forward.
    PolicyAdjoint,
    /// S→SA: expectation of the next state value.
    TransitionForward,
    /// SA→S: next-state occupancy of a state-action occupancy.
    TransitionAdjoint,
}

/// Input/output of [`apply_operator`]; which variant is legal depends on the
/// operator kind.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorVec<F> {
    StateAction(StateActionVector<F>),
    State(StateVector<F>),
}

/// Applies one of the four operators with full shape checking.
///
/// `PolicyForward`/`PolicyAdjoint` require `policy`; the transition pair does
/// not. Passing the wrong vector variant or length yields
/// [`Error::ShapeMismatch`]; a missing policy yields [`Error::MissingPolicy`].
pub fn apply_operator<F: Scalar>(
    mdp: &TabularMdp<F>,
    kind: OperatorKind,
    policy: Option<&Policy<F>>,
    input: &OperatorVec<F>,
) -> Result<OperatorVec<F>> {
    let expect_sa = |v: &OperatorVec<F>| -> Result<Vec<F>> {
        match v {
            OperatorVec::StateAction(sa) if sa.values.len() == mdp.n_sa() => Ok(sa.values.clone()),
            OperatorVec::StateAction(sa) => {
                Err(Error::ShapeMismatch { what: "state-action input", expected: mdp.n_sa(), got: sa.values.len() })
            }
            OperatorVec::State(sv) => {
                Err(Error::ShapeMismatch { what: "state-action input", expected: mdp.n_sa(), got: sv.values.len() })
            }
        }
    };
    let expect_s = |v: &OperatorVec<F>| -> Result<Vec<F>> {
        match v {
            OperatorVec::State(sv) if sv.values.len() == mdp.n_states => Ok(sv.values.clone()),
            OperatorVec::State(sv) => {
                Err(Error::ShapeMismatch { what: "state input", expected: mdp.n_states, got: sv.values.len() })
            }
            OperatorVec::StateAction(sa) => {
                Err(Error::ShapeMismatch { what: "state input", expected: mdp.n_states, got: sa.values.len() })
            }
        }
    };
    let need_policy = || policy.ok_or(Error::MissingPolicy);

    match kind {
        OperatorKind::PolicyForward => {
            let q = expect_sa(input)?;
            let out = policy_forward(mdp, need_policy()?, &q);
            Ok(OperatorVec::StateAction(StateActionVector {
                n_states: mdp.n_states,
                n_actions: mdp.n_actions,
                values: out,
            }))
        }
        OperatorKind::PolicyAdjoint => {
            let d = expect_sa(input)?;
            let out = policy_adjoint(mdp, need_policy()?, &d);
            Ok(OperatorVec::StateAction(StateActionVector {
                n_states: mdp.n_states,
                n_actions: mdp.n_actions,
                values: out,
            }))
        }
        OperatorKind::TransitionForward => {
            let v = expect_s(input)?;
            let out = transition_forward(mdp, &v);
            Ok(OperatorVec::StateAction(StateActionVector {
                n_states: mdp.n_states,
                n_actions: mdp.n_actions,
                values: out,
            }))
        }
        OperatorKind::TransitionAdjoint => {
            let d = expect_sa(input)?;
            Ok(OperatorVec::State(StateVector::new(transition_adjoint(mdp, &d))))
        }
    }
}

/// `(PπQ)(s,a) = Σ_{s'} T(s'|s,a) Σ_{a'} π(a'|s') Q(s',a')`.
pub fn policy_forward<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>, q: &[F]) -> Vec<F> {
    assert_eq!(q.len(), mdp.n_sa());
    // First average over actions: V̄(s') = Σ_{a'} π(a'|s') Q(s',a').
    let v_bar = policy_value_average(mdp, policy, q);
    transition_forward(mdp, &v_bar)
}

/// `V̄(s) = Σ_a π(a|s) Q(s,a)`, the policy average of a state-action table.
pub fn policy_value_average<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>, q: &[F]) -> Vec<F> {
    let mut v_bar = vec![F::zero(); mdp.n_states];
    for s in 0..mdp.n_states {
        v_bar[s] = crate::scalar::dot(policy.row(s), &q[s * mdp.n_actions..(s + 1) * mdp.n_actions]);
    }
    v_bar
}

/// `(Pπ*d)(s,a) = π(a|s) Σ_{s̃,ã} T(s|s̃,ã) d(s̃,ã)`.
pub fn policy_adjoint<F: Scalar>(mdp: &TabularMdp<F>, policy: &Policy<F>, d: &[F]) -> Vec<F> {
    let next_state = transition_adjoint(mdp, d);
    let mut out = vec![F::zero(); mdp.n_sa()];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            out[mdp.sa_index(s, a)] = policy.prob(s, a) * next_state[s];
        }
    }
    out
}

/// `(TV)(s,a) = Σ_{s'} T(s'|s,a) V(s')`.
pub fn transition_forward<F: Scalar>(mdp: &TabularMdp<F>, v: &[F]) -> Vec<F> {
    assert_eq!(v.len(), mdp.n_states);
    let mut out = vec![F::zero(); mdp.n_sa()];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            out[mdp.sa_index(s, a)] = crate::scalar::dot(mdp.transition_row(s, a), v);
        }
    }
    out
}

/// `(T*d)(s) = Σ_{s̃,ã} T(s|s̃,ã) d(s̃,ã)`.
pub fn transition_adjoint<F: Scalar>(mdp: &TabularMdp<F>, d: &[F]) -> Vec<F> {
    assert_eq!(d.len(), mdp.n_sa());
    let mut out = vec![F::zero(); mdp.n_states];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let mass = d[mdp.sa_index(s, a)];
            if mass == F::zero() {
                continue;
            }
            let row = mdp.transition_row(s, a);
            for (next_s, t) in row.iter().enumerate() {
                out[next_s] += *t * mass;
            }
        }
    }
    out
}

/// Draws an index from a categorical distribution given by `probs` (assumed
/// normalized); the tail bucket absorbs rounding.
pub fn sample_categorical<F: Scalar, R: Rng>(probs: &[F], rng: &mut R) -> usize {
    let u = F::cast(rng.gen::<f64>());
    let mut acc = F::zero();
    for (i, p) in probs.iter().enumerate() {
        acc += *p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Generates a random MDP: every transition row and the initial distribution
/// are Dirichlet(1,…,1) (sampled as normalized standard exponentials), rewards
/// are uniform on [0,1]. Deterministic in `seed`.
pub fn random_mdp<F: Scalar>(n_states: usize, n_actions: usize, discount: F, seed: u64) -> TabularMdp<F> {
    assert!(n_states > 0 && n_actions > 0, "empty MDP");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sa = n_states * n_actions;
    let mut transition = vec![F::zero(); n_sa * n_states];
    for row in 0..n_sa {
        fill_dirichlet(&mut transition[row * n_states..(row + 1) * n_states], &mut rng);
    }
    let mut initial_dist = vec![F::zero(); n_states];
    fill_dirichlet(&mut initial_dist, &mut rng);
    let reward: Vec<F> = (0..n_sa).map(|_| F::cast(rng.gen::<f64>())).collect();
    TabularMdp { n_states, n_actions, transition, reward, initial_dist, discount }
}

/// Generates a random policy with Dirichlet(1,…,1) rows. Deterministic in `seed`.
pub fn random_policy<F: Scalar>(n_states: usize, n_actions: usize, seed: u64) -> Policy<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = vec![F::zero(); n_states * n_actions];
    for s in 0..n_states {
        fill_dirichlet(&mut probs[s * n_actions..(s + 1) * n_actions], &mut rng);
    }
    Policy { n_states, n_actions, probs }
}

/// Blends a policy with the uniform policy: each row becomes
/// `(1 − weight)·π(·|s) + weight·uniform`. Keeps every action probability at
/// least `weight / n_actions`, which bounds how ill-conditioned downstream
/// density ratios can get.
pub fn blend_with_uniform<F: Scalar>(policy: &Policy<F>, weight: F) -> Policy<F> {
    assert!(weight >= F::zero() && weight <= F::one(), "blend weight must lie in [0, 1]");
    let floor = weight / F::cast_usize(policy.n_actions);
    let probs = policy.probs.iter().map(|p| (F::one() - weight) * *p + floor).collect();
    Policy { n_states: policy.n_states, n_actions: policy.n_actions, probs }
}

/// Two-state deterministic swap chain with one action (s0 → s1 → s0),
/// rewards `[1, 0]`, initial mass entirely on s0. Small enough to solve by
/// hand, so it anchors many of the frozen-value tests; at `discount = 1` it
/// doubles as the canonical periodic (non-ergodic) chain.
pub fn swap_chain<F: Scalar>(discount: F) -> TabularMdp<F> {
    TabularMdp::new(
        2,
        1,
        vec![F::zero(), F::one(), F::one(), F::zero()],
        vec![F::one(), F::zero()],
        vec![F::one(), F::zero()],
        discount,
    )
    .unwrap()
}

/// Fills `row` with one Dirichlet(1,…,1) draw: i.i.d. Exp(1) samples via
/// inverse CDF, then normalization. Draws happen in f64 so the generated
/// instance is identical across scalar instantiations.
fn fill_dirichlet<F: Scalar, R: Rng>(row: &mut [F], rng: &mut R) {
    let mut sum = 0.0f64;
    let mut draws = vec![0.0f64; row.len()];
    for d in draws.iter_mut() {
        let u: f64 = rng.gen();
        *d = -(1.0 - u).ln();
        sum += *d;
    }
    debug_assert!(sum > 0.0);
    for (slot, d) in row.iter_mut().zip(&draws) {
        *slot = F::cast(*d / sum);
    }
}
