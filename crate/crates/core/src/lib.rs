//! Tabular laboratory for convex-duality reinforcement learning: exact
//! linear-algebra oracles, a convex conjugacy toolkit, and gradient-based
//! primal/dual estimators for off-policy evaluation and policy optimization,
//! all over explicit finite MDPs.

pub mod convex;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod oracles;
pub mod policy_opt;
pub mod registry;
pub mod undiscounted;
pub mod vlp;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};

/// Default-precision aliases; the underlying types are generic over the
/// scalar via [`scalar::Scalar`] (`f32` works too).
pub type Mdp = mdp::TabularMdp<f64>;
pub type PolicyF64 = mdp::Policy<f64>;
