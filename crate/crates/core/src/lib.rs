//! Decentralized transmission policies that minimize the Age of Incorrect
//! Information (AoII) of `N` sensors sharing a slotted ALOHA channel.
//!
//! * [`chain`]: the truncated per-sensor `(age, error)` Markov chain under a
//!   steady-state collision approximation, and its stationary distribution.
//! * [`bound`]: closed-form upper bound on the untruncated AoII.
//! * [`optimizer`]: penalized normalized gradient descent over the policy and
//!   the stationary distribution, seeded from a threshold policy.
//! * [`simulator`]: Monte Carlo ground truth of the full multi-sensor system.
//! * [`grid`]: the `(f, g)` grid file format used for policies and
//!   distributions.

pub mod bound;
pub mod chain;
pub mod diagnostics;
mod error;
pub mod grid;
pub mod optimizer;
pub mod simulator;

pub use bound::{bound, geometric_tail_fg, BoundBreakdown};
pub use chain::{
    build_kernel, build_state_space, collision_term, stationary_dist, success_prob, truncated_aoii, ChainParams,
    ModelOptions, Policy, State, StateDist, StateSpace, Stationary, StationaryOptions, TransitionKernel,
};
pub use error::{Error, Result};
pub use optimizer::{descend, optimize_policy, OptimConfig, OptimTrace};
pub use simulator::{compare, run, SimConfig, SimPolicy, SimReport};
