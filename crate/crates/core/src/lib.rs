//! Fault-tolerant min-max optimization over ensembles of cost functions.
//!
//! An ensemble holds `n` cost functions of which at most `f` may be
//! adversarial, with `n >= 2f + 1`. Solvers never learn which functions are
//! honest; they minimize the `(f+1)`-th largest function value, a surrogate
//! that is always wedged between the worst honest cost and its `(f+1)`-th
//! largest counterpart. The [`verifier`] module checks those bounds
//! numerically against ground truth that only the test harness knows.
//!
//! Module map:
//!
//! * [`rank`]: rank statistics, ensembles, ground-truth labelings, and the
//!   three aggregate objectives (ensemble objective, honest max, honest rank).
//! * [`functions`]: concrete cost-function families and adversary builders.
//! * [`grid`]: regular grids over hypercube domains.
//! * [`exact`]: certified dense-grid minimization.
//! * [`approx`]: Lipschitz-guided hypercube partition refinement.
//! * [`verifier`]: oracle-backed checks of every stated bound.

pub mod approx;
pub mod exact;
pub mod functions;
pub mod grid;
pub mod rank;
pub mod verifier;

pub use functions::CostFunctionSpec;
pub use rank::{Ensemble, GroundTruth, Hypercube};
