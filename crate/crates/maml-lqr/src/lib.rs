//! Exact model-agnostic meta-learning over linear-quadratic regulator tasks.
//!
//! The crate evaluates single-gradient-step meta-objectives over families of
//! LQR tasks *exactly*: policy costs come from Lyapunov solves, adaptation
//! gradients from the analytic policy-gradient formula, and the landscape
//! tooling (stationary-point search, globality gap, robustness sweeps) runs
//! on those exact quantities rather than on sampled rollouts. That makes the
//! curious geometry of these objectives — spurious minima appearing as tasks
//! spread apart, and disappearing again under normalized adaptation —
//! reproducible to machine precision.
//!
//! Layout:
//! * [`lqr`] — tasks, policies, exact costs, gradients, Hessians, Riccati.
//! * [`maml`] — the meta-objective (vanilla and normalized adaptation),
//!   its gradient, and certified-descent margins.
//! * [`optim`] — gradient descent on the meta-objective with full training
//!   traces, plus line search and random stabilizing initialization.
//! * [`landscape`] — grid scans, stationary-point classification, globality
//!   tests, and perturbation sweeps.

pub mod error;
pub mod landscape;
pub mod lqr;
pub mod maml;
pub mod optim;
mod ser;
pub mod tol;

pub use error::{Error, Result};
pub use landscape::{
    Assumption1Check, GlobalityCheck, LandscapeReport, Objective, PointKind, ScanGrid, ScanRow,
    ScanTable, StationaryPoint,
};
pub use lqr::{CostEval, LqrTask, Policy, RiccatiSolution};
pub use maml::{MamlConfig, MamlEval, TaskSet, UndefinedReason, Variant};
pub use optim::{BatchMode, StopReason, StopRule, TrainRecord};
