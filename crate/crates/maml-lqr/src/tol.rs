//! Numerical tolerances and iteration budgets, collected in one place.
//!
//! Every constant documents the invariant it guards so that a change here
//! is a deliberate renegotiation of accuracy, not an accident.

/// A policy counts as stabilizing only when the closed-loop spectral radius
/// is strictly below `1 - STABILITY_MARGIN`; radii inside the margin are
/// treated as unstable so downstream solves stay well conditioned.
pub const STABILITY_MARGIN: f64 = 1e-10;

/// Dense Kronecker solve of the Lyapunov equation is used up to this state
/// dimension; above it the memory for the d^2 x d^2 system is not worth it
/// and fixed-point iteration takes over.
pub const LYAP_KRON_MAX_DIM: usize = 20;

/// Relative step stall for the fixed-point Lyapunov fallback.
pub const LYAP_FIXED_POINT_TOL: f64 = 1e-14;

/// Iteration cap for the fixed-point Lyapunov fallback.
pub const LYAP_FIXED_POINT_MAX_ITERS: usize = 1_000_000;

/// Riccati value iteration stops when successive iterates differ by less
/// than this in max-abs norm.
pub const RICCATI_TOL: f64 = 1e-12;

/// Riccati value iteration gives up after this many steps.
pub const RICCATI_MAX_ITERS: usize = 100_000;

/// Riccati iterates whose max-abs entry exceeds this are declared divergent
/// (no stabilizing solution exists for the task).
pub const RICCATI_BLOWUP: f64 = 1e14;

/// Iteration cap for the in-house eigenvalue (Schur) computation.
pub const EIGEN_MAX_ITERS: usize = 10_000;

/// Base step, scaled by `max(1, ||W||_F)`, for central finite differences
/// of a value function (used for gradients of objectives that lack an
/// analytic gradient).
pub const GRAD_FD_STEP_SCALE: f64 = 1e-6;

/// Base step, scaled by `max(1, ||W||_F)`, for central finite differences
/// of an analytic gradient (Hessian assembly). With an exact gradient this
/// balances truncation against roundoff near 1e-9 relative error.
pub const HESS_FD_STEP_SCALE: f64 = 1e-5;

/// When a finite-difference stencil point leaves the defined region the
/// step shrinks by this factor exactly once before giving up.
pub const FD_SHRINK: f64 = 0.1;

/// Stationary points closer than this (Euclidean distance on vec(W)) are
/// merged into one.
pub const MERGE_RADIUS: f64 = 1e-6;

/// A Hessian eigenvalue is degenerate when `min|eig| <
/// DEGENERACY_REL_TOL * max(1, max|eig|)`: below gradient finite-difference
/// noise, above roundoff.
pub const DEGENERACY_REL_TOL: f64 = 1e-6;

/// Stationary points within this distance of the masked (non-stabilizing
/// or undefined) region are rejected; the objective blows up there rather
/// than flattening, so such points are numerical artifacts.
pub const BOUNDARY_EXCLUSION: f64 = 1e-4;

/// Every reported stationary point must satisfy `||grad|| <
/// STATIONARY_GRAD_TOL` when its gradient is re-evaluated independently.
pub const STATIONARY_GRAD_TOL: f64 = 1e-8;

/// Default Newton convergence tolerance on the gradient norm; tighter than
/// `STATIONARY_GRAD_TOL` so reported points clear it with margin.
pub const NEWTON_TOL: f64 = 1e-10;

/// Newton iteration cap per start.
pub const NEWTON_MAX_ITERS: usize = 200;

/// Backtracking halvings allowed inside a damped Newton step.
pub const NEWTON_MAX_HALVINGS: usize = 40;

/// A landscape is epsilon-global when the gap is at most
/// `GLOBALITY_REL_TOL * max(1, |global_min|)`.
pub const GLOBALITY_REL_TOL: f64 = 1e-6;

/// Gradient norms at or below this count as "zero" for normalized
/// adaptation, which divides by the norm and is undefined at critical
/// points.
pub const ZERO_GRAD_TOL: f64 = 1e-12;

/// Default outer (meta) step length when a configuration does not name one.
pub const DEFAULT_META_STEP: f64 = 1e-3;

/// Default training stop: gradient Frobenius norm threshold.
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;

/// Default training stop: iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Default training stop: objective values above this are divergence.
pub const DEFAULT_VALUE_BLOWUP: f64 = 1e12;

/// Armijo sufficient-decrease coefficient.
pub const ARMIJO_SIGMA: f64 = 1e-4;

/// Armijo step shrink factor.
pub const ARMIJO_SHRINK: f64 = 0.5;

/// Armijo halving budget.
pub const ARMIJO_MAX_STEPS: usize = 60;

/// Total draws allowed while rejection-sampling valid perturbed tasks or
/// stabilizing initial policies.
pub const REJECTION_BUDGET: usize = 1000;

/// Symmetry is enforced on task matrices up to this absolute tolerance.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues of Q and Sigma0 may be this far below zero and still count
/// as positive semidefinite (roundoff allowance).
pub const PSD_SLACK: f64 = 1e-10;

// Orderings the algorithms rely on, checked at compile time.
//
// Newton must converge strictly inside the reporting threshold; merging
// happens below the boundary exclusion radius; the Riccati stall tolerance
// leaves headroom inside the 1e-10 accuracy promised for the fixed point;
// Hessian steps are coarser than gradient steps because the differentiated
// quantity is already a derivative.
const _: () = {
    assert!(NEWTON_TOL < STATIONARY_GRAD_TOL);
    assert!(MERGE_RADIUS < BOUNDARY_EXCLUSION);
    assert!(RICCATI_TOL < 1e-10);
    assert!(GRAD_FD_STEP_SCALE < HESS_FD_STEP_SCALE);
};
