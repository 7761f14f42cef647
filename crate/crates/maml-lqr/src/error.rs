//! Error type shared by every module in the crate.
//!
//! Non-stabilizing policies are not errors for plain cost evaluation (they
//! yield the infinite-cost sentinel); they become errors where a finite
//! derivative is required.

/// Crate-wide error enumeration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Task matrices violate a structural requirement (symmetry,
    /// definiteness, stabilizability).
    #[error("invalid task: {0}")]
    InvalidTask(String),

    /// The eigenvalue iteration did not converge.
    #[error("eigenvalue computation failed to converge")]
    EigenFailure,

    /// The vectorized Lyapunov system was singular even though the closed
    /// loop is stable; indicates a numerical breakdown, never silent NaNs.
    #[error("Lyapunov solve failed for a stabilizing policy")]
    LyapunovSingular,

    /// Riccati iteration diverged or converged to a non-stabilizing gain.
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    /// A finite derivative was requested at a non-stabilizing policy.
    #[error("policy is not stabilizing")]
    NonStabilizingPolicy,

    /// A finite-difference stencil point left the region where the
    /// differentiated quantity is defined, even after shrinking the step.
    #[error("finite-difference stencil left the defined region")]
    StencilUndefined,

    /// Normalized adaptation is undefined where a task gradient vanishes.
    #[error("normalized adaptation undefined: zero task gradient")]
    ZeroGradientAdaptation,

    /// The objective (or its derivative) is undefined at the queried point.
    #[error("objective undefined at the requested point")]
    UndefinedObjective,

    /// Line search requires a descent direction.
    #[error("not a descent direction")]
    NotDescentDirection,

    /// Backtracking exhausted its halving budget.
    #[error("line search failed after {0} halvings")]
    LineSearchFailed(usize),

    /// A scalar argument is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Globality analysis needs at least one local minimum.
    #[error("no local minima found; scan insufficient")]
    NoLocalMinima,

    /// Every grid point of a scan was outside the stabilizing region.
    #[error("no stabilizing point on the scan grid")]
    NoStabilizingRegion,

    /// Rejection sampling could not produce enough valid tasks.
    #[error("rejection budget exhausted while drawing valid tasks")]
    RejectionBudgetExhausted,
}

pub type Result<T> = std::result::Result<T, Error>;
