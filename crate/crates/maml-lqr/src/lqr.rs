//! Exact evaluation of infinite-horizon discrete LQR policy costs and their
//! derivatives.
//!
//! A task is `s_{t+1} = A s_t + B a_t` with stage cost `s'Qs + a'Ra` and
//! initial-state second moment `Sigma0`. A linear policy `a = -W s` closes
//! the loop to `M = A - B W`; when `M` is stable the cost is
//! `C(W) = trace(P_W Sigma0)` where `P_W` solves the discrete Lyapunov
//! equation `P = Q + W'RW + M' P M`. Everything here is solved exactly (to
//! solver tolerance), no rollouts or sampling anywhere.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ser::mat_rows;
use crate::tol;

/// One LQR task. Construction validates shapes, symmetry, definiteness and
/// stabilizability (a Riccati solve must succeed), so a held `LqrTask` is
/// always a well-posed control problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LqrTask {
    #[serde(serialize_with = "mat_rows")]
    a: DMatrix<f64>,
    #[serde(serialize_with = "mat_rows")]
    b: DMatrix<f64>,
    #[serde(serialize_with = "mat_rows")]
    q: DMatrix<f64>,
    #[serde(serialize_with = "mat_rows")]
    r: DMatrix<f64>,
    #[serde(serialize_with = "mat_rows")]
    sigma0: DMatrix<f64>,
}

impl LqrTask {
    /// Builds a task from `(A, B, Q, R, Sigma0)`.
    ///
    /// Requires: `A` d x d, `B` d x r, `Q` d x d symmetric PSD, `R` r x r
    /// symmetric PD, `Sigma0` d x d symmetric PSD, and `(A, B)` stabilizable
    /// (witnessed by a converging Riccati iteration).
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        if b.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, expected {}",
                b.nrows(),
                d
            )));
        }
        let m = b.ncols();
        if m == 0 || d == 0 {
            return Err(Error::InvalidTask("zero state or input dimension".into()));
        }
        check_square_named(&q, d, "Q")?;
        check_square_named(&r, m, "R")?;
        check_square_named(&sigma0, d, "Sigma0")?;
        for (mat, name) in [(&q, "Q"), (&r, "R"), (&sigma0, "Sigma0")] {
            if !is_symmetric(mat) {
                return Err(Error::InvalidTask(format!("{name} is not symmetric")));
            }
        }
        if min_sym_eigenvalue(&q)? < -tol::PSD_SLACK {
            return Err(Error::InvalidTask("Q is not positive semidefinite".into()));
        }
        if min_sym_eigenvalue(&r)? <= 0.0 {
            return Err(Error::InvalidTask("R is not positive definite".into()));
        }
        if min_sym_eigenvalue(&sigma0)? < -tol::PSD_SLACK {
            return Err(Error::InvalidTask(
                "Sigma0 is not positive semidefinite".into(),
            ));
        }
        // Stabilizability witness: the Riccati iteration must converge to a
        // stabilizing gain. The solution itself is discarded here.
        riccati_iterate(&a, &b, &q, &r)?;
        Ok(Self { a, b, q, r, sigma0 })
    }

    /// Scalar (d = r = 1) task from plain numbers.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64, sigma0: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            DMatrix::from_element(1, 1, sigma0),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }
    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    /// State dimension d.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension r.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Same task with `(Q, R)` multiplied by `scale > 0`. The cost and all
    /// its derivatives scale by the same factor while the minimizer stays
    /// put, so this is the canonical way to build "identical up to cost
    /// scale" task families.
    pub fn scaled_cost(&self, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cost scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self {
            a: self.a.clone(),
            b: self.b.clone(),
            q: &self.q * scale,
            r: &self.r * scale,
            sigma0: self.sigma0.clone(),
        })
    }

    /// Closed-loop matrix `A - B W`.
    pub fn closed_loop(&self, policy: &Policy) -> Result<DMatrix<f64>> {
        self.check_policy_dims(policy)?;
        Ok(&self.a - &self.b * policy.gain())
    }

    fn check_policy_dims(&self, policy: &Policy) -> Result<()> {
        if policy.rows() != self.input_dim() || policy.cols() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, task wants {}x{}",
                policy.rows(),
                policy.cols(),
                self.input_dim(),
                self.state_dim()
            )));
        }
        Ok(())
    }
}

fn check_square_named(m: &DMatrix<f64>, n: usize, name: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol::SYMMETRY_TOL {
                return false;
            }
        }
    }
    true
}

fn min_sym_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidTask("non-finite matrix entry".into()));
    }
    let eig = m.clone().symmetric_eigen();
    Ok(eig.eigenvalues.min())
}

/// A linear state-feedback policy `a = -W s`, stored as the gain `W` (r x d).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Policy {
    #[serde(serialize_with = "mat_rows")]
    w: DMatrix<f64>,
}

impl Policy {
    pub fn new(w: DMatrix<f64>) -> Self {
        Self { w }
    }

    /// Scalar gain for 1-dimensional tasks.
    pub fn scalar(w: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, w))
    }

    /// Rebuilds a policy from `vec(W)` in column-major order.
    pub fn from_vec(rows: usize, cols: usize, v: &[f64]) -> Self {
        Self::new(DMatrix::from_column_slice(rows, cols, v))
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn cols(&self) -> usize {
        self.w.ncols()
    }

    /// `vec(W)`, column-major (the project-wide vectorization order).
    pub fn to_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.w.as_slice())
    }

    /// Entry of a 1x1 gain; panics on larger policies.
    pub fn as_scalar(&self) -> f64 {
        assert!(
            self.rows() == 1 && self.cols() == 1,
            "as_scalar on a {}x{} policy",
            self.rows(),
            self.cols()
        );
        self.w[(0, 0)]
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
    }
}

/// Result of one exact policy evaluation.
///
/// For a non-stabilizing policy the cost is the `f64::INFINITY` sentinel and
/// both solution matrices are absent; finite garbage is never returned.
#[derive(Clone, Debug)]
pub struct CostEval {
    /// `trace(P_W Sigma0)`, or `+inf` when the closed loop is unstable.
    pub value: f64,
    /// Lyapunov solution `P_W` (symmetric PSD) when stable.
    pub p: Option<DMatrix<f64>>,
    /// State correlation `Sigma_W = sum_t M^t Sigma0 (M^t)'` when stable.
    pub sigma_w: Option<DMatrix<f64>>,
    /// Whether the closed loop is stable under the margin
    /// [`tol::STABILITY_MARGIN`].
    pub stable: bool,
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    /// Fixed point `P = A'PA + Q - A'PB (B'PB + R)^-1 B'PA`.
    pub p: DMatrix<f64>,
    /// Optimal gain `W* = (B'PB + R)^-1 B'PA`; always stabilizing.
    pub w_star: Policy,
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Returns `+inf` for matrices with non-finite entries (they are unstable by
/// any reasonable reading) and an error if the eigenvalue iteration fails.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Ok(f64::INFINITY);
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, tol::EIGEN_MAX_ITERS)
        .ok_or(Error::EigenFailure)?;
    let eigs = schur.complex_eigenvalues();
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Whether `A - B W` is stable with margin: spectral radius strictly below
/// `1 - STABILITY_MARGIN`.
pub fn is_stabilizing(task: &LqrTask, policy: &Policy) -> Result<bool> {
    task.check_policy_dims(policy)?;
    if !policy.is_finite() {
        return Ok(false);
    }
    let rho = spectral_radius(&task.closed_loop(policy)?)?;
    Ok(rho < 1.0 - tol::STABILITY_MARGIN)
}

/// Exact policy cost `C(W) = trace(P_W Sigma0)` with the Lyapunov solutions
/// that witness it.
///
/// The identity `trace(P_W Sigma0) = trace((Q + W'RW) Sigma_W)` holds for
/// every stabilizing policy and is the cheapest full-stack self-check.
pub fn eval_cost(task: &LqrTask, policy: &Policy) -> Result<CostEval> {
    task.check_policy_dims(policy)?;
    if !is_stabilizing(task, policy)? {
        return Ok(CostEval {
            value: f64::INFINITY,
            p: None,
            sigma_w: None,
            stable: false,
        });
    }
    let m = task.closed_loop(policy)?;
    let q_eff = task.q() + policy.gain().transpose() * task.r() * policy.gain();
    // P = Q_eff + M' P M  and  Sigma = Sigma0 + M Sigma M'.
    let p = solve_discrete_lyapunov(&m.transpose(), &m, &q_eff)?;
    let sigma_w = solve_discrete_lyapunov(&m, &m.transpose(), task.sigma0())?;
    let value = (&p * task.sigma0()).trace();
    Ok(CostEval {
        value,
        p: Some(p),
        sigma_w: Some(sigma_w),
        stable: true,
    })
}

/// Solves `X = C + F X G` for `X`.
///
/// Dense path: vectorize column-major, `(I - G' (x) F) vec(X) = vec(C)`,
/// one LU solve. Above [`tol::LYAP_KRON_MAX_DIM`] states the d^2 x d^2
/// system is replaced by the fixed-point iteration `X <- C + F X G`, which
/// converges whenever the relevant spectral radii are below one.
fn solve_discrete_lyapunov(
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = c.nrows();
    if d <= tol::LYAP_KRON_MAX_DIM {
        let kron = g.transpose().kronecker(f);
        let system = DMatrix::identity(d * d, d * d) - kron;
        let rhs = DVector::from_column_slice(c.as_slice());
        let sol = system.lu().solve(&rhs).ok_or(Error::LyapunovSingular)?;
        if !sol.iter().all(|x| x.is_finite()) {
            return Err(Error::LyapunovSingular);
        }
        let x = DMatrix::from_column_slice(d, c.ncols(), sol.as_slice());
        return Ok(symmetrize(&x));
    }
    let mut x = c.clone();
    for _ in 0..tol::LYAP_FIXED_POINT_MAX_ITERS {
        let next = c + f * &x * g;
        let step = (&next - &x).amax();
        let scale = 1.0f64.max(next.amax());
        x = next;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::LyapunovSingular);
        }
        if step < tol::LYAP_FIXED_POINT_TOL * scale {
            return Ok(symmetrize(&x));
        }
    }
    Err(Error::LyapunovSingular)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Analytic policy gradient of the exact cost,
/// `grad C(W) = 2 ((R + B'P_W B) W - B'P_W A) Sigma_W` (r x d).
///
/// Errors with [`Error::NonStabilizingPolicy`] off the stabilizing set: the
/// cost is identically `+inf` there, so no finite gradient exists.
pub fn cost_gradient(task: &LqrTask, policy: &Policy) -> Result<DMatrix<f64>> {
    let eval = eval_cost(task, policy)?;
    if !eval.stable {
        return Err(Error::NonStabilizingPolicy);
    }
    let p = eval.p.expect("stable eval carries P");
    let sigma = eval.sigma_w.expect("stable eval carries Sigma_W");
    let btp = task.b().transpose() * &p;
    let grad = ((task.r() + &btp * task.b()) * policy.gain() - &btp * task.a()) * sigma;
    Ok(grad * 2.0)
}

/// Hessian of the cost over `vec(W)` (column-major), `rd x rd`, symmetric.
///
/// Central finite differences of the analytic gradient; the exact gradient
/// puts the error floor near 1e-9 relative. If a stencil point leaves the
/// stabilizing set the step shrinks once by [`tol::FD_SHRINK`]; a second
/// failure is a domain error.
pub fn cost_hessian(task: &LqrTask, policy: &Policy) -> Result<DMatrix<f64>> {
    task.check_policy_dims(policy)?;
    let base_step = tol::HESS_FD_STEP_SCALE * 1.0f64.max(policy.gain().norm());
    match hessian_with_step(task, policy, base_step) {
        Err(Error::NonStabilizingPolicy) => {
            hessian_with_step(task, policy, base_step * tol::FD_SHRINK)
                .map_err(|_| Error::StencilUndefined)
        }
        other => other,
    }
}

fn hessian_with_step(task: &LqrTask, policy: &Policy, step: f64) -> Result<DMatrix<f64>> {
    let (r, d) = (policy.rows(), policy.cols());
    let n = r * d;
    let base = policy.to_vec();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let g_plus = cost_gradient(task, &Policy::from_vec(r, d, plus.as_slice()))?;
        let g_minus = cost_gradient(task, &Policy::from_vec(r, d, minus.as_slice()))?;
        let column = (g_plus - g_minus) / (2.0 * step);
        for (j, v) in column.as_slice().iter().enumerate() {
            h[(j, i)] = *v;
        }
    }
    Ok(symmetrize(&h))
}

/// Stabilizing Riccati solution by value iteration from `P_0 = Q`:
/// `P <- Q + A'PA - A'PB (B'PB + R)^-1 B'PA` until the max-abs step falls
/// below [`tol::RICCATI_TOL`].
pub fn solve_riccati(task: &LqrTask) -> Result<RiccatiSolution> {
    riccati_iterate(task.a(), task.b(), task.q(), task.r())
}

fn riccati_iterate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..tol::RICCATI_MAX_ITERS {
        let next = riccati_step(a, b, q, r, &p)?;
        let step = (&next - &p).amax();
        p = next;
        if p.amax() > tol::RICCATI_BLOWUP || !p.iter().all(|x| x.is_finite()) {
            return Err(Error::NoStabilizingSolution(
                "value iteration diverged".into(),
            ));
        }
        if step < tol::RICCATI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoStabilizingSolution(format!(
            "value iteration did not settle within {} steps",
            tol::RICCATI_MAX_ITERS
        )));
    }
    let gain = gain_from(a, b, r, &p)?;
    let closed = a - b * &gain;
    let rho = spectral_radius(&closed)?;
    if rho >= 1.0 - tol::STABILITY_MARGIN {
        return Err(Error::NoStabilizingSolution(format!(
            "fixed point reached but the gain leaves spectral radius {rho}"
        )));
    }
    Ok(RiccatiSolution {
        p,
        w_star: Policy::new(gain),
    })
}

fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let atp = a.transpose() * p;
    let gain = gain_from(a, b, r, p)?;
    let next = q + &atp * a - &atp * b * gain;
    Ok(symmetrize(&next))
}

fn gain_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btp = b.transpose() * p;
    let lhs = r + &btp * b;
    let rhs = &btp * a;
    lhs.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoStabilizingSolution("B'PB + R became singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden_task() -> LqrTask {
        LqrTask::scalar(1.0, 1.0, 2.0, 2.0, 1.0).unwrap()
    }

    // Scalar closed form for (a,b,q,r,s0): with m = a - b w and v = 1 - m^2,
    // C(w) = (q + r w^2) s0 / v on |m| < 1.
    fn scalar_cost(w: f64, (a, b, q, r, s0): (f64, f64, f64, f64, f64)) -> f64 {
        let m = a - b * w;
        (q + r * w * w) * s0 / (1.0 - m * m)
    }

    #[test]
    fn spectral_radius_basics() {
        assert_eq!(
            spectral_radius(&DMatrix::from_element(1, 1, 0.382)).unwrap(),
            0.382
        );
        assert_eq!(spectral_radius(&DMatrix::<f64>::zeros(2, 2)).unwrap(), 0.0);
        assert_relative_eq!(
            spectral_radius(&DMatrix::<f64>::identity(2, 2)).unwrap(),
            1.0
        );
        // Rotation-like matrix with complex eigenvalues of modulus sqrt(2).
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 2.0f64.sqrt(), max_relative = 1e-12);
        assert!(spectral_radius(&DMatrix::from_element(1, 2, 0.0)).is_err());
        assert_eq!(
            spectral_radius(&DMatrix::from_element(1, 1, f64::NAN)).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn stabilizing_predicate_on_the_golden_task() {
        let task = golden_task();
        assert!(is_stabilizing(&task, &Policy::scalar(1.0)).unwrap());
        assert!(!is_stabilizing(&task, &Policy::scalar(0.0)).unwrap());
        assert!(!is_stabilizing(&task, &Policy::scalar(2.5)).unwrap());
        assert!(!is_stabilizing(&task, &Policy::scalar(f64::NAN)).unwrap());
        let wrong_shape = Policy::new(DMatrix::zeros(2, 1));
        assert!(is_stabilizing(&task, &wrong_shape).is_err());
    }

    #[test]
    fn cost_matches_the_closed_form() {
        let task = golden_task();
        // At W = 1 the loop is deadbeat (M = 0): P = Q + R = 4, C = 4.
        let eval = eval_cost(&task, &Policy::scalar(1.0)).unwrap();
        assert!(eval.stable);
        assert_relative_eq!(eval.value, 4.0, max_relative = 1e-14);
        assert_relative_eq!(eval.p.unwrap()[(0, 0)], 4.0, max_relative = 1e-14);
        assert_relative_eq!(eval.sigma_w.unwrap()[(0, 0)], 1.0, max_relative = 1e-14);

        for w in [0.3, 0.6180339887498949, 1.4, 1.9] {
            let eval = eval_cost(&task, &Policy::scalar(w)).unwrap();
            assert_relative_eq!(
                eval.value,
                scalar_cost(w, (1.0, 1.0, 2.0, 2.0, 1.0)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn unstable_policies_get_the_infinite_sentinel() {
        let task = golden_task();
        for w in [0.0, 2.0, 2.5, -0.1] {
            let eval = eval_cost(&task, &Policy::scalar(w)).unwrap();
            assert!(!eval.stable);
            assert_eq!(eval.value, f64::INFINITY);
            assert!(eval.p.is_none());
            assert!(eval.sigma_w.is_none());
        }
    }

    #[test]
    fn trace_duality_on_a_two_dimensional_task() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let task = LqrTask::new(
            a,
            b,
            DMatrix::identity(2, 2),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let policy = Policy::new(DMatrix::from_row_slice(1, 2, &[0.2, 0.1]));
        let eval = eval_cost(&task, &policy).unwrap();
        assert!(eval.stable);
        let q_eff = task.q() + policy.gain().transpose() * task.r() * policy.gain();
        let dual = (q_eff * eval.sigma_w.as_ref().unwrap()).trace();
        assert_relative_eq!(eval.value, dual, max_relative = 1e-12);
    }

    #[test]
    fn gradient_oracle_values() {
        let task = golden_task();
        // Deadbeat point: P = 4, Sigma = 1, grad = 2((2+4)*1 - 4) = 4.
        let g = cost_gradient(&task, &Policy::scalar(1.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 4.0, max_relative = 1e-13);

        // Same dynamics with cost scaled by 0.05 scales the gradient.
        let scaled = LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap();
        let g = cost_gradient(&scaled, &Policy::scalar(1.0)).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.2, max_relative = 1e-13);

        // The Riccati gain is the unique stationary point.
        let sol = solve_riccati(&task).unwrap();
        let g = cost_gradient(&task, &sol.w_star).unwrap();
        assert!(g.norm() < 1e-8, "gradient at W* was {}", g.norm());

        assert!(matches!(
            cost_gradient(&task, &Policy::scalar(0.0)),
            Err(Error::NonStabilizingPolicy)
        ));
    }

    #[test]
    fn gradient_matches_central_differences_2d() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let task = LqrTask::new(
            a,
            b,
            DMatrix::identity(2, 2),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let policy = Policy::new(DMatrix::from_row_slice(1, 2, &[0.2, 0.1]));
        let analytic = cost_gradient(&task, &policy).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut vp = policy.to_vec();
            let mut vm = policy.to_vec();
            vp[i] += h;
            vm[i] -= h;
            let cp = eval_cost(&task, &Policy::from_vec(1, 2, vp.as_slice()))
                .unwrap()
                .value;
            let cm = eval_cost(&task, &Policy::from_vec(1, 2, vm.as_slice()))
                .unwrap()
                .value;
            let fd = (cp - cm) / (2.0 * h);
            assert_relative_eq!(analytic.as_slice()[i], fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn hessian_oracle_values() {
        // (a,b,q,r,s0) = (0,1,1,1,1): C(w) = (1 + w^2)/(1 - w^2), C''(0) = 4.
        let task = LqrTask::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let h = cost_hessian(&task, &Policy::scalar(0.0)).unwrap();
        assert_relative_eq!(h[(0, 0)], 4.0, max_relative = 1e-7);

        // Golden task: C''(1) = 12 from differentiating the closed form twice.
        let task = golden_task();
        let h = cost_hessian(&task, &Policy::scalar(1.0)).unwrap();
        assert_relative_eq!(h[(0, 0)], 12.0, max_relative = 1e-7);

        // And at the optimum C''(W*) = 12.260990336999... (closed form).
        let sol = solve_riccati(&task).unwrap();
        let h = cost_hessian(&task, &sol.w_star).unwrap();
        assert_relative_eq!(h[(0, 0)], 12.260990336999408, max_relative = 1e-7);
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let task = LqrTask::new(
            a,
            b,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let policy = Policy::new(DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.3]));
        let h = cost_hessian(&task, &policy).unwrap();
        assert_eq!(h.nrows(), 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn riccati_golden_values() {
        // p^2 - 2p - 4 = 0, so P = 1 + sqrt(5) and W* = P/(P+2) = (sqrt5-1)/2.
        let sol = solve_riccati(&golden_task()).unwrap();
        let sqrt5 = 5.0f64.sqrt();
        assert_abs_diff_eq!(sol.p[(0, 0)], 1.0 + sqrt5, epsilon = 1e-10);
        assert_abs_diff_eq!(
            sol.w_star.as_scalar(),
            (1.0 + sqrt5) / (3.0 + sqrt5),
            epsilon = 1e-10
        );
        // Closed loop 1 - W* = (3 - sqrt5)/2.
        let rho = spectral_radius(&golden_task().closed_loop(&sol.w_star).unwrap()).unwrap();
        assert_abs_diff_eq!(rho, (3.0 - sqrt5) / 2.0, epsilon = 1e-10);

        // (0,1,1,1,1): P = Q = 1 and W* = 0.
        let sol = solve_riccati(&LqrTask::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(sol.p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.w_star.as_scalar(), 0.0, epsilon = 1e-12);

        // (1,1,1,1,1): p^2 - p - 1 = 0, P = golden ratio.
        let sol = solve_riccati(&LqrTask::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let phi = (1.0 + sqrt5) / 2.0;
        assert_abs_diff_eq!(sol.p[(0, 0)], phi, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.w_star.as_scalar(), phi / (phi + 1.0), epsilon = 1e-10);
    }

    #[test]
    fn riccati_cost_is_the_minimum_over_a_grid() {
        let task = golden_task();
        let sol = solve_riccati(&task).unwrap();
        let best = eval_cost(&task, &sol.w_star).unwrap().value;
        assert_relative_eq!(best, 1.0 + 5.0f64.sqrt(), max_relative = 1e-12);
        for i in 0..1000 {
            let w = 0.01 + 1.98 * (i as f64) / 999.0;
            let c = eval_cost(&task, &Policy::scalar(w)).unwrap().value;
            assert!(c >= best - 1e-9, "C({w}) = {c} beat C(W*) = {best}");
        }
    }

    #[test]
    fn task_validation_rejects_malformed_inputs() {
        // Asymmetric Q.
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = LqrTask::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::identity(2, 2),
            q,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        );
        assert!(matches!(err, Err(Error::InvalidTask(_))));

        // R merely PSD is not enough.
        assert!(matches!(
            LqrTask::scalar(1.0, 1.0, 1.0, 0.0, 1.0),
            Err(Error::InvalidTask(_))
        ));

        // Unstabilizable pair: A = 2 with B = 0.
        assert!(matches!(
            LqrTask::scalar(2.0, 0.0, 1.0, 1.0, 1.0),
            Err(Error::NoStabilizingSolution(_))
        ));

        // Shape mismatch.
        assert!(LqrTask::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .is_err());
    }

    #[test]
    fn cost_scaling_law_spot_check() {
        let base = golden_task();
        let scaled = base.scaled_cost(3.0).unwrap();
        let w = Policy::scalar(0.8);
        let c0 = eval_cost(&base, &w).unwrap().value;
        let c1 = eval_cost(&scaled, &w).unwrap().value;
        assert_relative_eq!(c1, 3.0 * c0, max_relative = 1e-12);
        let g0 = cost_gradient(&base, &w).unwrap();
        let g1 = cost_gradient(&scaled, &w).unwrap();
        assert_relative_eq!(g1[(0, 0)], 3.0 * g0[(0, 0)], max_relative = 1e-12);
        let h0 = cost_hessian(&base, &w).unwrap();
        let h1 = cost_hessian(&scaled, &w).unwrap();
        assert_relative_eq!(h1[(0, 0)], 3.0 * h0[(0, 0)], max_relative = 1e-10);
        let s0 = solve_riccati(&base).unwrap();
        let s1 = solve_riccati(&scaled).unwrap();
        assert_relative_eq!(
            s1.w_star.as_scalar(),
            s0.w_star.as_scalar(),
            max_relative = 1e-10
        );
    }

    fn random_task(rng: &mut ChaCha8Rng) -> LqrTask {
        loop {
            let d = rng.random_range(1..=3);
            let r = rng.random_range(1..=3);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
            let mq = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let q = &mq * mq.transpose() + DMatrix::identity(d, d) * 0.1;
            let mr = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
            let rr = &mr * mr.transpose() + DMatrix::identity(r, r) * 0.1;
            let ms = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let s = &ms * ms.transpose() + DMatrix::identity(d, d) * 0.1;
            if let Ok(task) = LqrTask::new(a, b, q, rr, s) {
                return task;
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_tasks() {
        // One hundred random stabilizing policies on random small tasks;
        // the analytic gradient must track central differences of the value
        // to 1e-6 relative.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let task = random_task(&mut rng);
            let (d, r) = (task.state_dim(), task.input_dim());
            let w_star = solve_riccati(&task).unwrap().w_star;
            // Jitter around the optimum, keeping the whole stencil well
            // inside the stabilizing region: close to the boundary the cost
            // explodes and finite differences of the *value* drown in
            // roundoff, which would test the stencil rather than the
            // gradient formula.
            let jitter = DMatrix::from_fn(r, d, |_, _| rng.random_range(-0.02..0.02));
            let policy = Policy::new(w_star.gain() + jitter);
            let rho = spectral_radius(&task.closed_loop(&policy).unwrap()).unwrap();
            if rho > 0.9 {
                continue;
            }
            // Large costs amplify value roundoff by 1/h in the difference
            // quotient; keep the comparison in the regime where the
            // quotient actually resolves the derivative.
            if eval_cost(&task, &policy).unwrap().value > 50.0 {
                continue;
            }
            let Ok(analytic) = cost_gradient(&task, &policy) else {
                continue;
            };
            let h = 1e-6 * 1.0f64.max(policy.gain().norm());
            let mut fd = DMatrix::zeros(r, d);
            let mut stencil_ok = true;
            for i in 0..r * d {
                let mut vp = policy.to_vec();
                let mut vm = policy.to_vec();
                vp[i] += h;
                vm[i] -= h;
                let ep = eval_cost(&task, &Policy::from_vec(r, d, vp.as_slice())).unwrap();
                let em = eval_cost(&task, &Policy::from_vec(r, d, vm.as_slice())).unwrap();
                if !ep.stable || !em.stable {
                    stencil_ok = false;
                    break;
                }
                fd.as_mut_slice()[i] = (ep.value - em.value) / (2.0 * h);
            }
            if !stencil_ok {
                continue;
            }
            let rel = (&analytic - &fd).norm() / 1.0f64.max(analytic.norm());
            assert!(
                rel < 1e-6,
                "gradient mismatch {rel} on a {d}x{r} task (check {checked})"
            );
            checked += 1;
        }
    }
}
