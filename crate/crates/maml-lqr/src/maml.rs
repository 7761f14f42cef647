//! The single-gradient-step meta-objective over a family of LQR tasks.
//!
//! For tasks `T_1..T_n` with weights `w_i` summing to one, the objective at
//! a policy `W` is
//!
//! ```text
//! h(W) = sum_i w_i C_i( U_i(W) ),    U_i(W) = W - eta * step_i(W)
//! ```
//!
//! where `step_i` is the exact cost gradient (vanilla adaptation) or the
//! same gradient scaled to unit Frobenius norm (normalized adaptation).
//! Both the inner step and the outer evaluation are exact — no sampling —
//! so `h` is a deterministic, piecewise-smooth function whose landscape can
//! be interrogated to machine precision.
//!
//! `h(W)` is defined only where every task's closed loop is stable at both
//! `W` and the adapted policy `U_i(W)` (and, for normalized adaptation,
//! where no task gradient vanishes). Outside that set evaluations report an
//! infinite sentinel and the reason, rather than an error, because scans
//! legitimately walk off the defined region all the time.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lqr::{self, LqrTask, Policy};
use crate::tol;

/// How the inner adaptation step uses the task gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `W - eta * grad C(W)`.
    Vanilla,
    /// `W - eta * grad C(W) / ||grad C(W)||_F`; undefined at critical points.
    Normalized,
}

/// Meta-learning step configuration: inner step length `eta`, outer step
/// length `beta`, and the adaptation variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MamlConfig {
    eta: f64,
    beta: f64,
    variant: Variant,
}

impl MamlConfig {
    /// Requires finite `eta >= 0` and finite `beta > 0`. `eta = 0` is
    /// allowed and collapses the objective to the weighted plain cost,
    /// which is a useful identity check.
    pub fn new(eta: f64, beta: f64, variant: Variant) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inner step length must be finite and >= 0, got {eta}"
            )));
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "outer step length must be finite and > 0, got {beta}"
            )));
        }
        Ok(Self { eta, beta, variant })
    }

    /// Vanilla adaptation with the default outer step.
    pub fn vanilla(eta: f64) -> Result<Self> {
        Self::new(eta, tol::DEFAULT_META_STEP, Variant::Vanilla)
    }

    /// Normalized adaptation with the default outer step.
    pub fn normalized(eta: f64) -> Result<Self> {
        Self::new(eta, tol::DEFAULT_META_STEP, Variant::Normalized)
    }

    /// Same configuration with a different outer step.
    pub fn with_beta(self, beta: f64) -> Result<Self> {
        Self::new(self.eta, beta, self.variant)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }
}

/// A weighted, dimension-consistent family of tasks. Weights are
/// normalized to sum to one at construction, so the objective is invariant
/// to their overall scale.
#[derive(Clone, Debug, Serialize)]
pub struct TaskSet {
    tasks: Vec<LqrTask>,
    weights: Vec<f64>,
}

impl TaskSet {
    /// Weights must be nonnegative and finite with a positive sum; they are
    /// stored normalized. A zero-weight task contributes nothing to the
    /// objective value but still constrains its domain (the objective stays
    /// undefined wherever any task is unstable).
    pub fn new(tasks: Vec<LqrTask>, weights: Vec<f64>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidTask("empty task family".into()));
        }
        if weights.len() != tasks.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} tasks",
                weights.len(),
                tasks.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidParameter(
                "task weights must be nonnegative and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(
                "task weights must not all be zero".into(),
            ));
        }
        let (d, r) = (tasks[0].state_dim(), tasks[0].input_dim());
        for t in &tasks[1..] {
            if t.state_dim() != d || t.input_dim() != r {
                return Err(Error::DimensionMismatch(
                    "tasks in one family must share state and input dimensions".into(),
                ));
            }
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { tasks, weights })
    }

    /// Equal weights.
    pub fn uniform(tasks: Vec<LqrTask>) -> Result<Self> {
        let n = tasks.len();
        Self::new(tasks, vec![1.0; n.max(1)])
    }

    pub fn tasks(&self) -> &[LqrTask] {
        &self.tasks
    }

    /// Normalized weights (sum to one).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.tasks[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.tasks[0].input_dim()
    }
}

/// Why an evaluation point is outside the objective's domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "task")]
pub enum UndefinedReason {
    /// The unadapted policy already destabilizes this task.
    BaseUnstable(usize),
    /// Normalized adaptation hit a (numerically) zero task gradient.
    ZeroGradient(usize),
    /// The policy is fine but its adapted copy destabilizes the task.
    AdaptedUnstable(usize),
}

/// One meta-objective evaluation, with per-task detail.
#[derive(Clone, Debug)]
pub struct MamlEval {
    /// Weighted post-adaptation cost, or `+inf` when undefined.
    pub value: f64,
    /// Whether every task was stable at base and adapted policies.
    pub defined: bool,
    /// `C_i(U_i(W))` per task; `+inf` entries mark the offending tasks.
    pub per_task_value: Vec<f64>,
    /// Adapted policies per task; `None` where adaptation was undefined.
    pub adapted: Vec<Option<Policy>>,
    /// First failure in task order, if any.
    pub reason: Option<UndefinedReason>,
}

/// One inner adaptation step on a single task.
///
/// Errors: [`Error::NonStabilizingPolicy`] when the base policy is outside
/// the task's stabilizing set (no gradient exists there), and
/// [`Error::ZeroGradientAdaptation`] when normalized adaptation meets a
/// gradient of norm at most [`tol::ZERO_GRAD_TOL`].
pub fn adapt(task: &LqrTask, policy: &Policy, config: &MamlConfig) -> Result<Policy> {
    let grad = lqr::cost_gradient(task, policy)?;
    let step = match config.variant {
        Variant::Vanilla => grad,
        Variant::Normalized => {
            let norm = grad.norm();
            if norm <= tol::ZERO_GRAD_TOL {
                return Err(Error::ZeroGradientAdaptation);
            }
            grad / norm
        }
    };
    Ok(Policy::new(policy.gain() - step * config.eta))
}

/// Evaluates the meta-objective at `policy`.
///
/// Every task is visited even after a failure, so `per_task_value` and
/// `adapted` always have one entry per task; `reason` reports the first
/// failure in task order. The returned `value` is finite iff `defined`.
pub fn maml_value(tasks: &TaskSet, policy: &Policy, config: &MamlConfig) -> Result<MamlEval> {
    let n = tasks.len();
    let mut per_task_value = vec![f64::INFINITY; n];
    let mut adapted: Vec<Option<Policy>> = vec![None; n];
    let mut reason = None;
    for (i, task) in tasks.tasks().iter().enumerate() {
        let adapted_i = match adapt(task, policy, config) {
            Ok(p) => p,
            Err(Error::NonStabilizingPolicy) => {
                reason = reason.or(Some(UndefinedReason::BaseUnstable(i)));
                continue;
            }
            Err(Error::ZeroGradientAdaptation) => {
                reason = reason.or(Some(UndefinedReason::ZeroGradient(i)));
                continue;
            }
            Err(e) => return Err(e),
        };
        let eval = lqr::eval_cost(task, &adapted_i)?;
        if !eval.stable {
            reason = reason.or(Some(UndefinedReason::AdaptedUnstable(i)));
            adapted[i] = Some(adapted_i);
            continue;
        }
        per_task_value[i] = eval.value;
        adapted[i] = Some(adapted_i);
    }
    let defined = reason.is_none();
    let value = if defined {
        tasks
            .weights()
            .iter()
            .zip(&per_task_value)
            .map(|(w, c)| w * c)
            .sum()
    } else {
        f64::INFINITY
    };
    Ok(MamlEval {
        value,
        defined,
        per_task_value,
        adapted,
        reason,
    })
}

/// Gradient of the meta-objective over `vec(W)`, returned in policy shape
/// (r x d).
///
/// Vanilla adaptation has the exact chain rule
/// `vec(grad h) = sum_i w_i (I - eta H_i(W)) vec(grad C_i(U_i(W)))`
/// with `H_i` the task cost Hessian, and that is what is computed.
/// Normalized adaptation differentiates through a non-smooth scaling, so
/// its gradient comes from central differences of [`maml_value`] instead.
///
/// Errors with [`Error::UndefinedObjective`] when `policy` is outside the
/// objective's domain, and [`Error::StencilUndefined`] when the difference
/// stencil cannot be kept inside it.
pub fn maml_gradient(
    tasks: &TaskSet,
    policy: &Policy,
    config: &MamlConfig,
) -> Result<DMatrix<f64>> {
    let eval = maml_value(tasks, policy, config)?;
    if !eval.defined {
        return Err(Error::UndefinedObjective);
    }
    match config.variant() {
        Variant::Vanilla => {
            let (r, d) = (policy.rows(), policy.cols());
            let n = r * d;
            let mut total = nalgebra::DVector::zeros(n);
            for (i, task) in tasks.tasks().iter().enumerate() {
                let weight = tasks.weights()[i];
                let hess = lqr::cost_hessian(task, policy)?;
                let adapted = eval.adapted[i].as_ref().expect("defined eval adapts all");
                let outer = lqr::cost_gradient(task, adapted)?;
                let outer_vec = nalgebra::DVector::from_column_slice(outer.as_slice());
                let jac = DMatrix::identity(n, n) - hess * config.eta();
                total += jac * outer_vec * weight;
            }
            Ok(DMatrix::from_column_slice(r, d, total.as_slice()))
        }
        Variant::Normalized => {
            let base_step = tol::GRAD_FD_STEP_SCALE * 1.0f64.max(policy.gain().norm());
            match fd_gradient(tasks, policy, config, base_step) {
                Err(Error::UndefinedObjective) => {
                    fd_gradient(tasks, policy, config, base_step * tol::FD_SHRINK)
                        .map_err(|_| Error::StencilUndefined)
                }
                other => other,
            }
        }
    }
}

fn fd_gradient(
    tasks: &TaskSet,
    policy: &Policy,
    config: &MamlConfig,
    step: f64,
) -> Result<DMatrix<f64>> {
    let (r, d) = (policy.rows(), policy.cols());
    let base = policy.to_vec();
    let mut grad = nalgebra::DVector::zeros(r * d);
    for i in 0..r * d {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let vp = maml_value(tasks, &Policy::from_vec(r, d, plus.as_slice()), config)?;
        let vm = maml_value(tasks, &Policy::from_vec(r, d, minus.as_slice()), config)?;
        if !vp.defined || !vm.defined {
            return Err(Error::UndefinedObjective);
        }
        grad[i] = (vp.value - vm.value) / (2.0 * step);
    }
    Ok(DMatrix::from_column_slice(r, d, grad.as_slice()))
}

/// Certificate margin for the inner step being a local diffeomorphism at
/// `policy` on one task.
///
/// Vanilla: `1 / ||H(W)||_2 - eta`. Normalized:
/// `||grad C(W)||_F / ||H(W)||_2 - eta`. A positive margin on every task of
/// a family certifies that the adaptation map is locally open around
/// `policy`, which is the hypothesis under which minima of the
/// meta-objective track minima of the task costs.
pub fn open_map_margin(task: &LqrTask, policy: &Policy, config: &MamlConfig) -> Result<f64> {
    let hess = lqr::cost_hessian(task, policy)?;
    let spec_norm = hess.symmetric_eigen().eigenvalues.amax();
    match config.variant() {
        Variant::Vanilla => Ok(spec_norm.recip() - config.eta()),
        Variant::Normalized => {
            let grad_norm = lqr::cost_gradient(task, policy)?.norm();
            Ok(grad_norm / spec_norm - config.eta())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn golden_task() -> LqrTask {
        LqrTask::scalar(1.0, 1.0, 2.0, 2.0, 1.0).unwrap()
    }

    fn golden_set() -> TaskSet {
        TaskSet::uniform(vec![golden_task()]).unwrap()
    }

    fn scalar_cost(w: f64, (a, b, q, r, s0): (f64, f64, f64, f64, f64)) -> f64 {
        let m = a - b * w;
        (q + r * w * w) * s0 / (1.0 - m * m)
    }

    #[test]
    fn adapt_moves_against_the_gradient() {
        let task = golden_task();
        let config = MamlConfig::vanilla(0.01).unwrap();
        // grad C(1) = 4, so one vanilla step lands at 0.96.
        let adapted = adapt(&task, &Policy::scalar(1.0), &config).unwrap();
        assert_abs_diff_eq!(adapted.as_scalar(), 0.96, epsilon = 1e-14);

        // The normalized step has unit length regardless of gradient size.
        let config = MamlConfig::normalized(0.01).unwrap();
        let adapted = adapt(&task, &Policy::scalar(1.0), &config).unwrap();
        assert_abs_diff_eq!(adapted.as_scalar(), 0.99, epsilon = 1e-14);
    }

    #[test]
    fn adapt_fixes_the_task_optimum_under_vanilla() {
        let task = golden_task();
        let w_star = lqr::solve_riccati(&task).unwrap().w_star;
        let config = MamlConfig::vanilla(0.01).unwrap();
        let adapted = adapt(&task, &w_star, &config).unwrap();
        assert_abs_diff_eq!(adapted.as_scalar(), w_star.as_scalar(), epsilon = 1e-9);
    }

    #[test]
    fn adapt_error_cases() {
        let task = golden_task();
        let config = MamlConfig::vanilla(0.01).unwrap();
        assert!(matches!(
            adapt(&task, &Policy::scalar(0.0), &config),
            Err(Error::NonStabilizingPolicy)
        ));

        // Normalized adaptation is undefined where the gradient vanishes.
        let w_star = lqr::solve_riccati(&task).unwrap().w_star;
        let config = MamlConfig::normalized(0.01).unwrap();
        // W* from value iteration is critical only to solver tolerance, so
        // also try the closed-form critical point.
        let exact = Policy::scalar((5.0f64.sqrt() - 1.0) / 2.0);
        let mut saw_zero_grad = false;
        for p in [&exact, &w_star] {
            match adapt(&task, p, &config) {
                Err(Error::ZeroGradientAdaptation) => saw_zero_grad = true,
                Ok(stepped) => {
                    // If the gradient was merely tiny the step still has
                    // length eta.
                    assert_abs_diff_eq!(
                        (stepped.gain() - p.gain()).norm(),
                        0.01,
                        epsilon = 1e-6
                    );
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        // The exact critical point must trip the zero-gradient guard.
        assert!(saw_zero_grad);
    }

    #[test]
    fn zero_eta_collapses_to_the_plain_cost() {
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap(),
        ])
        .unwrap();
        let w = Policy::scalar(0.8);
        for config in [
            MamlConfig::vanilla(0.0).unwrap(),
            MamlConfig::normalized(0.0).unwrap(),
        ] {
            let eval = maml_value(&tasks, &w, &config).unwrap();
            assert!(eval.defined);
            let plain: f64 = tasks
                .weights()
                .iter()
                .zip(tasks.tasks())
                .map(|(wt, t)| wt * lqr::eval_cost(t, &w).unwrap().value)
                .sum();
            assert_eq!(eval.value, plain);
        }
    }

    #[test]
    fn maml_value_on_the_golden_task() {
        let tasks = golden_set();
        let config = MamlConfig::vanilla(0.01).unwrap();
        let eval = maml_value(&tasks, &Policy::scalar(1.0), &config).unwrap();
        assert!(eval.defined);
        assert_eq!(eval.reason, None);
        // Adaptation lands at 0.96; evaluate the closed form there.
        assert_relative_eq!(
            eval.value,
            scalar_cost(0.96, (1.0, 1.0, 2.0, 2.0, 1.0)),
            max_relative = 1e-12
        );
        assert_relative_eq!(eval.value, 3.849358974358974, max_relative = 1e-12);
        assert_eq!(eval.per_task_value.len(), 1);
        assert_abs_diff_eq!(
            eval.adapted[0].as_ref().unwrap().as_scalar(),
            0.96,
            epsilon = 1e-14
        );
    }

    #[test]
    fn value_at_the_shared_optimum_of_a_scaled_pair() {
        // Second task is the first with costs scaled by 0.05; both
        // gradients vanish at the shared W*, so adaptation is the identity
        // and the value is the weighted sum of the plain costs.
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap(),
        ])
        .unwrap();
        let w_star = lqr::solve_riccati(&golden_task()).unwrap().w_star;
        let config = MamlConfig::vanilla(0.01).unwrap();
        let eval = maml_value(&tasks, &w_star, &config).unwrap();
        let c_star = 1.0 + 5.0f64.sqrt();
        assert_relative_eq!(
            eval.value,
            (c_star + 0.05 * c_star) / 2.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn undefined_points_report_reasons_without_short_circuit() {
        // Base instability on the second task only.
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(0.0, 1.0, 1.0, 1.0, 1.0).unwrap(),
        ])
        .unwrap();
        let config = MamlConfig::vanilla(0.01).unwrap();
        // w = 1 stabilizes task 0 (deadbeat) but closes task 1 at -1.
        let eval = maml_value(&tasks, &Policy::scalar(1.0), &config).unwrap();
        assert!(!eval.defined);
        assert_eq!(eval.value, f64::INFINITY);
        assert_eq!(eval.reason, Some(UndefinedReason::BaseUnstable(1)));
        assert!(eval.per_task_value[0].is_finite());
        assert!(eval.per_task_value[1].is_infinite());
        assert!(eval.adapted[0].is_some());
        assert!(eval.adapted[1].is_none());

        // A big vanilla step can overshoot into instability.
        let tasks = golden_set();
        let config = MamlConfig::vanilla(0.3).unwrap();
        let eval = maml_value(&tasks, &Policy::scalar(1.0), &config).unwrap();
        assert!(!eval.defined);
        assert_eq!(eval.reason, Some(UndefinedReason::AdaptedUnstable(0)));
        // The adapted policy is still reported for diagnosis: 1 - 0.3*4.
        assert_abs_diff_eq!(
            eval.adapted[0].as_ref().unwrap().as_scalar(),
            -0.2,
            epsilon = 1e-13
        );
    }

    #[test]
    fn weight_scale_does_not_change_the_objective() {
        let t = vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap(),
        ];
        let a = TaskSet::new(t.clone(), vec![1.0, 1.0]).unwrap();
        let b = TaskSet::new(t, vec![2.0, 2.0]).unwrap();
        let w = Policy::scalar(0.9);
        let config = MamlConfig::vanilla(0.01).unwrap();
        assert_eq!(
            maml_value(&a, &w, &config).unwrap().value,
            maml_value(&b, &w, &config).unwrap().value
        );
    }

    #[test]
    fn vanilla_gradient_matches_finite_differences() {
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap(),
        ])
        .unwrap();
        let config = MamlConfig::vanilla(0.01).unwrap();
        for w in [0.4, 0.9, 1.5] {
            let policy = Policy::scalar(w);
            let analytic = maml_gradient(&tasks, &policy, &config).unwrap();
            let h = 1e-6;
            let vp = maml_value(&tasks, &Policy::scalar(w + h), &config)
                .unwrap()
                .value;
            let vm = maml_value(&tasks, &Policy::scalar(w - h), &config)
                .unwrap()
                .value;
            let fd = (vp - vm) / (2.0 * h);
            assert_relative_eq!(analytic[(0, 0)], fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn vanilla_gradient_vanishes_at_the_singleton_optimum() {
        let tasks = golden_set();
        let w_star = lqr::solve_riccati(&golden_task()).unwrap().w_star;
        let config = MamlConfig::vanilla(0.01).unwrap();
        let g = maml_gradient(&tasks, &w_star, &config).unwrap();
        assert!(g.norm() < 1e-6, "meta-gradient at W* was {}", g.norm());
    }

    #[test]
    fn gradient_fd_cross_check_on_random_points() {
        // Fifty deterministic pseudo-random points across the defined
        // region, chain rule vs central differences of the value.
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 1.0, 2.0, 1.0).unwrap(),
        ])
        .unwrap();
        let config = MamlConfig::vanilla(0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 50 {
            let w: f64 = rng.random_range(0.1..1.9);
            let policy = Policy::scalar(w);
            let Ok(analytic) = maml_gradient(&tasks, &policy, &config) else {
                continue;
            };
            let h = 1e-6 * w.abs().max(1.0);
            let vp = maml_value(&tasks, &Policy::scalar(w + h), &config).unwrap();
            let vm = maml_value(&tasks, &Policy::scalar(w - h), &config).unwrap();
            if !vp.defined || !vm.defined {
                continue;
            }
            let fd = (vp.value - vm.value) / (2.0 * h);
            let denom = fd.abs().max(1.0);
            assert!(
                (analytic[(0, 0)] - fd).abs() / denom < 1e-4,
                "chain rule {} vs finite difference {} at w = {w}",
                analytic[(0, 0)],
                fd
            );
            checked += 1;
        }
    }

    #[test]
    fn normalized_gradient_consistency() {
        let tasks = TaskSet::uniform(vec![
            golden_task(),
            LqrTask::scalar(1.0, 1.0, 1.0, 2.0, 1.0).unwrap(),
        ])
        .unwrap();
        let config = MamlConfig::normalized(0.1).unwrap();
        let policy = Policy::scalar(0.9);
        let g = maml_gradient(&tasks, &policy, &config).unwrap();
        // Cross-check against a coarser manual stencil.
        let h = 1e-4;
        let vp = maml_value(&tasks, &Policy::scalar(0.9 + h), &config)
            .unwrap()
            .value;
        let vm = maml_value(&tasks, &Policy::scalar(0.9 - h), &config)
            .unwrap()
            .value;
        assert_relative_eq!(g[(0, 0)], (vp - vm) / (2.0 * h), max_relative = 1e-4);

        // With eta = 0 the meta-gradient is the plain weighted gradient.
        let config = MamlConfig::normalized(0.0).unwrap();
        let g = maml_gradient(&tasks, &policy, &config).unwrap();
        let plain: f64 = tasks
            .weights()
            .iter()
            .zip(tasks.tasks())
            .map(|(wt, t)| wt * lqr::cost_gradient(t, &policy).unwrap()[(0, 0)])
            .sum();
        assert_relative_eq!(g[(0, 0)], plain, max_relative = 1e-6);
    }

    #[test]
    fn gradient_outside_the_domain_is_an_error() {
        let tasks = golden_set();
        let config = MamlConfig::vanilla(0.01).unwrap();
        assert!(matches!(
            maml_gradient(&tasks, &Policy::scalar(0.0), &config),
            Err(Error::UndefinedObjective)
        ));
        let config = MamlConfig::vanilla(0.3).unwrap();
        assert!(matches!(
            maml_gradient(&tasks, &Policy::scalar(1.0), &config),
            Err(Error::UndefinedObjective)
        ));
    }

    #[test]
    fn certificate_margins() {
        let task = golden_task();
        let w_star = lqr::solve_riccati(&task).unwrap().w_star;
        // At the task optimum the cost curvature is ~12.261, so vanilla
        // steps up to ~0.0816 are certified.
        let config = MamlConfig::vanilla(0.01).unwrap();
        let margin = open_map_margin(&task, &w_star, &config).unwrap();
        assert_relative_eq!(
            margin,
            1.0 / 12.260990336999408 - 0.01,
            max_relative = 1e-6
        );
        assert!(margin > 0.0);

        // A large eta loses the certificate.
        let config = MamlConfig::vanilla(0.1).unwrap();
        assert!(open_map_margin(&task, &w_star, &config).unwrap() < 0.0);

        // Tiny eta is always certified at points with finite curvature.
        let config = MamlConfig::vanilla(1e-9).unwrap();
        assert!(open_map_margin(&task, &Policy::scalar(1.3), &config).unwrap() > 0.0);

        // Normalized margin at w = 1: ||grad|| = 4, ||hess|| = 12.
        let config = MamlConfig::normalized(0.01).unwrap();
        let margin = open_map_margin(&task, &Policy::scalar(1.0), &config).unwrap();
        assert_relative_eq!(margin, 4.0 / 12.0 - 0.01, max_relative = 1e-6);

        // Normalized margin at the optimum is negative for every eta: the
        // numerator gradient vanishes.
        let margin = open_map_margin(&task, &w_star, &config).unwrap();
        assert!(margin < 0.0);
    }

    #[test]
    fn scaling_costs_is_the_same_as_scaling_eta() {
        let base = golden_task();
        let config_base = MamlConfig::vanilla(0.02).unwrap();
        let config_scaled = MamlConfig::vanilla(0.01).unwrap();
        let scaled = base.scaled_cost(2.0).unwrap();
        let w = Policy::scalar(1.1);
        // Power-of-two cost scales commute with rounding, so the adapted
        // policies agree bit for bit.
        let a = adapt(&base, &w, &config_base).unwrap();
        let b = adapt(&scaled, &w, &config_scaled).unwrap();
        assert_eq!(a.as_scalar().to_bits(), b.as_scalar().to_bits());

        // A non-dyadic scale agrees to rounding error.
        let scaled = base.scaled_cost(3.0).unwrap();
        let config_scaled = MamlConfig::vanilla(0.02 / 3.0).unwrap();
        let b = adapt(&scaled, &w, &config_scaled).unwrap();
        assert_relative_eq!(a.as_scalar(), b.as_scalar(), max_relative = 1e-13);
    }

    #[test]
    fn scaled_family_collapses_under_normalized_adaptation() {
        // Tasks identical up to cost scale share the normalized adaptation
        // step exactly, so the family objective is a weighted multiple of
        // the base task's normalized objective.
        let base = golden_task();
        let scales = [1.0, 0.05, 2.5];
        let tasks = TaskSet::uniform(
            scales
                .iter()
                .map(|s| base.scaled_cost(*s).unwrap())
                .collect(),
        )
        .unwrap();
        let config = MamlConfig::normalized(0.1).unwrap();
        for w in [0.3, 0.9, 1.5] {
            let eval = maml_value(&tasks, &Policy::scalar(w), &config).unwrap();
            assert!(eval.defined);
            let base_adapted = adapt(&base, &Policy::scalar(w), &config).unwrap();
            let base_value = lqr::eval_cost(&base, &base_adapted).unwrap().value;
            let expected: f64 = scales.iter().map(|s| s * base_value).sum::<f64>() / 3.0;
            assert_relative_eq!(eval.value, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(MamlConfig::vanilla(-0.01).is_err());
        assert!(MamlConfig::vanilla(f64::NAN).is_err());
        assert!(MamlConfig::vanilla(f64::INFINITY).is_err());
        assert!(MamlConfig::vanilla(0.0).is_ok());
        assert!(MamlConfig::new(0.01, 0.0, Variant::Vanilla).is_err());
        assert!(MamlConfig::new(0.01, -1.0, Variant::Vanilla).is_err());
        assert!(MamlConfig::new(0.01, f64::NAN, Variant::Vanilla).is_err());
        assert!(TaskSet::uniform(vec![]).is_err());
        assert!(TaskSet::new(vec![golden_task()], vec![0.0]).is_err());
        assert!(TaskSet::new(vec![golden_task()], vec![-1.0]).is_err());
        assert!(TaskSet::new(vec![golden_task()], vec![1.0, 1.0]).is_err());
    }

    proptest! {
        // The meta-value must always agree with manually adapting each task
        // and evaluating: same arithmetic, exercised through the public API.
        #[test]
        fn value_decomposes_over_tasks(w in 0.3f64..1.7, eta in 0.0f64..0.02) {
            let tasks = TaskSet::uniform(vec![
                golden_task(),
                LqrTask::scalar(1.0, 1.0, 0.1, 0.1, 1.0).unwrap(),
            ]).unwrap();
            let config = MamlConfig::vanilla(eta).unwrap();
            let policy = Policy::scalar(w);
            let eval = maml_value(&tasks, &policy, &config).unwrap();
            if eval.defined {
                let mut manual = 0.0;
                for (i, task) in tasks.tasks().iter().enumerate() {
                    let adapted = adapt(task, &policy, &config).unwrap();
                    manual += tasks.weights()[i]
                        * lqr::eval_cost(task, &adapted).unwrap().value;
                }
                prop_assert!((eval.value - manual).abs() <= 1e-12 * manual.abs().max(1.0));
            }
        }
    }
}
