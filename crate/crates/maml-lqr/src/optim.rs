//! Gradient-descent training of the meta-objective, a plain-cost descent
//! baseline, Armijo line search, and seeded random initialization.
//!
//! All loops are the textbook constant-step update `w <- w - beta * g`
//! recorded exactly: every visited iterate lands in the returned
//! [`TrainRecord`] together with its objective value and gradient norm, so
//! tests and plots can replay a run without re-executing it.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lqr::{self, LqrTask, Policy};
use crate::maml::{self, MamlConfig, TaskSet};
use crate::tol;

/// Why a training loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Gradient norm fell below the tolerance.
    GradTol,
    /// Iteration budget exhausted.
    MaxIter,
    /// The objective became undefined, exceeded the blow-up threshold, or
    /// its gradient could not be evaluated.
    Diverged,
}

/// Termination thresholds for the training loops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StopRule {
    /// Stop when the gradient Frobenius norm falls below this.
    pub grad_tol: f64,
    /// Hard cap on recorded iterates.
    pub max_iter: usize,
    /// Objective values above this count as divergence.
    pub value_blowup: f64,
}

impl StopRule {
    pub fn new(grad_tol: f64, max_iter: usize, value_blowup: f64) -> Result<Self> {
        if grad_tol.is_nan() || grad_tol <= 0.0 || value_blowup.is_nan() || value_blowup <= 0.0 || max_iter == 0 {
            return Err(Error::InvalidParameter(
                "stop thresholds must be positive".into(),
            ));
        }
        Ok(Self {
            grad_tol,
            max_iter,
            value_blowup,
        })
    }
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            grad_tol: tol::DEFAULT_GRAD_TOL,
            max_iter: tol::DEFAULT_MAX_ITERS,
            value_blowup: tol::DEFAULT_VALUE_BLOWUP,
        }
    }
}

/// Which tasks contribute to each update step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum BatchMode {
    /// Every task, weighted, every step: the deterministic objective.
    FullBatch,
    /// Each step draws `batch` tasks (with replacement) from the task
    /// weights using a generator seeded with `seed`, and averages their
    /// gradients unweighted. Deterministic given the seed.
    Sampled { seed: u64, batch: usize },
}

/// Complete trace of one training run. The three lists always have equal
/// length (one entry per visited iterate, the initial policy included).
///
/// Values are finite for every iterate except that a `Diverged` record may
/// end with an infinite sentinel (the iterate that left the objective's
/// domain is still recorded, for diagnosis). `grad_norms` carries an
/// infinite sentinel on iterates whose gradient did not exist.
#[derive(Clone, Debug, Serialize)]
pub struct TrainRecord {
    pub iterates: Vec<Policy>,
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl TrainRecord {
    fn push(&mut self, w: Policy, value: f64, grad_norm: f64) {
        self.iterates.push(w);
        self.values.push(value);
        self.grad_norms.push(grad_norm);
    }

    fn finish(mut self, reason: StopReason) -> Self {
        self.converged = reason == StopReason::GradTol;
        self.stop_reason = reason;
        self
    }

    fn empty() -> Self {
        Self {
            iterates: Vec::new(),
            values: Vec::new(),
            grad_norms: Vec::new(),
            converged: false,
            stop_reason: StopReason::MaxIter,
        }
    }

    pub fn final_policy(&self) -> &Policy {
        self.iterates.last().expect("records are never empty")
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("records are never empty")
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }
}

/// Trains the meta-objective by constant-step gradient descent
/// `w <- w - beta * grad h(w)` with `beta` from `cfg`.
///
/// Each iterate records the full-batch objective value (the true `h`, also
/// in sampled mode) and the norm of the gradient actually used for the
/// update. A non-stabilizing or otherwise undefined starting point yields
/// an immediate one-iterate `Diverged` record rather than an error.
pub fn maml_train(
    tasks: &TaskSet,
    cfg: &MamlConfig,
    init: &Policy,
    stop: &StopRule,
    mode: BatchMode,
) -> Result<TrainRecord> {
    check_policy_shape(tasks, init)?;
    StopRule::new(stop.grad_tol, stop.max_iter, stop.value_blowup)?;
    let mut sampler = match mode {
        BatchMode::FullBatch => None,
        BatchMode::Sampled { seed, batch } => {
            if batch == 0 {
                return Err(Error::InvalidParameter("batch size must be >= 1".into()));
            }
            let dist = WeightedIndex::new(tasks.weights().iter().copied())
                .map_err(|e| Error::InvalidParameter(format!("task weights: {e}")))?;
            Some((ChaCha8Rng::seed_from_u64(seed), dist, batch))
        }
    };
    // Singleton views used to evaluate per-task gradients in sampled mode.
    let singletons: Vec<TaskSet> = if sampler.is_some() {
        tasks
            .tasks()
            .iter()
            .map(|t| TaskSet::uniform(vec![t.clone()]).expect("singleton task set"))
            .collect()
    } else {
        Vec::new()
    };

    let mut record = TrainRecord::empty();
    let mut w = init.clone();
    loop {
        let eval = maml::maml_value(tasks, &w, cfg)?;
        if !eval.defined || eval.value > stop.value_blowup {
            record.push(w, eval.value, f64::INFINITY);
            return Ok(record.finish(StopReason::Diverged));
        }
        let grad = match &mut sampler {
            None => maml::maml_gradient(tasks, &w, cfg),
            Some((rng, dist, batch)) => {
                let mut sum = DMatrix::zeros(w.rows(), w.cols());
                let mut failed = None;
                for _ in 0..*batch {
                    let idx = dist.sample(rng);
                    match maml::maml_gradient(&singletons[idx], &w, cfg) {
                        Ok(g) => sum += g,
                        Err(e) => {
                            failed = Some(e);
                            break;
                        }
                    }
                }
                match failed {
                    Some(e) => Err(e),
                    None => Ok(sum / *batch as f64),
                }
            }
        };
        let grad = match grad {
            Ok(g) => g,
            Err(Error::UndefinedObjective) | Err(Error::StencilUndefined) => {
                record.push(w, eval.value, f64::INFINITY);
                return Ok(record.finish(StopReason::Diverged));
            }
            Err(e) => return Err(e),
        };
        let grad_norm = grad.norm();
        record.push(w.clone(), eval.value, grad_norm);
        if grad_norm < stop.grad_tol {
            return Ok(record.finish(StopReason::GradTol));
        }
        if record.len() >= stop.max_iter {
            return Ok(record.finish(StopReason::MaxIter));
        }
        w = Policy::new(w.gain() - grad * cfg.beta());
    }
}

/// Meta-training with Armijo backtracking instead of a constant step: each
/// update moves along `-grad h` with the step chosen by [`armijo_step`]
/// starting from `t0 = beta`. Useful for the normalized variant, whose
/// safe constant step is hard to guess near the kinks of the objective.
///
/// Values along the record are strictly nonincreasing by construction. A
/// line-search failure stops the run with a `Diverged` record.
pub fn maml_train_armijo(
    tasks: &TaskSet,
    cfg: &MamlConfig,
    init: &Policy,
    stop: &StopRule,
) -> Result<TrainRecord> {
    check_policy_shape(tasks, init)?;
    StopRule::new(stop.grad_tol, stop.max_iter, stop.value_blowup)?;
    let mut record = TrainRecord::empty();
    let mut w = init.clone();
    loop {
        let eval = maml::maml_value(tasks, &w, cfg)?;
        if !eval.defined || eval.value > stop.value_blowup {
            record.push(w, eval.value, f64::INFINITY);
            return Ok(record.finish(StopReason::Diverged));
        }
        let grad = match maml::maml_gradient(tasks, &w, cfg) {
            Ok(g) => g,
            Err(Error::UndefinedObjective) | Err(Error::StencilUndefined) => {
                record.push(w, eval.value, f64::INFINITY);
                return Ok(record.finish(StopReason::Diverged));
            }
            Err(e) => return Err(e),
        };
        let grad_norm = grad.norm();
        record.push(w.clone(), eval.value, grad_norm);
        if grad_norm < stop.grad_tol {
            return Ok(record.finish(StopReason::GradTol));
        }
        if record.len() >= stop.max_iter {
            return Ok(record.finish(StopReason::MaxIter));
        }
        let direction = -&grad;
        let value_fn = |p: &Policy| {
            maml::maml_value(tasks, p, cfg)
                .map(|e| e.value)
                .unwrap_or(f64::INFINITY)
        };
        let t = match armijo_step(
            value_fn,
            &grad,
            &w,
            &direction,
            tol::ARMIJO_SIGMA,
            tol::ARMIJO_SHRINK,
            cfg.beta(),
        ) {
            Ok(t) => t,
            Err(Error::LineSearchFailed(_)) | Err(Error::NotDescentDirection) => {
                return Ok(record.finish(StopReason::Diverged));
            }
            Err(e) => return Err(e),
        };
        w = Policy::new(w.gain() + &direction * t);
    }
}

/// Plain gradient descent on a single task's exact cost; the baseline the
/// meta-objective is compared against. Converges to the Riccati optimum
/// for small enough constant steps.
pub fn gradient_descent(
    task: &LqrTask,
    init: &Policy,
    step: f64,
    stop: &StopRule,
) -> Result<TrainRecord> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "descent step must be positive and finite, got {step}"
        )));
    }
    StopRule::new(stop.grad_tol, stop.max_iter, stop.value_blowup)?;
    let mut record = TrainRecord::empty();
    let mut w = init.clone();
    loop {
        let eval = lqr::eval_cost(task, &w)?;
        if !eval.stable || eval.value > stop.value_blowup {
            record.push(w, eval.value, f64::INFINITY);
            return Ok(record.finish(StopReason::Diverged));
        }
        let grad = lqr::cost_gradient(task, &w)?;
        let grad_norm = grad.norm();
        record.push(w.clone(), eval.value, grad_norm);
        if grad_norm < stop.grad_tol {
            return Ok(record.finish(StopReason::GradTol));
        }
        if record.len() >= stop.max_iter {
            return Ok(record.finish(StopReason::MaxIter));
        }
        w = Policy::new(w.gain() - grad * step);
    }
}

/// Backtracking line search with the sufficient-decrease test: returns the
/// largest `t = t0 * shrink^k` (`k >= 0`, at most [`tol::ARMIJO_MAX_STEPS`]
/// shrinks) with
///
/// ```text
/// f(w + t d) <= f(w) + sigma * t * <grad, d>
/// ```
///
/// `value_fn` may return `+inf` for undefined points; those trials simply
/// fail the test. Requires `<grad, d> < 0` (strict descent direction) and a
/// finite starting value.
pub fn armijo_step<F: FnMut(&Policy) -> f64>(
    mut value_fn: F,
    grad: &DMatrix<f64>,
    w: &Policy,
    direction: &DMatrix<f64>,
    sigma: f64,
    shrink: f64,
    t0: f64,
) -> Result<f64> {
    let params_ok =
        sigma > 0.0 && sigma < 1.0 && shrink > 0.0 && shrink < 1.0 && t0 > 0.0;
    if !params_ok {
        return Err(Error::InvalidParameter(
            "line search needs sigma, shrink in (0,1) and t0 > 0".into(),
        ));
    }
    let slope = grad.dot(direction);
    if slope.is_nan() || slope >= 0.0 {
        return Err(Error::NotDescentDirection);
    }
    let f0 = value_fn(w);
    if !f0.is_finite() {
        return Err(Error::UndefinedObjective);
    }
    let mut t = t0;
    for _ in 0..=tol::ARMIJO_MAX_STEPS {
        let trial = Policy::new(w.gain() + direction * t);
        let f_trial = value_fn(&trial);
        if f_trial <= f0 + sigma * t * slope {
            return Ok(t);
        }
        t *= shrink;
    }
    Err(Error::LineSearchFailed(tol::ARMIJO_MAX_STEPS + 1))
}

/// Draws a policy with entries uniform in `[lo, hi]`, rejecting until it
/// stabilizes every task (at most [`tol::REJECTION_BUDGET`] draws).
/// Deterministic given the seed.
pub fn sample_stable_init(tasks: &TaskSet, lo: f64, hi: f64, seed: u64) -> Result<Policy> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidParameter(format!(
            "initialization box [{lo}, {hi}] is not a proper interval"
        )));
    }
    let (r, d) = (tasks.input_dim(), tasks.state_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..tol::REJECTION_BUDGET {
        let w = Policy::new(DMatrix::from_fn(r, d, |_, _| rng.random_range(lo..hi)));
        let ok = tasks
            .tasks()
            .iter()
            .try_fold(true, |acc, t| Ok::<_, Error>(acc && lqr::is_stabilizing(t, &w)?))?;
        if ok {
            return Ok(w);
        }
    }
    Err(Error::RejectionBudgetExhausted)
}

fn check_policy_shape(tasks: &TaskSet, policy: &Policy) -> Result<()> {
    if policy.rows() != tasks.input_dim() || policy.cols() != tasks.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, task family wants {}x{}",
            policy.rows(),
            policy.cols(),
            tasks.input_dim(),
            tasks.state_dim()
        )));
    }
    Ok(())
}
