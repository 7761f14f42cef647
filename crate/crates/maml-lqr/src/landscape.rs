//! Landscape analysis: dense scans, stationary-point search and
//! classification, globality gaps, and robustness sweeps.
//!
//! Everything here treats an objective as a black box over policies that
//! may be undefined (masked) on part of the search box. The search box
//! doubles as the compact domain all statements are relative to: stationary
//! points outside it are not reported, and every [`LandscapeReport`]
//! records the box it was computed over.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lqr::{self, LqrTask, Policy};
use crate::maml::{self, MamlConfig, TaskSet};
use crate::ser::mat_rows;
use crate::tol;

/// Number of uniformly placed (or, above two axes, randomly drawn) extra
/// Newton starts used by the convenience entry points that do not take a
/// seed count.
pub const DEFAULT_SEED_COUNT: usize = 32;

/// A black-box objective over policies. `value` returns `None` where the
/// objective is undefined (e.g. a destabilizing policy); scans mask such
/// points and the stationary-point search refuses to terminate near them.
///
/// `gradient` and `hessian` have central finite-difference defaults, so a
/// plain value function is enough; implementations with analytic
/// derivatives override them for accuracy.
pub trait Objective {
    /// Policy shape as (rows, cols) = (input dim, state dim).
    fn dims(&self) -> (usize, usize);

    fn value(&self, w: &Policy) -> Option<f64>;

    fn gradient(&self, w: &Policy) -> Option<DMatrix<f64>> {
        let step = tol::GRAD_FD_STEP_SCALE * 1.0f64.max(w.gain().norm());
        self.fd_gradient(w, step)
            .or_else(|| self.fd_gradient(w, step * tol::FD_SHRINK))
    }

    fn hessian(&self, w: &Policy) -> Option<DMatrix<f64>> {
        let step = tol::HESS_FD_STEP_SCALE * 1.0f64.max(w.gain().norm());
        self.fd_hessian(w, step)
            .or_else(|| self.fd_hessian(w, step * tol::FD_SHRINK))
    }

    /// Central differences of `value`; `None` if any stencil point is
    /// undefined.
    fn fd_gradient(&self, w: &Policy, step: f64) -> Option<DMatrix<f64>> {
        let (r, d) = self.dims();
        let base = w.to_vec();
        let mut grad = DVector::zeros(r * d);
        for i in 0..r * d {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += step;
            minus[i] -= step;
            let vp = self.value(&Policy::from_vec(r, d, plus.as_slice()))?;
            let vm = self.value(&Policy::from_vec(r, d, minus.as_slice()))?;
            grad[i] = (vp - vm) / (2.0 * step);
        }
        Some(DMatrix::from_column_slice(r, d, grad.as_slice()))
    }

    /// Central differences of `gradient`, symmetrized; `None` if any
    /// stencil point lacks a gradient.
    fn fd_hessian(&self, w: &Policy, step: f64) -> Option<DMatrix<f64>> {
        let (r, d) = self.dims();
        let n = r * d;
        let base = w.to_vec();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += step;
            minus[i] -= step;
            let gp = self.gradient(&Policy::from_vec(r, d, plus.as_slice()))?;
            let gm = self.gradient(&Policy::from_vec(r, d, minus.as_slice()))?;
            let col = (gp - gm) / (2.0 * step);
            for (j, v) in col.as_slice().iter().enumerate() {
                h[(j, i)] = *v;
            }
        }
        Some((&h + h.transpose()) * 0.5)
    }
}

/// The exact cost of a single task as an [`Objective`].
pub struct PlainCost<'a> {
    task: &'a LqrTask,
}

impl<'a> PlainCost<'a> {
    pub fn new(task: &'a LqrTask) -> Self {
        Self { task }
    }
}

impl Objective for PlainCost<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.task.input_dim(), self.task.state_dim())
    }

    fn value(&self, w: &Policy) -> Option<f64> {
        let eval = lqr::eval_cost(self.task, w).ok()?;
        eval.stable.then_some(eval.value)
    }

    fn gradient(&self, w: &Policy) -> Option<DMatrix<f64>> {
        lqr::cost_gradient(self.task, w).ok()
    }

    fn hessian(&self, w: &Policy) -> Option<DMatrix<f64>> {
        lqr::cost_hessian(self.task, w).ok()
    }
}

/// The weighted average of plain task costs, undefined wherever any task is
/// unstable.
pub struct AverageCost<'a> {
    tasks: &'a TaskSet,
}

impl<'a> AverageCost<'a> {
    pub fn new(tasks: &'a TaskSet) -> Self {
        Self { tasks }
    }
}

impl Objective for AverageCost<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.tasks.input_dim(), self.tasks.state_dim())
    }

    fn value(&self, w: &Policy) -> Option<f64> {
        let mut total = 0.0;
        for (task, weight) in self.tasks.tasks().iter().zip(self.tasks.weights()) {
            let eval = lqr::eval_cost(task, w).ok()?;
            if !eval.stable {
                return None;
            }
            total += weight * eval.value;
        }
        Some(total)
    }

    fn gradient(&self, w: &Policy) -> Option<DMatrix<f64>> {
        let (r, d) = self.dims();
        let mut total = DMatrix::zeros(r, d);
        for (task, weight) in self.tasks.tasks().iter().zip(self.tasks.weights()) {
            total += lqr::cost_gradient(task, w).ok()? * *weight;
        }
        Some(total)
    }

    fn hessian(&self, w: &Policy) -> Option<DMatrix<f64>> {
        let (r, d) = self.dims();
        let n = r * d;
        let mut total = DMatrix::zeros(n, n);
        for (task, weight) in self.tasks.tasks().iter().zip(self.tasks.weights()) {
            total += lqr::cost_hessian(task, w).ok()? * *weight;
        }
        Some(total)
    }
}

/// The meta-objective as an [`Objective`]: exact value and (for the vanilla
/// variant) chain-rule gradient; the Hessian falls back to differences of
/// the gradient.
pub struct MamlObjective<'a> {
    tasks: &'a TaskSet,
    cfg: &'a MamlConfig,
}

impl<'a> MamlObjective<'a> {
    pub fn new(tasks: &'a TaskSet, cfg: &'a MamlConfig) -> Self {
        Self { tasks, cfg }
    }
}

impl Objective for MamlObjective<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.tasks.input_dim(), self.tasks.state_dim())
    }

    fn value(&self, w: &Policy) -> Option<f64> {
        let eval = maml::maml_value(self.tasks, w, self.cfg).ok()?;
        eval.defined.then_some(eval.value)
    }

    fn gradient(&self, w: &Policy) -> Option<DMatrix<f64>> {
        maml::maml_gradient(self.tasks, w, self.cfg).ok()
    }
}

/// An objective defined by a plain value function; derivatives come from
/// the trait's finite-difference defaults. Used for synthetic landscapes in
/// tests and for quick experiments.
pub struct FnObjective<F> {
    rows: usize,
    cols: usize,
    f: F,
}

impl<F: Fn(&Policy) -> Option<f64>> FnObjective<F> {
    pub fn new(rows: usize, cols: usize, f: F) -> Self {
        Self { rows, cols, f }
    }
}

/// Scalar synthetic objective from `f(w)`.
pub fn scalar_objective(
    f: impl Fn(f64) -> Option<f64>,
) -> FnObjective<impl Fn(&Policy) -> Option<f64>> {
    FnObjective::new(1, 1, move |p: &Policy| f(p.as_scalar()))
}

impl<F: Fn(&Policy) -> Option<f64>> Objective for FnObjective<F> {
    fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn value(&self, w: &Policy) -> Option<f64> {
        (self.f)(w)
    }
}

/// A rectangular search box over `vec(W)` with the same number of sample
/// points per axis. Axis `i` corresponds to the `i`-th entry of `vec(W)`
/// in column-major order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanGrid {
    #[serde(serialize_with = "mat_rows")]
    lo: DMatrix<f64>,
    #[serde(serialize_with = "mat_rows")]
    hi: DMatrix<f64>,
    resolution: usize,
}

impl ScanGrid {
    /// Requires `lo < hi` entrywise (same shape) and `resolution >= 3`.
    pub fn new(lo: DMatrix<f64>, hi: DMatrix<f64>, resolution: usize) -> Result<Self> {
        if lo.shape() != hi.shape() {
            return Err(Error::DimensionMismatch(format!(
                "box corners {}x{} vs {}x{}",
                lo.nrows(),
                lo.ncols(),
                hi.nrows(),
                hi.ncols()
            )));
        }
        let finite = lo.iter().all(|x| x.is_finite()) && hi.iter().all(|x| x.is_finite());
        if !finite || lo.iter().zip(hi.iter()).any(|(a, b)| a >= b) {
            return Err(Error::InvalidParameter(
                "search box needs lo < hi entrywise and finite".into(),
            ));
        }
        if resolution < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least 3, got {resolution}"
            )));
        }
        Ok(Self { lo, hi, resolution })
    }

    /// One-dimensional box for scalar policies.
    pub fn scalar(lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, lo),
            DMatrix::from_element(1, 1, hi),
            resolution,
        )
    }

    pub fn lo(&self) -> &DMatrix<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DMatrix<f64> {
        &self.hi
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of axes = number of policy entries.
    pub fn axes(&self) -> usize {
        self.lo.nrows() * self.lo.ncols()
    }

    /// Total number of grid points (`resolution^axes`).
    pub fn len(&self) -> usize {
        self.resolution.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point by flat index, row-major over per-axis indices (axis 0
    /// outermost).
    pub fn point(&self, index: usize) -> Policy {
        let axes = self.axes();
        let lo = self.lo.as_slice();
        let hi = self.hi.as_slice();
        let mut v = vec![0.0; axes];
        let mut rem = index;
        for a in (0..axes).rev() {
            let j = rem % self.resolution;
            rem /= self.resolution;
            v[a] = lo[a] + (hi[a] - lo[a]) * j as f64 / (self.resolution - 1) as f64;
        }
        Policy::from_vec(self.lo.nrows(), self.lo.ncols(), &v)
    }

    fn contains(&self, w: &Policy) -> bool {
        w.gain()
            .iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Policy {
        let axes = self.axes();
        let lo = self.lo.as_slice();
        let hi = self.hi.as_slice();
        let v: Vec<f64> = (0..axes).map(|a| rng.random_range(lo[a]..hi[a])).collect();
        Policy::from_vec(self.lo.nrows(), self.lo.ncols(), &v)
    }
}

/// One scanned grid point: the policy and its objective value (`None` =
/// masked, objective undefined there).
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub policy: Policy,
    pub value: Option<f64>,
}

/// Dense evaluation of an objective over a grid, in the grid's row-major
/// point order.
#[derive(Clone, Debug, Serialize)]
pub struct ScanTable {
    pub grid: ScanGrid,
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// Share of grid points where the objective was undefined.
    pub fn masked_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let masked = self.rows.iter().filter(|r| r.value.is_none()).count();
        masked as f64 / self.rows.len() as f64
    }

    /// Row with the smallest defined value, if any point was defined.
    pub fn min_row(&self) -> Option<&ScanRow> {
        self.rows
            .iter()
            .filter(|r| r.value.is_some())
            .min_by(|a, b| a.value.unwrap().total_cmp(&b.value.unwrap()))
    }
}

/// Second-order type of a stationary point, by Hessian eigenvalue signs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    LocalMin,
    LocalMax,
    Saddle,
    /// Smallest |eigenvalue| below the relative singularity tolerance; the
    /// second-order test is inconclusive.
    Degenerate,
}

/// A refined, verified stationary point of an objective.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryPoint {
    pub policy: Policy,
    pub value: f64,
    /// Independently re-evaluated gradient norm; always below 1e-8.
    pub grad_norm: f64,
    /// Hessian eigenvalues, ascending.
    pub hessian_eigs: Vec<f64>,
    pub kind: PointKind,
}

/// Everything a landscape pass learns about an objective over one box.
#[derive(Clone, Debug, Serialize)]
pub struct LandscapeReport {
    /// The compact box the analysis is relative to.
    pub scan_box: ScanGrid,
    /// All verified stationary points found, ordered by position.
    pub points: Vec<StationaryPoint>,
    /// Smallest local-minimum value.
    pub global_min_value: f64,
    /// Largest local-minimum value minus the smallest: zero means every
    /// found local minimum is global.
    pub epsilon_gap: f64,
    /// No degenerate stationary points were found (all Hessians
    /// non-singular at the reported tolerance).
    pub assumption1_ok: bool,
    /// Share of the dense scan where the objective was undefined.
    pub masked_fraction: f64,
}

impl LandscapeReport {
    /// Whether the gap is negligible relative to the global minimum.
    pub fn is_global(&self) -> bool {
        self.epsilon_gap <= tol::GLOBALITY_REL_TOL * 1.0f64.max(self.global_min_value.abs())
    }

    pub fn local_minima(&self) -> impl Iterator<Item = &StationaryPoint> {
        self.points
            .iter()
            .filter(|p| p.kind == PointKind::LocalMin)
    }
}

/// Result of [`epsilon_globality`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GlobalityCheck {
    pub global_min_value: f64,
    /// Max local-minimum value minus min local-minimum value.
    pub epsilon_gap: f64,
    /// `epsilon_gap <= 1e-6 * max(1, |global_min_value|)`.
    pub is_global: bool,
}

/// Result of [`check_assumption1`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Assumption1Check {
    /// No stationary point in the box has a (numerically) singular Hessian.
    pub ok: bool,
    /// Smallest |det| of a stationary-point Hessian; `+inf` when no
    /// stationary points were found.
    pub min_abs_hessian_det: f64,
}

/// Evaluates the objective at every grid point. Restricted to boxes with
/// at most two axes — dense scans above that are both unaffordable and
/// unreadable; use the seeded stationary-point search instead.
pub fn grid_scan<O: Objective + ?Sized>(objective: &O, grid: &ScanGrid) -> Result<ScanTable> {
    check_grid_dims(objective, grid)?;
    if grid.axes() > 2 {
        return Err(Error::InvalidParameter(format!(
            "dense scans support at most 2 policy entries, got {}",
            grid.axes()
        )));
    }
    let rows = (0..grid.len())
        .map(|i| {
            let policy = grid.point(i);
            let value = objective.value(&policy).filter(|v| v.is_finite());
            ScanRow { policy, value }
        })
        .collect();
    Ok(ScanTable {
        grid: grid.clone(),
        rows,
    })
}

/// Finds and classifies stationary points of `objective` inside `grid`'s
/// box by damped-Newton iteration on the gradient from many starts:
/// grid-local minima of the gradient norm, plus `extra_seeds` uniformly
/// placed starts (random above two axes, deterministic either way).
///
/// Guarantees on every returned point: re-evaluated gradient norm below
/// `1e-8`, at least `1e-4` clear of the masked region along every axis,
/// inside the box, pairwise separated by more than `1e-6`. Completeness is
/// empirical — seed densely for small boxes.
pub fn find_stationary_points<O: Objective + ?Sized>(
    objective: &O,
    grid: &ScanGrid,
    extra_seeds: usize,
    newton_tol: f64,
) -> Result<Vec<StationaryPoint>> {
    check_grid_dims(objective, grid)?;
    if newton_tol.is_nan() || newton_tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "Newton tolerance must be positive".into(),
        ));
    }
    let mut seeds: Vec<Policy> = Vec::new();
    if grid.axes() <= 2 {
        seeds.extend(grad_norm_local_minima(objective, grid));
    }
    seeds.extend(uniform_seeds(grid, extra_seeds));

    // Refine every seed, keeping the best-converged representative of each
    // cluster.
    let mut candidates: Vec<(Policy, f64)> = Vec::new();
    for seed in &seeds {
        if let Some(hit) = newton_refine(objective, seed, grid, newton_tol) {
            candidates.push(hit);
        }
    }
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut merged: Vec<(Policy, f64)> = Vec::new();
    for (w, gnorm) in candidates {
        let dup = merged
            .iter()
            .any(|(kept, _)| (kept.to_vec() - w.to_vec()).norm() <= tol::MERGE_RADIUS);
        if !dup {
            merged.push((w, gnorm));
        }
    }

    let mut points = Vec::new();
    for (w, _) in merged {
        if !clear_of_masked_boundary(objective, &w) {
            continue;
        }
        let Some(value) = objective.value(&w) else {
            continue;
        };
        // Independent re-check of first-order stationarity.
        let Some(grad) = objective.gradient(&w) else {
            continue;
        };
        let grad_norm = grad.norm();
        if grad_norm >= tol::STATIONARY_GRAD_TOL {
            continue;
        }
        let Some(hess) = objective.hessian(&w) else {
            continue;
        };
        let mut eigs: Vec<f64> = hess.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        points.push(StationaryPoint {
            kind: classify(&eigs),
            policy: w,
            value,
            grad_norm,
            hessian_eigs: eigs,
        });
    }
    points.sort_by(|a, b| {
        let (va, vb) = (a.policy.to_vec(), b.policy.to_vec());
        va.iter()
            .zip(vb.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(points)
}

/// How far every found local minimum is from being global.
///
/// Errors with [`Error::NoLocalMinima`] when the list has no local minima —
/// the search was insufficient, not the landscape empty.
pub fn epsilon_globality(points: &[StationaryPoint]) -> Result<GlobalityCheck> {
    let minima: Vec<&StationaryPoint> = points
        .iter()
        .filter(|p| p.kind == PointKind::LocalMin)
        .collect();
    if minima.is_empty() {
        return Err(Error::NoLocalMinima);
    }
    let lowest = minima
        .iter()
        .map(|p| p.value)
        .fold(f64::INFINITY, f64::min);
    let highest = minima
        .iter()
        .map(|p| p.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let epsilon_gap = highest - lowest;
    Ok(GlobalityCheck {
        global_min_value: lowest,
        epsilon_gap,
        is_global: epsilon_gap <= tol::GLOBALITY_REL_TOL * 1.0f64.max(lowest.abs()),
    })
}

/// Verifies that every stationary point found in the box has a
/// non-singular Hessian (no degenerate second-order structure).
///
/// Runs the stationary-point search at a tighter-than-default Newton
/// tolerance so that near-degenerate structure is resolved rather than
/// blurred by the termination radius.
pub fn check_assumption1<O: Objective + ?Sized>(
    objective: &O,
    grid: &ScanGrid,
    extra_seeds: usize,
) -> Result<Assumption1Check> {
    let points = find_stationary_points(objective, grid, extra_seeds, tol::NEWTON_TOL * 1e-2)?;
    let ok = !points.iter().any(|p| p.kind == PointKind::Degenerate);
    let min_abs_hessian_det = points
        .iter()
        .map(|p| p.hessian_eigs.iter().map(|e| e.abs()).product::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(Assumption1Check {
        ok,
        min_abs_hessian_det,
    })
}

/// Builds the family of tasks sharing `base`'s dynamics with costs scaled
/// by each entry of `scales` — tasks identical up to a positive cost
/// multiple.
pub fn make_scaled_taskset(base: &LqrTask, scales: &[f64], weights: &[f64]) -> Result<TaskSet> {
    let tasks = scales
        .iter()
        .map(|s| base.scaled_cost(*s))
        .collect::<Result<Vec<_>>>()?;
    TaskSet::new(tasks, weights.to_vec())
}

/// Robustness sweep: `trials` times, draw `k` nearby tasks (every entry of
/// `A, B, Q, R` perturbed by independent uniform noise in
/// `[-delta/4, delta/4]`, symmetric matrices perturbed symmetrically,
/// `Sigma0` untouched), build their uniform-weight meta-objective, and
/// analyze its landscape over `grid`. Draws that break task validity
/// (losing stabilizability, definiteness) are rejected and retried, at most
/// [`tol::REJECTION_BUDGET`] times per task. Deterministic given `seed`.
pub fn perturb_sweep(
    base: &LqrTask,
    delta: f64,
    k: usize,
    trials: usize,
    seed: u64,
    cfg: &MamlConfig,
    grid: &ScanGrid,
) -> Result<Vec<LandscapeReport>> {
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "perturbation radius must be finite and >= 0, got {delta}"
        )));
    }
    if k == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "sweep needs at least one task and one trial".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut tasks = Vec::with_capacity(k);
        for _ in 0..k {
            tasks.push(draw_perturbed(base, delta, &mut rng)?);
        }
        let tasks = TaskSet::uniform(tasks)?;
        let objective = MamlObjective::new(&tasks, cfg);
        reports.push(analyze(&objective, grid, DEFAULT_SEED_COUNT)?);
    }
    Ok(reports)
}

fn draw_perturbed(base: &LqrTask, delta: f64, rng: &mut ChaCha8Rng) -> Result<LqrTask> {
    let half_width = delta / 4.0;
    for _ in 0..tol::REJECTION_BUDGET {
        let a = perturb_full(base.a(), half_width, rng);
        let b = perturb_full(base.b(), half_width, rng);
        let q = perturb_symmetric(base.q(), half_width, rng);
        let r = perturb_symmetric(base.r(), half_width, rng);
        if let Ok(task) = LqrTask::new(a, b, q, r, base.sigma0().clone()) {
            return Ok(task);
        }
    }
    Err(Error::RejectionBudgetExhausted)
}

fn perturb_full(m: &DMatrix<f64>, half_width: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if half_width == 0.0 {
        return m.clone();
    }
    m.map(|x| x + rng.random_range(-half_width..=half_width))
}

fn perturb_symmetric(m: &DMatrix<f64>, half_width: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if half_width == 0.0 {
        return m.clone();
    }
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let noise = rng.random_range(-half_width..=half_width);
            out[(i, j)] += noise;
            if i != j {
                out[(j, i)] += noise;
            }
        }
    }
    out
}

/// Minimizer of the weighted average of plain task costs over the box.
///
/// Errors with [`Error::NoStabilizingRegion`] when the average cost is
/// undefined on the whole grid, and [`Error::NoLocalMinima`] when no
/// stationary minimum could be refined inside the box.
pub fn average_cost_argmin(tasks: &TaskSet, grid: &ScanGrid) -> Result<Policy> {
    let objective = AverageCost::new(tasks);
    if grid.axes() <= 2 {
        let table = grid_scan(&objective, grid)?;
        if table.rows.iter().all(|r| r.value.is_none()) {
            return Err(Error::NoStabilizingRegion);
        }
    }
    let points = find_stationary_points(&objective, grid, DEFAULT_SEED_COUNT, tol::NEWTON_TOL)?;
    points
        .into_iter()
        .filter(|p| p.kind == PointKind::LocalMin)
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .map(|p| p.policy)
        .ok_or(Error::NoLocalMinima)
}

/// Full landscape pass: dense scan (masked fraction), stationary points,
/// globality gap, and the non-degeneracy check, all over one box.
pub fn analyze<O: Objective + ?Sized>(
    objective: &O,
    grid: &ScanGrid,
    extra_seeds: usize,
) -> Result<LandscapeReport> {
    let masked_fraction = if grid.axes() <= 2 {
        grid_scan(objective, grid)?.masked_fraction()
    } else {
        // Above two axes estimate the masked share from random probes.
        let mut rng = ChaCha8Rng::seed_from_u64(0x6d61736b);
        let samples = 1000;
        let masked = (0..samples)
            .filter(|_| objective.value(&grid.random_point(&mut rng)).is_none())
            .count();
        masked as f64 / samples as f64
    };
    let points = find_stationary_points(objective, grid, extra_seeds, tol::NEWTON_TOL)?;
    let globality = epsilon_globality(&points)?;
    let assumption1_ok = !points.iter().any(|p| p.kind == PointKind::Degenerate);
    Ok(LandscapeReport {
        scan_box: grid.clone(),
        points,
        global_min_value: globality.global_min_value,
        epsilon_gap: globality.epsilon_gap,
        assumption1_ok,
        masked_fraction,
    })
}

fn check_grid_dims<O: Objective + ?Sized>(objective: &O, grid: &ScanGrid) -> Result<()> {
    let (r, d) = objective.dims();
    if grid.lo().nrows() != r || grid.lo().ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "grid box is {}x{}, objective wants {}x{}",
            grid.lo().nrows(),
            grid.lo().ncols(),
            r,
            d
        )));
    }
    Ok(())
}

/// Grid points whose gradient norm is a local minimum among their defined
/// grid neighbors: the cheap global sieve that seeds Newton.
fn grad_norm_local_minima<O: Objective + ?Sized>(
    objective: &O,
    grid: &ScanGrid,
) -> Vec<Policy> {
    let norms: Vec<Option<f64>> = (0..grid.len())
        .map(|i| objective.gradient(&grid.point(i)).map(|g| g.norm()))
        .collect();
    let res = grid.resolution();
    let neighbors = |idx: usize| -> Vec<usize> {
        if grid.axes() == 1 {
            let mut n = Vec::new();
            if idx > 0 {
                n.push(idx - 1);
            }
            if idx + 1 < res {
                n.push(idx + 1);
            }
            n
        } else {
            let (i, j) = (idx / res, idx % res);
            let mut n = Vec::new();
            if i > 0 {
                n.push((i - 1) * res + j);
            }
            if i + 1 < res {
                n.push((i + 1) * res + j);
            }
            if j > 0 {
                n.push(idx - 1);
            }
            if j + 1 < res {
                n.push(idx + 1);
            }
            n
        }
    };
    let mut seeds = Vec::new();
    for (idx, norm) in norms.iter().enumerate() {
        let Some(g) = norm else { continue };
        let mut strictly_below_one = false;
        let mut le_all = true;
        for nb in neighbors(idx) {
            if let Some(other) = norms[nb] {
                if *g > other {
                    le_all = false;
                    break;
                }
                if *g < other {
                    strictly_below_one = true;
                }
            }
        }
        if le_all && strictly_below_one {
            seeds.push(grid.point(idx));
        }
    }
    seeds
}

fn uniform_seeds(grid: &ScanGrid, count: usize) -> Vec<Policy> {
    if count == 0 {
        return Vec::new();
    }
    let axes = grid.axes();
    let lo = grid.lo().as_slice().to_vec();
    let hi = grid.hi().as_slice().to_vec();
    let (rows, cols) = (grid.lo().nrows(), grid.lo().ncols());
    match axes {
        1 => (0..count)
            .map(|i| {
                let t = (i as f64 + 0.5) / count as f64;
                Policy::from_vec(rows, cols, &[lo[0] + (hi[0] - lo[0]) * t])
            })
            .collect(),
        2 => {
            let per_axis = (count as f64).sqrt().ceil() as usize;
            let mut seeds = Vec::with_capacity(per_axis * per_axis);
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let t0 = (i as f64 + 0.5) / per_axis as f64;
                    let t1 = (j as f64 + 0.5) / per_axis as f64;
                    seeds.push(Policy::from_vec(
                        rows,
                        cols,
                        &[lo[0] + (hi[0] - lo[0]) * t0, lo[1] + (hi[1] - lo[1]) * t1],
                    ));
                }
            }
            seeds
        }
        _ => {
            // High-dimensional boxes get deterministic random starts.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..count).map(|_| grid.random_point(&mut rng)).collect()
        }
    }
}

/// Damped Newton iteration on the gradient from one start. Accepted steps
/// must shrink the gradient norm (sufficient decrease), so the returned
/// gradient norm never exceeds the seed's. Returns `None` when the start
/// stalls, diverges, leaves the box, or fails to reach the tolerance.
fn newton_refine<O: Objective + ?Sized>(
    objective: &O,
    seed: &Policy,
    grid: &ScanGrid,
    newton_tol: f64,
) -> Option<(Policy, f64)> {
    let (r, d) = objective.dims();
    let mut w = seed.clone();
    let mut grad = objective.gradient(&w)?;
    let mut gnorm = grad.norm();
    for _ in 0..tol::NEWTON_MAX_ITERS {
        if gnorm < newton_tol {
            return grid.contains(&w).then_some((w, gnorm));
        }
        let hess = objective.hessian(&w)?;
        let rhs = DVector::from_column_slice(grad.as_slice());
        let delta = hess.lu().solve(&(-rhs))?;
        if !delta.iter().all(|x| x.is_finite()) {
            return None;
        }
        let mut t = 1.0;
        let mut stepped = false;
        for _ in 0..=tol::NEWTON_MAX_HALVINGS {
            let cand = Policy::new(
                w.gain() + DMatrix::from_column_slice(r, d, delta.as_slice()) * t,
            );
            if let Some(g_cand) = objective.gradient(&cand) {
                let n_cand = g_cand.norm();
                if n_cand <= (1.0 - 1e-4 * t) * gnorm {
                    w = cand;
                    grad = g_cand;
                    gnorm = n_cand;
                    stepped = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !stepped {
            return None;
        }
    }
    (gnorm < newton_tol && grid.contains(&w)).then_some((w, gnorm))
}

/// A stationary point within `1e-4` of the masked region along any axis is
/// a numerical artifact of the blow-up there, not landscape structure.
fn clear_of_masked_boundary<O: Objective + ?Sized>(objective: &O, w: &Policy) -> bool {
    if objective.value(w).is_none() {
        return false;
    }
    let (r, d) = objective.dims();
    let base = w.to_vec();
    for i in 0..r * d {
        for sign in [-1.0, 1.0] {
            let mut probe = base.clone();
            probe[i] += sign * tol::BOUNDARY_EXCLUSION;
            if objective
                .value(&Policy::from_vec(r, d, probe.as_slice()))
                .is_none()
            {
                return false;
            }
        }
    }
    true
}

fn classify(eigs_ascending: &[f64]) -> PointKind {
    let max_abs = eigs_ascending
        .iter()
        .map(|e| e.abs())
        .fold(0.0f64, f64::max);
    let min_abs = eigs_ascending
        .iter()
        .map(|e| e.abs())
        .fold(f64::INFINITY, f64::min);
    if min_abs < tol::DEGENERACY_REL_TOL * 1.0f64.max(max_abs) {
        return PointKind::Degenerate;
    }
    let pos = eigs_ascending.iter().filter(|e| **e > 0.0).count();
    if pos == eigs_ascending.len() {
        PointKind::LocalMin
    } else if pos == 0 {
        PointKind::LocalMax
    } else {
        PointKind::Saddle
    }
}
