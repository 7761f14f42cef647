//! Experiment configuration: strict JSON schema, compiled-in figure
//! presets, and conversion into library types.
//!
//! Configs are deliberately scalar-only (state and input dimension one):
//! every shipped experiment lives there, and keeping the schema flat makes
//! configs diffable and hashable. The library itself handles matrix tasks.

use maml_lqr::maml::Variant;
use maml_lqr::{LqrTask, MamlConfig, ScanGrid, TaskSet};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A scalar task as `(a, b, q, r, s0)`: dynamics, input gain, state cost,
/// input cost, initial second moment.
pub type TaskParams = [f64; 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Human-readable label; preset name for shipped experiments.
    pub name: String,
    pub tasks: Vec<TaskParams>,
    /// Task weights; uniform when omitted.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Inner adaptation step size.
    pub eta: f64,
    /// Outer training step size.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub grid: GridSpec,
    /// Extra uniformly placed starts for the stationary-point search.
    #[serde(default = "default_extra_seeds")]
    pub extra_seeds: usize,
    /// RNG seed for sampled training and perturbation sweeps.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    /// Initial scalar gain.
    pub init: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub value_blowup: f64,
    /// Replace the fixed outer step with backtracking line search.
    #[serde(default)]
    pub line_search: bool,
    /// Tasks sampled per iteration; full batch when omitted.
    #[serde(default)]
    pub batch: Option<usize>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            init: 0.9,
            grad_tol: maml_lqr::tol::DEFAULT_GRAD_TOL,
            max_iter: maml_lqr::tol::DEFAULT_MAX_ITERS,
            value_blowup: maml_lqr::tol::DEFAULT_VALUE_BLOWUP,
            line_search: false,
            batch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Perturbation diameter; entries move by at most `delta / 4`.
    pub delta: f64,
    /// Tasks drawn per trial.
    pub k: usize,
    pub trials: usize,
    /// Task the perturbations are drawn around; first config task when
    /// omitted.
    #[serde(default)]
    pub base: Option<TaskParams>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            delta: 0.04,
            k: 5,
            trials: 20,
            base: None,
        }
    }
}

fn default_beta() -> f64 {
    maml_lqr::tol::DEFAULT_META_STEP
}

fn default_variant() -> Variant {
    Variant::Vanilla
}

fn default_extra_seeds() -> usize {
    32
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn build_taskset(&self) -> Result<TaskSet, CliError> {
        let tasks = self
            .tasks
            .iter()
            .map(|[a, b, q, r, s0]| LqrTask::scalar(*a, *b, *q, *r, *s0))
            .collect::<maml_lqr::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(format!("bad task: {e}")))?;
        match &self.weights {
            Some(w) => TaskSet::new(tasks, w.clone()),
            None => TaskSet::uniform(tasks),
        }
        .map_err(|e| CliError::Config(format!("bad task set: {e}")))
    }

    pub fn build_maml_config(&self) -> Result<MamlConfig, CliError> {
        MamlConfig::new(self.eta, self.beta, self.variant)
            .map_err(|e| CliError::Config(format!("bad adaptation config: {e}")))
    }

    pub fn build_grid(&self) -> Result<ScanGrid, CliError> {
        ScanGrid::scalar(self.grid.lo, self.grid.hi, self.grid.resolution)
            .map_err(|e| CliError::Config(format!("bad grid: {e}")))
    }

    pub fn sweep_base(&self) -> Result<LqrTask, CliError> {
        let [a, b, q, r, s0] = self
            .sweep
            .base
            .or_else(|| self.tasks.first().copied())
            .ok_or_else(|| CliError::Config("sweep needs a base task".into()))?;
        LqrTask::scalar(a, b, q, r, s0)
            .map_err(|e| CliError::Config(format!("bad sweep base task: {e}")))
    }
}

pub const PRESET_NAMES: [&str; 6] = ["fig1", "fig2", "fig3a", "fig3b", "fig3c", "fig3d"];

/// The shipped experiment presets. Each compiles the full parameter list
/// for one figure of the reproduction suite, so every experiment runs with
/// zero external files.
pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let base = |name: &str, tasks: Vec<TaskParams>, eta: f64, grid: GridSpec| ExperimentConfig {
        name: name.to_string(),
        tasks,
        weights: None,
        eta,
        beta: default_beta(),
        variant: Variant::Vanilla,
        grid,
        extra_seeds: default_extra_seeds(),
        seed: 0,
        train: TrainSpec::default(),
        sweep: SweepSpec::default(),
    };
    let wide = GridSpec {
        lo: 0.01,
        hi: 1.99,
        resolution: 2001,
    };
    match name {
        // Single task: the meta-objective folds its own basin into three
        // tied minima.
        "fig1" => Ok(base(
            "fig1",
            vec![[1.0, 1.0, 2.0, 2.0, 1.0]],
            0.01,
            GridSpec {
                lo: 0.01,
                hi: 1.99,
                resolution: 10000,
            },
        )),
        // The same task plus a 0.05-scaled copy: spurious minima appear.
        "fig2" => Ok(base(
            "fig2",
            vec![[1.0, 1.0, 2.0, 2.0, 1.0], [1.0, 1.0, 0.1, 0.1, 1.0]],
            0.01,
            wide,
        )),
        // Four tasks, each moving one parameter of (1,1,1,1,1) by about
        // 0.01; scanned over the central basin.
        "fig3a" => Ok(base(
            "fig3a",
            vec![
                [1.01, 1.0, 1.0, 1.0, 1.0],
                [1.0, 1.01, 1.0, 1.0, 1.0],
                [1.0, 1.0, 1.01, 1.0, 1.0],
                [0.99, 1.0, 1.0, 1.0, 1.0],
            ],
            0.01,
            GridSpec {
                lo: 0.35,
                hi: 0.90,
                resolution: 2001,
            },
        )
        .with_sweep_base([1.0, 1.0, 1.0, 1.0, 1.0])),
        // Two genuinely different tasks under a large adaptation step.
        "fig3b" => Ok(base(
            "fig3b",
            vec![[1.0, 1.0, 1.0, 2.0, 1.0], [1.0, 1.0, 2.0, 1.0, 1.0]],
            0.1,
            wide,
        )),
        // Five spread-out tasks.
        "fig3c" => Ok(base(
            "fig3c",
            vec![
                [1.0, 1.0, 1.0, 1.0, 1.0],
                [1.0, 1.0, 1.0, 2.0, 1.0],
                [1.0, 1.0, 2.0, 1.0, 1.0],
                [1.0, 1.0, 2.0, 3.0, 1.0],
                [1.0, 1.0, 3.0, 2.0, 1.0],
            ],
            0.1,
            wide,
        )),
        // Eleven tasks sharing dynamics: the meta-optimum approaches the
        // average-cost optimum.
        "fig3d" => Ok(base(
            "fig3d",
            vec![
                [1.0, 1.0, 1.0, 1.0, 1.0],
                [1.0, 1.0, 1.0, 2.0, 1.0],
                [1.0, 1.0, 2.0, 1.0, 1.0],
                [1.0, 1.0, 2.0, 3.0, 1.0],
                [1.0, 1.0, 3.0, 2.0, 1.0],
                [1.0, 1.0, 3.0, 1.0, 1.0],
                [1.0, 1.0, 1.0, 3.0, 1.0],
                [1.0, 1.0, 4.0, 1.0, 1.0],
                [1.0, 1.0, 1.0, 4.0, 1.0],
                [1.0, 1.0, 5.0, 3.0, 1.0],
                [1.0, 1.0, 3.0, 5.0, 1.0],
            ],
            0.1,
            wide,
        )),
        other => Err(CliError::Config(format!(
            "unknown preset {other:?}; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl ExperimentConfig {
    fn with_sweep_base(mut self, base: TaskParams) -> Self {
        self.sweep.base = Some(base);
        self
    }
}
