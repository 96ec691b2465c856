//! The adaptive loop: solve on a level, estimate, mark, refine, carry the
//! iterate over. Produces one record per level.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptivity::{compute_indicators, dorfler_mark, refine_step, AdaptivityError, IndicatorOptions};
use crate::fem::{Discretization, FeFunction, FemError};
use crate::mesh::{lshape_mesh, unit_square_mesh, Mesh, MeshError};
use crate::models::{make_model, EnergyModel, ModelError, ModelKind, ModelParams};
use crate::solver::{run_level, LevelState, SolverConfig, SolverError, ENERGY_SLACK};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("level {level}: {source}")]
    Solver { level: usize, source: SolverError },
    #[error("level {level}: {source}")]
    Adaptivity { level: usize, source: AdaptivityError },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

fn default_theta() -> f64 {
    0.4
}
fn default_gamma() -> f64 {
    1.0
}
fn default_max_dof() -> usize {
    30_000
}
fn default_max_levels() -> usize {
    100
}
fn default_initial_n() -> usize {
    8
}
fn default_max_iter() -> usize {
    100
}

/// Run settings. Model parameters that do not apply to the chosen model are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Stop once a level has at least this many unknowns.
    #[serde(default = "default_max_dof")]
    pub max_dof: usize,
    /// Maximal number of refinements.
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Subdivisions per unit length of the initial mesh.
    #[serde(default = "default_initial_n")]
    pub initial_n: usize,
    #[serde(default)]
    pub local_only: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_nu() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    2.0
}

impl RunConfig {
    /// Settings of the reference experiment for a model.
    pub fn reference(model: ModelKind) -> RunConfig {
        let initial_n = match model {
            ModelKind::SemilinearLog => 8,
            ModelKind::SineGordon | ModelKind::Kacanov => 4,
        };
        RunConfig {
            model,
            nu: 1.0,
            eta: 2.0,
            alpha: None,
            theta: 0.4,
            gamma: 1.0,
            max_dof: 30_000,
            max_levels: 100,
            initial_n,
            local_only: false,
            max_iter: 100,
            out: None,
            jobs: None,
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn params(&self) -> ModelParams {
        let defaults = ModelParams::defaults(self.model);
        ModelParams { nu: self.nu, eta: self.eta, alpha: self.alpha.unwrap_or(defaults.alpha) }
    }

    pub fn build_model(&self) -> Result<Box<dyn EnergyModel>, RunError> {
        Ok(make_model(self.model, self.params())?)
    }

    /// Unit square for the semilinear models, L-shape for the quasilinear one.
    pub fn initial_mesh(&self) -> Result<Mesh, RunError> {
        Ok(match self.model {
            ModelKind::SemilinearLog | ModelKind::SineGordon => unit_square_mesh(self.initial_n)?,
            ModelKind::Kacanov => lshape_mesh(self.initial_n)?,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { gamma: self.gamma, max_iter: self.max_iter, ..SolverConfig::default() }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(RunError::Config(format!("theta = {} must lie in (0, 1)", self.theta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(RunError::Config(format!("gamma = {} must be positive", self.gamma)));
        }
        if self.jobs == Some(0) {
            return Err(RunError::Config("jobs must be at least 1".into()));
        }
        self.build_model()?;
        let dofs = self.initial_mesh()?.num_interior_vertices();
        if self.max_dof < dofs {
            return Err(RunError::Config(format!("max_dof = {} is below the initial {dofs} unknowns", self.max_dof)));
        }
        Ok(())
    }
}

/// Per-level results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub dof: usize,
    pub elements: usize,
    /// Dual norm of the residual of the final iterate.
    pub residual: f64,
    /// `E(u^0) − E(u^{n*})` on this level.
    pub delta_e: f64,
    pub energy: f64,
    pub n_star: usize,
    pub converged: bool,
    pub h1_error: Option<f64>,
    pub rate_r: Option<f64>,
    pub ratio_e: Option<f64>,
    pub wall_ms: f64,
    /// Energies of all iterates on the level.
    pub energies: Vec<f64>,
    pub monotonicity_violations: usize,
    /// Smallest indicator before clamping; absent on the last level.
    pub indicator_min: Option<f64>,
    pub degenerate_patches: usize,
    pub marked: usize,
    pub forced_marking: bool,
}

/// Fills the rates of each record from its predecessor. Returns how many
/// rates had to be left out because of vanishing denominators.
pub fn compute_rates(records: &mut [LevelRecord]) -> usize {
    let mut omitted = 0;
    if let Some(first) = records.first_mut() {
        first.rate_r = None;
        first.ratio_e = None;
    }
    for i in 1..records.len() {
        let (prev, cur) = (&records[i - 1], &records[i]);
        let growth = (cur.dof as f64 / prev.dof as f64).ln();
        let rate_r = if growth != 0.0 && prev.residual > 0.0 && cur.residual > 0.0 {
            Some((prev.residual / cur.residual).ln() / growth)
        } else {
            omitted += 1;
            None
        };
        let ratio_e = if prev.delta_e != 0.0 {
            Some(cur.delta_e / prev.delta_e)
        } else {
            omitted += 1;
            None
        };
        records[i].rate_r = rate_r;
        records[i].ratio_e = ratio_e;
    }
    omitted
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub records: Vec<LevelRecord>,
    pub mesh: Mesh,
    pub u: FeFunction,
    /// Indicators of the last estimated mesh (the second to last level).
    pub last_indicators: Option<(Mesh, Vec<f64>)>,
    /// Outer energies that rose across levels beyond the allowed slack.
    pub outer_violations: usize,
}

impl RunOutcome {
    /// Any level stopped without meeting the stopping test.
    pub fn has_unconverged_level(&self) -> bool {
        self.records.iter().any(|r| !r.converged)
    }
}

pub fn ailfem_run(config: &RunConfig) -> Result<RunOutcome, RunError> {
    ailfem_run_with(config, |_| {})
}

/// Runs the adaptive loop, calling `on_level` after every level.
pub fn ailfem_run_with(config: &RunConfig, on_level: impl FnMut(&LevelRecord) + Send) -> Result<RunOutcome, RunError> {
    config.validate()?;
    match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| RunError::ThreadPool(e.to_string()))?
            .install(|| run_loop(config, on_level)),
        None => run_loop(config, on_level),
    }
}

fn run_loop(config: &RunConfig, mut on_level: impl FnMut(&LevelRecord)) -> Result<RunOutcome, RunError> {
    let model = config.build_model()?;
    let model = model.as_ref();
    let solver = config.solver_config();
    let options = IndicatorOptions { local_only: config.local_only, ..IndicatorOptions::default() };
    let mut mesh = config.initial_mesh()?;
    let mut u = FeFunction::zeros(mesh.num_interior_vertices());
    let mut records: Vec<LevelRecord> = Vec::new();
    let mut last_indicators = None;
    let mut outer_violations = 0;

    for level in 0.. {
        let start = Instant::now();
        let state = LevelState::new(model, mesh, u).map_err(|source| RunError::Solver { level, source })?;
        let state = run_level(model, state, &solver).map_err(|source| RunError::Solver { level, source })?;
        let disc = Discretization::new(model, &state.mesh);
        let h1_error = match model.exact_solution() {
            Some(_) => Some(disc.h1_error(&state.u)?),
            None => None,
        };
        let mut record = LevelRecord {
            level,
            dof: disc.num_dofs(),
            elements: state.mesh.num_elements(),
            residual: state.residual().unwrap_or(0.0),
            delta_e: state.energy_reduction(),
            energy: state.energy(),
            n_star: state.iterations(),
            converged: state.converged,
            h1_error,
            rate_r: None,
            ratio_e: None,
            wall_ms: 0.0,
            energies: state.energies.clone(),
            monotonicity_violations: state.monotonicity_violations,
            indicator_min: None,
            degenerate_patches: 0,
            marked: 0,
            forced_marking: false,
        };
        if let Some(prev) = records.last() {
            if record.energy > prev.energy + ENERGY_SLACK * (1.0 + prev.energy.abs()) {
                outer_violations += 1;
            }
        }

        let done = level >= config.max_levels || record.dof >= config.max_dof;
        if done {
            record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            records.push(record);
            compute_rates(&mut records);
            on_level(records.last().expect("just pushed"));
            drop(disc);
            return Ok(RunOutcome {
                config: config.clone(),
                records,
                mesh: state.mesh,
                u: state.u,
                last_indicators,
                outer_violations,
            });
        }

        let field = compute_indicators(&disc, &state.u, &options).map_err(|source| RunError::Adaptivity { level, source })?;
        let marking = dorfler_mark(&field.values, config.theta).map_err(|source| RunError::Adaptivity { level, source })?;
        let (fine, v) =
            refine_step(&state.mesh, &state.u, &marking.elements).map_err(|source| RunError::Adaptivity { level, source })?;
        record.indicator_min = Some(field.raw_min);
        record.degenerate_patches = field.degenerate;
        record.marked = marking.elements.len();
        record.forced_marking = marking.forced;
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(record);
        compute_rates(&mut records);
        on_level(records.last().expect("just pushed"));
        drop(disc);
        last_indicators = Some((state.mesh, field.values));
        mesh = fine;
        u = v;
    }
    unreachable!("the level loop only exits by returning")
}
