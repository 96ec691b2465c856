//! The linearized iteration `A[u](u⁺ − u) = −E'(u)` on a fixed mesh with
//! the energy-based stopping test `R_N(u^n) ≤ γ (E(u^0) − E(u^n))`.

use thiserror::Error;

use crate::fem::{Discretization, FeFunction, FemError};
use crate::linalg::{cg_solve_from, dual_norm_warm, SolveError, SparseSpd};
use crate::mesh::Mesh;
use crate::models::EnergyModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("linear solve failed in iteration {iteration}: {source}")]
    LinearSolve { iteration: usize, source: SolveError },
    #[error("dual norm evaluation failed in iteration {iteration}: {source}")]
    DualNorm { iteration: usize, source: SolveError },
    #[error("iterate became non-finite in iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Weight of the energy reduction in the stopping test.
    pub gamma: f64,
    pub max_iter: usize,
    pub cg_rel_tol: f64,
    /// CG iterations allowed per unknown.
    pub cg_iter_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { gamma: 1.0, max_iter: 100, cg_rel_tol: 1e-10, cg_iter_factor: 10 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SolverError::InvalidConfig { name: "gamma", value: self.gamma });
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol < 1.0) {
            return Err(SolverError::InvalidConfig { name: "cg_rel_tol", value: self.cg_rel_tol });
        }
        Ok(())
    }
}

/// Relative slack allowed when checking that an energy did not increase.
pub const ENERGY_SLACK: f64 = 1e-12;

/// Iteration history on one mesh. `energies[n]` and `residuals[n]` belong
/// to the iterate `u^n`.
#[derive(Debug, Clone)]
pub struct LevelState {
    pub mesh: Mesh,
    pub u: FeFunction,
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Steps whose energy rose by more than the allowed slack.
    pub monotonicity_violations: usize,
    gram: SparseSpd,
    dual_guess: Vec<f64>,
}

impl LevelState {
    pub fn new(model: &dyn EnergyModel, mesh: Mesh, u: FeFunction) -> Result<LevelState, SolverError> {
        let (energy, gram) = {
            let disc = Discretization::new(model, &mesh);
            (disc.energy(&u)?, disc.assemble_gram())
        };
        Ok(LevelState {
            mesh,
            u,
            energies: vec![energy],
            residuals: Vec::new(),
            converged: false,
            monotonicity_violations: 0,
            gram,
            dual_guess: Vec::new(),
        })
    }

    pub fn initial_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }

    /// Number of linearized steps taken.
    pub fn iterations(&self) -> usize {
        self.energies.len() - 1
    }

    /// `E(u^0) − E(u^n)` from the stored energies.
    pub fn energy_reduction(&self) -> f64 {
        self.initial_energy() - self.energy()
    }

    pub fn residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }

    pub fn gram(&self) -> &SparseSpd {
        &self.gram
    }
}

/// One step `u ← u + δ` with `A[u] δ = −r`. Returns the new iterate.
pub fn linearized_step(
    disc: &Discretization,
    u: &FeFunction,
    r: &[f64],
    config: &SolverConfig,
) -> Result<FeFunction, SolveError> {
    let a = disc.assemble_linearization(u).map_err(|_| SolveError::Dimension { expected: disc.num_dofs(), got: u.len() })?;
    let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
    let max_iter = config.cg_iter_factor * rhs.len().max(10);
    let delta = cg_solve_from(&a, &rhs, vec![0.0; rhs.len()], config.cg_rel_tol, max_iter)?.x;
    let mut next = u.clone();
    for (x, d) in next.coefficients_mut().iter_mut().zip(&delta) {
        *x += d;
    }
    Ok(next)
}

/// Iterates until the stopping test holds (never before the first step) or
/// `max_iter` steps were taken, in which case `converged` stays false.
pub fn run_level(model: &dyn EnergyModel, mut state: LevelState, config: &SolverConfig) -> Result<LevelState, SolverError> {
    config.validate()?;
    let LevelState { mesh, u, energies, residuals, converged, monotonicity_violations, gram, dual_guess } = &mut state;
    let disc = Discretization::new(model, mesh);
    loop {
        let n = energies.len() - 1;
        let r = disc.assemble_residual(u)?;
        let res = dual_norm_warm(&r, gram, dual_guess).map_err(|source| SolverError::DualNorm { iteration: n, source })?;
        residuals.push(res);
        let e_old = energies[n];
        if n > 0 && res <= config.gamma * (energies[0] - e_old) {
            *converged = true;
            break;
        }
        if n >= config.max_iter {
            break;
        }
        let next = linearized_step(&disc, u, &r, config).map_err(|source| SolverError::LinearSolve { iteration: n, source })?;
        if !next.is_finite() {
            return Err(SolverError::NonFinite { iteration: n });
        }
        let e_new = disc.energy(&next)?;
        if e_new > e_old + ENERGY_SLACK * (1.0 + e_old.abs()) {
            *monotonicity_violations += 1;
        }
        energies.push(e_new);
        *u = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{lshape_mesh, unit_square_mesh};
    use crate::models::{KacanovModel, SemilinearLogModel, SineGordonModel};

    #[test]
    fn first_step_on_one_dof_mesh() {
        let mesh = unit_square_mesh(2).unwrap();
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let disc = Discretization::new(&model, &mesh);
        let u0 = FeFunction::zeros(1);
        let r = disc.assemble_residual(&u0).unwrap();
        let u1 = linearized_step(&disc, &u0, &r, &SolverConfig::default()).unwrap();
        assert!((u1.coefficients()[0] - 1.0 / 17.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_is_kept() {
        let mesh = unit_square_mesh(2).unwrap();
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let disc = Discretization::new(&model, &mesh);
        let u = FeFunction::new(vec![0.3]);
        let u1 = linearized_step(&disc, &u, &[0.0], &SolverConfig::default()).unwrap();
        assert_eq!(u1, u);
    }

    #[test]
    fn level_runs_stop_soundly() {
        let models: Vec<(Box<dyn EnergyModel>, Mesh)> = vec![
            (Box::new(SemilinearLogModel::new(1.0, 2.0).unwrap()), unit_square_mesh(8).unwrap()),
            (Box::new(SineGordonModel::new(0.25).unwrap()), unit_square_mesh(4).unwrap()),
            (Box::new(KacanovModel::new(1.0).unwrap()), lshape_mesh(4).unwrap()),
        ];
        for (model, mesh) in models {
            let n = mesh.num_interior_vertices();
            let state = LevelState::new(model.as_ref(), mesh, FeFunction::zeros(n)).unwrap();
            let cfg = SolverConfig::default();
            let out = run_level(model.as_ref(), state, &cfg).unwrap();
            assert!(out.converged, "{:?}", model.kind());
            assert!(out.iterations() >= 1);
            assert_eq!(out.monotonicity_violations, 0);
            assert!(out.residual().unwrap() <= cfg.gamma * out.energy_reduction());
            for w in out.energies.windows(2) {
                assert!(w[1] <= w[0] + ENERGY_SLACK * (1.0 + w[0].abs()));
            }
            assert_eq!(out.residuals.len(), out.energies.len());
        }
    }

    #[test]
    fn residual_minimum_decreases_on_fixed_mesh() {
        let mesh = unit_square_mesh(6).unwrap();
        let model = SineGordonModel::new(0.25).unwrap();
        let n = mesh.num_interior_vertices();
        let state = LevelState::new(&model, mesh, FeFunction::zeros(n)).unwrap();
        // a tiny weight forces the full iteration budget
        let cfg = SolverConfig { gamma: 1e-30, max_iter: 50, ..SolverConfig::default() };
        let out = run_level(&model, state, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations(), 50);
        let first = out.residuals[0];
        let last_min = out.residuals.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(last_min < 1e-6 * first, "{first} -> {last_min}");
    }

    #[test]
    fn rejects_bad_gamma() {
        let mesh = unit_square_mesh(2).unwrap();
        let model = SemilinearLogModel::new(1.0, 2.0).unwrap();
        let state = LevelState::new(&model, mesh, FeFunction::zeros(1)).unwrap();
        let cfg = SolverConfig { gamma: 0.0, ..SolverConfig::default() };
        assert!(matches!(run_level(&model, state, &cfg), Err(SolverError::InvalidConfig { .. })));
    }
}
