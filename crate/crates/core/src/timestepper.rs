//! Time loop of the scheme.
//!
//! Every step rebuilds the active mesh at `tₙ`, moves the previous solution
//! onto it, assembles and solves. The previous solution is only ever read on
//! cells meeting `Ω^n`, which the `δ`-strip of the previous step covers.

use std::path::PathBuf;
use std::sync::Arc;

use crate::fespace::{interpolate, transfer, FEFunction, FESpace};
use crate::forms::{assemble_operators, assemble_rhs, FormParams};
use crate::geometry::{build_active_mesh, delta_default, ActiveMesh, CellClass};
use crate::linalg::{solve, SolverOptions};
use crate::manufactured::{ManufacturedProblem, ProblemId};
use crate::mesh::build_uniform_mesh;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemId,
    /// Subdivisions per side of the background mesh.
    pub n: usize,
    pub dt: f64,
    pub t_max: f64,
    pub degree: usize,
    pub gamma_d: f64,
    pub gamma_g: f64,
    /// `None` means `4Δt`.
    pub delta: Option<f64>,
    pub solver_tol: f64,
    /// Squared radius of the traveling circle.
    pub r2: f64,
    pub vtk_dir: Option<PathBuf>,
}

/// Nitsche penalty used when none is configured.
pub fn default_gamma_d(degree: usize) -> f64 {
    if degree >= 2 {
        10.0
    } else {
        1.0
    }
}

pub const DEFAULT_GAMMA_G: f64 = 1e-3;
pub const DEFAULT_R2: f64 = 0.09;

impl RunConfig {
    pub fn new(problem: ProblemId, n: usize, dt: f64, degree: usize) -> Self {
        Self {
            problem,
            n,
            dt,
            t_max: 0.1,
            degree,
            gamma_d: default_gamma_d(degree),
            gamma_g: DEFAULT_GAMMA_G,
            delta: None,
            solver_tol: 1e-10,
            r2: DEFAULT_R2,
            vtk_dir: None,
        }
    }

    pub fn delta(&self) -> Result<f64> {
        match self.delta {
            Some(d) => Ok(d),
            None => delta_default(self.dt),
        }
    }

    /// Number of time steps, `t_max/Δt` rounded.
    pub fn num_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::invalid(format!("t_max must be positive, got {}", self.t_max)));
        }
        let ratio = self.t_max / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::invalid(format!(
                "t_max = {} is not an integer multiple of dt = {}",
                self.t_max, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self, problem: &ManufacturedProblem) -> Result<usize> {
        let steps = self.num_steps()?;
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if !(1..=2).contains(&self.degree) {
            return Err(Error::invalid(format!("degree must be 1 or 2, got {}", self.degree)));
        }
        FormParams::new(self.gamma_d, self.gamma_g, self.dt, 1.0)?;
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        let delta = self.delta()?;
        if !(delta >= problem.w_max() * self.dt) {
            return Err(Error::invalid(format!(
                "delta = {delta} is below w_max*dt = {}",
                problem.w_max() * self.dt
            )));
        }
        if self.t_max > problem.t_max * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "t_max = {} exceeds the problem's interval [0, {}]",
                self.t_max, problem.t_max
            )));
        }
        Ok(steps)
    }

    pub fn problem(&self) -> Result<ManufacturedProblem> {
        ManufacturedProblem::from_id(self.problem, self.r2)
    }
}

/// Diagnostics and solution of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub solution: FEFunction,
    pub energy2: f64,
    /// `‖uₕⁿ‖_{L²(Ω^n)}`.
    pub l2_norm: f64,
    pub residual: f64,
    pub iterations: usize,
    pub active_cells: usize,
    pub active_dofs: usize,
    pub cut_cells: usize,
    pub zero_filled_dofs: usize,
    /// Cells meeting `Ω^n` whose previous-step values include a zero-filled
    /// DOF. Must stay zero.
    pub zero_filled_reads: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: RunConfig,
    pub problem: ManufacturedProblem,
    pub space: FESpace,
    /// `uₕ⁰`, living on the step-1 active mesh.
    pub initial: FEFunction,
    /// `‖uₕ⁰‖_{L²(Ω^1)}`.
    pub initial_l2: f64,
    pub steps: Vec<StepRecord>,
    /// Active mesh of step `k` at index `k − 1`.
    pub active_meshes: Vec<ActiveMesh>,
    /// Whether `Δt ≤ h²`.
    pub cfl_satisfied: bool,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn final_solution(&self) -> &FEFunction {
        self.steps.last().map(|s| &s.solution).unwrap_or(&self.initial)
    }

    /// `Δt·Σₖ energy²ₖ`.
    pub fn energy_sum(&self) -> f64 {
        self.config.dt * self.steps.iter().map(|s| s.energy2).sum::<f64>()
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.residual))
    }

    pub fn max_l2_norm(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.l2_norm))
    }

    pub fn is_finite(&self) -> bool {
        std::iter::once(&self.initial)
            .chain(self.steps.iter().map(|s| &s.solution))
            .all(|u| u.coefficients.iter().all(|c| c.is_finite()))
            && self.steps.iter().all(|s| s.energy2.is_finite())
    }
}

/// `uₕ⁰`: nodal interpolant of `u0` on the step-1 active mesh.
pub fn initial_condition(space: &FESpace, active_1: &ActiveMesh, u0: impl Fn(Point) -> f64) -> FEFunction {
    interpolate(space, active_1, u0)
}

pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let problem = config.problem()?;
    run_problem(config, problem)
}

/// Runs `config` on an explicitly given problem; `config.problem` and
/// `config.r2` are ignored.
pub fn run_problem(config: &RunConfig, problem: ManufacturedProblem) -> Result<Trajectory> {
    let num_steps = config.validate(&problem)?;
    let delta = config.delta()?;
    let mesh = Arc::new(build_uniform_mesh(problem.bbox, config.n)?);
    let space = FESpace::new(mesh.clone(), config.degree)?;
    let params = FormParams::new(config.gamma_d, config.gamma_g, config.dt, mesh.h)?;
    let cfl_satisfied = config.dt <= mesh.h * mesh.h;
    if !cfl_satisfied {
        log::warn!(
            "dt = {} violates the parabolic CFL condition dt <= h^2 = {:.3e}; continuing",
            config.dt,
            mesh.h * mesh.h
        );
    }
    let solver = SolverOptions {
        tol: config.solver_tol,
        ..Default::default()
    };
    let f = |x: Point, t: f64| problem.f(x, t);
    let g = |x: Point, t: f64| problem.g_bc(x, t);

    let mut active_meshes: Vec<ActiveMesh> = Vec::with_capacity(num_steps);
    let mut steps: Vec<StepRecord> = Vec::with_capacity(num_steps);
    let mut initial = None;
    let mut initial_l2 = 0.0;
    let mut prev: Option<FEFunction> = None;

    for n in 1..=num_steps {
        let t = n as f64 * config.dt;
        let wrap = |e: Error| Error::Step {
            step: n,
            source: Box::new(e),
        };
        let active = build_active_mesh(&mesh, &problem.domain, n, t, delta, active_meshes.last())
            .map_err(wrap)?;
        let ops = assemble_operators(&active, &space, &problem.domain).map_err(wrap)?;
        let u_prev = match prev.take() {
            Some(p) => transfer(&space, &p, &active).map_err(wrap)?,
            None => {
                let u0 = initial_condition(&space, &active, |x| problem.u(x, 0.0));
                let local = ops.dofs.restrict(&u0.coefficients);
                initial_l2 = ops.mass.bilinear(&local, &local).max(0.0).sqrt();
                initial = Some(u0.clone());
                u0
            }
        };
        let zero_filled_reads = active
            .domain_cells()
            .filter(|&c| u_prev.touches_zero_filled(&space, c))
            .count();
        let rhs = assemble_rhs(&ops, &active, &space, &params, &problem.domain, &u_prev, &f, &g)
            .map_err(wrap)?;
        let matrix = ops.system_matrix(&params);
        let sol = solve(&matrix, &rhs, &solver).map_err(wrap)?;
        let up_local = ops.dofs.restrict(&u_prev.coefficients);
        let energy2 = ops.energy(&params, &sol.x, &up_local);
        let l2_norm = ops.mass.bilinear(&sol.x, &sol.x).max(0.0).sqrt();
        let mut u_n = FEFunction::zero(&space, &active);
        u_n.coefficients = ops.dofs.expand(&sol.x, space.ndofs());

        if let Some(dir) = &config.vtk_dir {
            let path = dir.join(format!("step_{n:04}.vtk"));
            crate::vtk::write_step(&path, &space, &active, &u_n, |x| problem.u(x, t)).map_err(wrap)?;
        }
        log::debug!(
            "step {n}: t = {t:.4}, {} dofs, {} iterations, residual {:.2e}",
            ops.dofs.len(),
            sol.iterations,
            sol.residual
        );
        steps.push(StepRecord {
            step: n,
            t,
            solution: u_n.clone(),
            energy2,
            l2_norm,
            residual: sol.residual,
            iterations: sol.iterations,
            active_cells: active.active_cells.len(),
            active_dofs: ops.dofs.len(),
            cut_cells: active.count(CellClass::Cut),
            zero_filled_dofs: u_prev.num_zero_filled(),
            zero_filled_reads,
        });
        active_meshes.push(active);
        prev = Some(u_n);
    }

    Ok(Trajectory {
        config: config.clone(),
        problem,
        space,
        initial: initial.expect("at least one step"),
        initial_l2,
        steps,
        active_meshes,
        cfl_satisfied,
    })
}
