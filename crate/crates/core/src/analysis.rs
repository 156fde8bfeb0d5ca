//! Error norms against the exact solution and fits of convergence orders.
//!
//! With `eᵏ = u(tₖ) − uₕᵏ` the reported norms are
//!
//! ```text
//! end-time L²   ‖e^N‖_{L²(Ω^N)}
//! L²(L²)        (Δt Σₖ ‖eᵏ‖²_{L²(Ωᵏ)})^{1/2}
//! L²(H¹_av)     (Δt Σₖ ‖∇eᵏ + ∇eᵏ⁻¹‖²_{L²(Ωᵏ)})^{1/2}
//! ```
//!
//! where `k` runs over `1..=N` and `e⁰` uses `uₕ⁰`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::fespace::FEFunction;
use crate::quadrature::{cell_geometry, map_to_triangle, reference_rule, triangle_area};
use crate::timestepper::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepError {
    pub t: f64,
    /// `‖eᵏ‖_{L²(Ωᵏ)}`.
    pub l2: f64,
    /// `‖∇eᵏ + ∇eᵏ⁻¹‖_{L²(Ωᵏ)}`.
    pub grad_avg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub dt: f64,
    pub end_time_l2: f64,
    pub l2l2: f64,
    pub l2h1av: f64,
    pub per_step: Vec<StepError>,
}

impl ErrorReport {
    pub fn from_steps(dt: f64, per_step: Vec<StepError>) -> Self {
        let l2l2 = (dt * per_step.iter().map(|s| s.l2 * s.l2).sum::<f64>()).sqrt();
        let l2h1av = (dt * per_step.iter().map(|s| s.grad_avg * s.grad_avg).sum::<f64>()).sqrt();
        Self {
            dt,
            end_time_l2: per_step.last().map_or(0.0, |s| s.l2),
            l2l2,
            l2h1av,
            per_step,
        }
    }

    pub fn value(&self, norm: Norm) -> f64 {
        match norm {
            Norm::EndTimeL2 => self.end_time_l2,
            Norm::L2L2 => self.l2l2,
            Norm::L2H1av => self.l2h1av,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    EndTimeL2,
    L2L2,
    L2H1av,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::EndTimeL2, Norm::L2L2, Norm::L2H1av];

    pub fn as_str(self) -> &'static str {
        match self {
            Norm::EndTimeL2 => "end_time_L2",
            Norm::L2L2 => "L2L2",
            Norm::L2H1av => "L2H1av",
        }
    }

    pub fn parse(s: &str) -> Option<Norm> {
        Norm::ALL.into_iter().find(|n| n.as_str() == s)
    }
}

/// Quadrature degree for error integrals of a degree-`m` space.
pub fn error_degree(m: usize) -> usize {
    2 * m + 2
}

pub fn error_norms(traj: &Trajectory) -> Result<ErrorReport> {
    let space = &traj.space;
    let problem = &traj.problem;
    let dt = traj.config.dt;
    let rule = reference_rule(error_degree(space.degree))?;
    let per_step: Vec<StepError> = (0..traj.steps.len())
        .into_par_iter()
        .map(|i| {
            let rec = &traj.steps[i];
            let active = &traj.active_meshes[i];
            let prev: &FEFunction = if i == 0 { &traj.initial } else { &traj.steps[i - 1].solution };
            let (t, t_prev) = (rec.t, rec.t - dt);
            let (mut l2, mut grad) = (0.0, 0.0);
            for cell in active.domain_cells() {
                let geo = cell_geometry(&space.mesh, &problem.domain, t, cell);
                let map = space.cell_map(cell);
                for tri in &geo.interior_subtris {
                    let jac = 2.0 * triangle_area(tri);
                    for (r, w) in rule.iter() {
                        let x = map_to_triangle(tri, r);
                        let rr = map.to_reference(x);
                        let e = problem.u(x, t) - rec.solution.value(space, cell, rr);
                        let ge = problem.grad_u(x, t) - rec.solution.gradient(space, cell, rr);
                        let ge_prev = problem.grad_u(x, t_prev) - prev.gradient(space, cell, rr);
                        l2 += w * jac * e * e;
                        grad += w * jac * (ge + ge_prev).norm_squared();
                    }
                }
            }
            StepError {
                t,
                l2: l2.max(0.0).sqrt(),
                grad_avg: grad.max(0.0).sqrt(),
            }
        })
        .collect();
    Ok(ErrorReport::from_steps(dt, per_step))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// `g_h + c·Δtᵖ` at fixed `h`.
    Temporal,
    /// `g_Δt + c·hᵖ` at fixed `Δt`.
    Spatial,
    /// `c·hᵖ` with `Δt` proportional to `h`.
    Diagonal,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Temporal => "temporal",
            Protocol::Spatial => "spatial",
            Protocol::Diagonal => "diagonal",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        [Protocol::Temporal, Protocol::Spatial, Protocol::Diagonal]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EocFit {
    pub protocol: Protocol,
    /// `g ≥ 0`; zero for the diagonal protocol.
    pub offset: f64,
    pub constant: f64,
    pub order: f64,
    /// Root of the residual sum of squares.
    pub residual: f64,
    /// Asymptotic standard error of `order`.
    pub stderr: f64,
    /// `stderr/|order| <= 0.2` and everything finite.
    pub usable: bool,
}

pub const ORDER_RANGE: (f64, f64) = (0.5, 5.0);
pub const ORDER_TOL: f64 = 1e-4;
pub const USABLE_REL_STDERR: f64 = 0.2;

/// Best `(g, c)` for a fixed order and the residual sum of squares.
fn inner_fit(data: &[(f64, f64)], p: f64) -> (f64, f64, f64) {
    let n = data.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in data {
        let z = x.powf(p);
        sx += z;
        sy += y;
        sxx += z * z;
        sxy += z * y;
    }
    let det = n * sxx - sx * sx;
    let (mut g, mut c) = if det.abs() > 1e-300 {
        ((sxx * sy - sx * sxy) / det, (n * sxy - sx * sy) / det)
    } else {
        (sy / n, 0.0)
    };
    if g < 0.0 {
        g = 0.0;
        c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    }
    let rss = data
        .iter()
        .map(|&(x, y)| (g + c * x.powf(p) - y).powi(2))
        .sum();
    (g, c, rss)
}

fn validate_data(data: &[(f64, f64)], min_points: usize) -> Result<()> {
    if data.len() < min_points {
        return Err(Error::invalid(format!(
            "a fit needs at least {min_points} points, got {}",
            data.len()
        )));
    }
    if data.iter().any(|&(x, y)| !(x > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("fit data must have positive step sizes and finite values"));
    }
    Ok(())
}

fn fit_with_offset(data: &[(f64, f64)], protocol: Protocol) -> Result<EocFit> {
    validate_data(data, 4)?;
    let rss = |p: f64| inner_fit(data, p).2;
    // coarse scan, then golden section around the best sample
    let (lo, hi) = ORDER_RANGE;
    let samples = 90;
    let step = (hi - lo) / samples as f64;
    let best = (0..=samples)
        .map(|i| lo + i as f64 * step)
        .map(|p| (p, rss(p)))
        .fold((lo, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (rss(x1), rss(x2));
    while b - a > ORDER_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = rss(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = rss(x2);
        }
    }
    let mut p = 0.5 * (a + b);
    if best.1 < rss(p) {
        p = best.0;
    }
    let (g, c, s) = inner_fit(data, p);
    let stderr = order_stderr(data, g, c, p, s);
    Ok(finish(protocol, g, c, p, s, stderr, data))
}

/// Linearized covariance `s²(JᵀJ)⁻¹` of the model `g + c·xᵖ`.
fn order_stderr(data: &[(f64, f64)], g: f64, c: f64, p: f64, rss: f64) -> f64 {
    let clamped = g == 0.0;
    let params = if clamped { 2 } else { 3 };
    let dof = data.len().saturating_sub(params);
    if dof == 0 {
        return f64::INFINITY;
    }
    let s2 = rss / dof as f64;
    let var = if clamped {
        let mut jtj = Matrix2::zeros();
        for &(x, _) in data {
            let z = x.powf(p);
            let j = Vector2::new(z, c * z * x.ln());
            jtj += j * j.transpose();
        }
        jtj.try_inverse().map(|m| m[(1, 1)])
    } else {
        let mut jtj = Matrix3::zeros();
        for &(x, _) in data {
            let z = x.powf(p);
            let j = Vector3::new(1.0, z, c * z * x.ln());
            jtj += j * j.transpose();
        }
        jtj.try_inverse().map(|m| m[(2, 2)])
    };
    match var {
        Some(v) if v.is_finite() && v >= 0.0 => (s2 * v).sqrt(),
        _ => f64::INFINITY,
    }
}

fn finish(protocol: Protocol, g: f64, c: f64, p: f64, rss: f64, stderr: f64, data: &[(f64, f64)]) -> EocFit {
    let ymax = data.iter().fold(0.0f64, |m, d| m.max(d.1.abs()));
    let ymin = data.iter().fold(f64::INFINITY, |m, d| m.min(d.1.abs()));
    let flat = ymax - ymin <= 1e-12 * ymax;
    let usable = !flat
        && p.is_finite()
        && c.is_finite()
        && stderr.is_finite()
        && stderr <= USABLE_REL_STDERR * p.abs();
    EocFit {
        protocol,
        offset: g,
        constant: c,
        order: p,
        residual: rss.sqrt(),
        stderr,
        usable,
    }
}

/// Fits `g + c·Δtᵖ` to `(Δt, error)` pairs at fixed `h`.
pub fn fit_temporal(data: &[(f64, f64)]) -> Result<EocFit> {
    fit_with_offset(data, Protocol::Temporal)
}

/// Fits `g + c·hᵖ` to `(h, error)` pairs at fixed `Δt`.
pub fn fit_spatial(data: &[(f64, f64)]) -> Result<EocFit> {
    fit_with_offset(data, Protocol::Spatial)
}

/// Log-log regression of `c·hᵖ` on `(h, error)` pairs.
pub fn fit_diagonal(data: &[(f64, f64)]) -> Result<EocFit> {
    validate_data(data, 2)?;
    if data.iter().any(|d| !(d.1 > 0.0)) {
        return Err(Error::invalid("diagonal fit needs positive error values"));
    }
    let n = data.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in data {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let det = n * sxx - sx * sx;
    if !(det.abs() > 1e-300) {
        return Err(Error::invalid("diagonal fit needs at least two distinct step sizes"));
    }
    let p = (n * sxy - sx * sy) / det;
    let lc = (sy - p * sx) / n;
    let rss_log: f64 = data
        .iter()
        .map(|&(x, y)| (lc + p * x.ln() - y.ln()).powi(2))
        .sum();
    // exact for two points
    let stderr = if data.len() > 2 {
        (rss_log / (n - 2.0) * n / det).sqrt()
    } else {
        0.0
    };
    let c = lc.exp();
    let rss: f64 = data.iter().map(|&(x, y)| (c * x.powf(p) - y).powi(2)).sum();
    Ok(finish(Protocol::Diagonal, 0.0, c, p, rss, stderr, data))
}
