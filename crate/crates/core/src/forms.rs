//! Per-step matrices and right-hand side of the Crank-Nicolson CutFEM scheme.
//!
//! With `M` the mass matrix and `K` the stiffness matrix on `Ω^n`, `N` the
//! one-sided Nitsche term `(∂ₙu, v)_{∂Ω^n}`, `B` the boundary mass matrix and
//! `G` the ghost penalty on `F_g`, one step solves
//!
//! ```text
//! (M/Δt + K/2 − N/2 + γ_D/h·B + γ_g·G) uⁿ
//!     = (M/Δt − K/2 + N/2) uⁿ⁻¹ + (f^{n−½}, v)_{Ω^n} + γ_D/h·(g(tₙ), v)_{∂Ω^n}
//! ```
//!
//! Both stiffness contributions use the geometry of step `n`. The Nitsche
//! term is not symmetrized, so `A` is nonsymmetric.

use crate::fespace::{FEFunction, FESpace, MAX_LOCAL_DOFS};
use crate::geometry::{ActiveMesh, MovingDomain};
use crate::linalg::{SparseMatrix, TripletBuilder};
use crate::quadrature::{cell_geometry, gauss_legendre, map_to_triangle, reference_rule, segment_points_for, triangle_area};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormParams {
    /// Nitsche penalty.
    pub gamma_d: f64,
    /// Ghost-penalty weight.
    pub gamma_g: f64,
    pub dt: f64,
    /// Background mesh size.
    pub h: f64,
}

impl FormParams {
    pub fn new(gamma_d: f64, gamma_g: f64, dt: f64, h: f64) -> Result<Self> {
        for (name, v) in [("gamma_D", gamma_d), ("gamma_g", gamma_g), ("dt", dt), ("h", h)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            gamma_d,
            gamma_g,
            dt,
            h,
        })
    }
}

/// Correspondence between global DOFs and the rows of a step system.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    global_to_local: Vec<usize>,
    local_to_global: Vec<usize>,
}

impl DofMap {
    pub const INACTIVE: usize = usize::MAX;

    pub fn from_mask(mask: &[bool]) -> Self {
        let mut global_to_local = vec![Self::INACTIVE; mask.len()];
        let mut local_to_global = Vec::new();
        for (g, &on) in mask.iter().enumerate() {
            if on {
                global_to_local[g] = local_to_global.len();
                local_to_global.push(g);
            }
        }
        Self {
            global_to_local,
            local_to_global,
        }
    }

    pub fn len(&self) -> usize {
        self.local_to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_to_global.is_empty()
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        match self.global_to_local[global] {
            Self::INACTIVE => None,
            l => Some(l),
        }
    }

    pub fn global(&self, local: usize) -> usize {
        self.local_to_global[local]
    }

    pub fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.local_to_global.iter().map(|&g| global[g]).collect()
    }

    pub fn expand(&self, local: &[f64], ndofs: usize) -> Vec<f64> {
        let mut out = vec![0.0; ndofs];
        for (&g, &v) in self.local_to_global.iter().zip(local) {
            out[g] = v;
        }
        out
    }
}

/// The separately assembled pieces of one step, on the active DOFs.
#[derive(Debug, Clone)]
pub struct StepOperators {
    pub dofs: DofMap,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    /// `N_ij = (∂ₙφ_j, φ_i)_{∂Ω^n}`.
    pub nitsche: SparseMatrix,
    pub boundary_mass: SparseMatrix,
    pub ghost: SparseMatrix,
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
}

/// Quadrature degree used for the forms of a degree-`m` space.
pub fn assembly_degree(m: usize) -> usize {
    2 * m
}

struct LocalBuilder {
    trip: TripletBuilder,
}

impl LocalBuilder {
    fn new(n: usize, cap: usize) -> Self {
        Self {
            trip: TripletBuilder::with_capacity(n, n, cap),
        }
    }

    fn add(&mut self, rows: &[usize], local: &[[f64; 2 * MAX_LOCAL_DOFS]], len: usize) {
        for i in 0..len {
            for j in 0..len {
                if local[i][j] != 0.0 {
                    self.trip.push(rows[i], rows[j], local[i][j]);
                }
            }
        }
    }

    fn finish(self) -> SparseMatrix {
        self.trip.build()
    }
}

fn local_rows(space: &FESpace, dofs: &DofMap, cell: usize) -> [usize; MAX_LOCAL_DOFS] {
    let mut rows = [0usize; MAX_LOCAL_DOFS];
    for (r, &g) in rows.iter_mut().zip(space.cell_dofs(cell)) {
        *r = dofs.local(g).expect("DOFs of active cells are active");
    }
    rows
}

/// Mass, stiffness, Nitsche and boundary-mass matrices over `Ω^n`, plus the
/// ghost penalty over `F_g`.
pub fn assemble_operators(
    active: &ActiveMesh,
    space: &FESpace,
    domain: &MovingDomain,
) -> Result<StepOperators> {
    let dofs = DofMap::from_mask(&space.active_mask(active));
    let n = dofs.len();
    let m = space.degree;
    let ld = space.local_dofs();
    let rule = reference_rule(assembly_degree(m))?;
    let (gs, gw) = gauss_legendre(segment_points_for(assembly_degree(m)));
    let cap = active.active_cells.len() * ld * ld;
    let mut mass = LocalBuilder::new(n, cap);
    let mut stiff = LocalBuilder::new(n, cap);
    let mut nitsche = LocalBuilder::new(n, cap / 4);
    let mut bmass = LocalBuilder::new(n, cap / 4);
    let mesh = &space.mesh;

    for cell in active.domain_cells() {
        let geo = cell_geometry(mesh, domain, active.t, cell);
        if geo.is_empty() {
            continue;
        }
        let rows = local_rows(space, &dofs, cell);
        let map = space.cell_map(cell);
        let mut me = [[0.0; 2 * MAX_LOCAL_DOFS]; 2 * MAX_LOCAL_DOFS];
        let mut ke = me;
        for tri in &geo.interior_subtris {
            let jac = 2.0 * triangle_area(tri);
            for (r, w) in rule.iter() {
                let rr = map.to_reference(map_to_triangle(tri, r));
                let phi = space.values(rr);
                let grad = space.gradients(cell, rr);
                let w = w * jac;
                for i in 0..ld {
                    for j in 0..ld {
                        me[i][j] += w * phi[i] * phi[j];
                        ke[i][j] += w * grad[i].dot(&grad[j]);
                    }
                }
            }
        }
        mass.add(&rows, &me, ld);
        stiff.add(&rows, &ke, ld);

        if !geo.boundary_segments.is_empty() {
            let mut ne = [[0.0; 2 * MAX_LOCAL_DOFS]; 2 * MAX_LOCAL_DOFS];
            let mut be = ne;
            for seg in &geo.boundary_segments {
                let len = seg.length();
                let [p, q] = seg.endpoints;
                for (s, w) in gs.iter().zip(&gw) {
                    let rr = map.to_reference(p + *s * (q - p));
                    let phi = space.values(rr);
                    let grad = space.gradients(cell, rr);
                    let w = w * len;
                    for i in 0..ld {
                        for j in 0..ld {
                            ne[i][j] += w * grad[j].dot(&seg.normal) * phi[i];
                            be[i][j] += w * phi[i] * phi[j];
                        }
                    }
                }
            }
            nitsche.add(&rows, &ne, ld);
            bmass.add(&rows, &be, ld);
        }
    }

    let ghost = assemble_ghost_on(active, space, &dofs);
    Ok(StepOperators {
        dofs,
        mass: mass.finish(),
        stiffness: stiff.finish(),
        nitsche: nitsche.finish(),
        boundary_mass: bmass.finish(),
        ghost,
    })
}

/// Ghost penalty matrix on the active DOFs of `active`.
///
/// `G_ij = Σ_{e∈F_g} Σ_{k=1}^{m} h^{2k−1}/(k!)² ∫_e [[∂ₙᵏφ_j]] [[∂ₙᵏφ_i]] ds`.
pub fn assemble_ghost(active: &ActiveMesh, space: &FESpace) -> SparseMatrix {
    let dofs = DofMap::from_mask(&space.active_mask(active));
    assemble_ghost_on(active, space, &dofs)
}

fn assemble_ghost_on(active: &ActiveMesh, space: &FESpace, dofs: &DofMap) -> SparseMatrix {
    let mesh = &space.mesh;
    let m = space.degree;
    let ld = space.local_dofs();
    let h = mesh.h;
    let (gs, gw) = gauss_legendre(segment_points_for(assembly_degree(m)));
    let facets = active.ghost_facets();
    let mut builder = LocalBuilder::new(dofs.len(), facets.len() * 4 * ld * ld);
    for fi in facets {
        let facet = mesh.facets[fi];
        let (c0, Some(c1)) = facet.cells else { continue };
        let geo = mesh.facet_geometry(fi).expect("valid facet");
        let n = geo.normal;
        let [p, q] = facet.vertices.map(|v| mesh.vertices[v]);
        let (r0, r1) = (local_rows(space, dofs, c0), local_rows(space, dofs, c1));
        let mut rows = [0usize; 2 * MAX_LOCAL_DOFS];
        rows[..ld].copy_from_slice(&r0[..ld]);
        rows[ld..2 * ld].copy_from_slice(&r1[..ld]);
        let (m0, m1) = (space.cell_map(c0), space.cell_map(c1));
        let (h0, h1) = (space.hessians(c0), space.hessians(c1));
        let mut ge = [[0.0; 2 * MAX_LOCAL_DOFS]; 2 * MAX_LOCAL_DOFS];
        for (s, w) in gs.iter().zip(&gw) {
            let x = p + *s * (q - p);
            let w = w * geo.length;
            let g0 = space.gradients(c0, m0.to_reference(x));
            let g1 = space.gradients(c1, m1.to_reference(x));
            let mut jump = [0.0; 2 * MAX_LOCAL_DOFS];
            for a in 0..ld {
                jump[a] = g0[a].dot(&n);
                jump[ld + a] = -g1[a].dot(&n);
            }
            accumulate_outer(&mut ge, &jump, 2 * ld, w * h);
            if m >= 2 {
                for a in 0..ld {
                    jump[a] = n.dot(&(h0[a] * n));
                    jump[ld + a] = -n.dot(&(h1[a] * n));
                }
                accumulate_outer(&mut ge, &jump, 2 * ld, w * h.powi(3) / 4.0);
            }
        }
        builder.add(&rows, &ge, 2 * ld);
    }
    builder.finish()
}

/// `g_h(u, u)` for global coefficients `u`, summed facet by facet from the
/// squared jumps.
///
/// Equal to `uᵀGu` but free of the cancellation in the matrix product, so
/// it resolves values far below `‖u‖²·ε`.
pub fn ghost_form(active: &ActiveMesh, space: &FESpace, u: &[f64]) -> f64 {
    let mesh = &space.mesh;
    let m = space.degree;
    let h = mesh.h;
    let (gs, gw) = gauss_legendre(segment_points_for(assembly_degree(m)));
    let mut total = 0.0;
    for fi in active.ghost_facets() {
        let facet = mesh.facets[fi];
        let (c0, Some(c1)) = facet.cells else { continue };
        let geo = mesh.facet_geometry(fi).expect("valid facet");
        let n = geo.normal;
        let [p, q] = facet.vertices.map(|v| mesh.vertices[v]);
        let (d0, d1) = (space.cell_dofs(c0), space.cell_dofs(c1));
        let (m0, m1) = (space.cell_map(c0), space.cell_map(c1));
        let (h0, h1) = (space.hessians(c0), space.hessians(c1));
        for (s, w) in gs.iter().zip(&gw) {
            let x = p + *s * (q - p);
            let g0 = space.gradients(c0, m0.to_reference(x));
            let g1 = space.gradients(c1, m1.to_reference(x));
            let side = |d: &[usize], g: &[Point]| d.iter().zip(g).map(|(&k, g)| u[k] * g.dot(&n)).sum::<f64>();
            let j1 = side(d0, &g0) - side(d1, &g1);
            total += w * geo.length * h * j1 * j1;
            if m >= 2 {
                let curv = |d: &[usize], hs: &[nalgebra::Matrix2<f64>]| {
                    d.iter().zip(hs).map(|(&k, hk)| u[k] * n.dot(&(hk * n))).sum::<f64>()
                };
                let j2 = curv(d0, &h0) - curv(d1, &h1);
                total += w * geo.length * h.powi(3) / 4.0 * j2 * j2;
            }
        }
    }
    total
}

fn accumulate_outer(
    out: &mut [[f64; 2 * MAX_LOCAL_DOFS]; 2 * MAX_LOCAL_DOFS],
    v: &[f64; 2 * MAX_LOCAL_DOFS],
    len: usize,
    w: f64,
) {
    for i in 0..len {
        for j in 0..len {
            out[i][j] += w * (v[i] * v[j]);
        }
    }
}

impl StepOperators {
    /// `A = M/Δt + K/2 − N/2 + γ_D/h·B + γ_g·G`.
    pub fn system_matrix(&self, params: &FormParams) -> SparseMatrix {
        SparseMatrix::linear_combination(&[
            (1.0 / params.dt, &self.mass),
            (0.5, &self.stiffness),
            (-0.5, &self.nitsche),
            (params.gamma_d / params.h, &self.boundary_mass),
            (params.gamma_g, &self.ghost),
        ])
    }

    /// Discrete energy squared of `(uⁿ, uⁿ⁻¹)`, both given on the local DOFs.
    pub fn energy(&self, params: &FormParams, u_n: &[f64], u_prev: &[f64]) -> f64 {
        let sum: Vec<f64> = u_n.iter().zip(u_prev).map(|(a, b)| a + b).collect();
        let diff: Vec<f64> = u_n.iter().zip(u_prev).map(|(a, b)| a - b).collect();
        0.5 * self.stiffness.bilinear(&sum, &sum)
            + self.mass.bilinear(&diff, &diff) / params.dt
            + params.gamma_d / params.h * self.boundary_mass.bilinear(u_n, u_n)
            + params.gamma_g * self.ghost.bilinear(u_n, u_n)
    }
}

/// System matrix of step `n` (see the module docs).
pub fn assemble_bilinear(
    active: &ActiveMesh,
    space: &FESpace,
    params: &FormParams,
    domain: &MovingDomain,
) -> Result<SparseMatrix> {
    Ok(assemble_operators(active, space, domain)?.system_matrix(params))
}

/// Right-hand side of step `n` at time `t_n = active.t`.
///
/// `u_prev` must already live on the DOFs of `active` (see
/// [`crate::fespace::transfer`]). Reading a zero-filled coefficient on a cell
/// that meets `Ω^n` is an error.
#[allow(clippy::too_many_arguments)]
pub fn assemble_rhs(
    ops: &StepOperators,
    active: &ActiveMesh,
    space: &FESpace,
    params: &FormParams,
    domain: &MovingDomain,
    u_prev: &FEFunction,
    f: &dyn Fn(Point, f64) -> f64,
    g_bc: &dyn Fn(Point, f64) -> f64,
) -> Result<Vec<f64>> {
    for cell in active.domain_cells() {
        if u_prev.touches_zero_filled(space, cell) {
            return Err(Error::ExtensionCoverage {
                step: active.step,
                cell,
            });
        }
    }
    let dofs = &ops.dofs;
    let up = dofs.restrict(&u_prev.coefficients);
    let mu = ops.mass.matvec(&up);
    let ku = ops.stiffness.matvec(&up);
    let nu = ops.nitsche.matvec(&up);
    let mut b: Vec<f64> = (0..dofs.len())
        .map(|i| mu[i] / params.dt - 0.5 * (ku[i] - nu[i]))
        .collect();

    let t_n = active.t;
    let t_prev = t_n - params.dt;
    let m = space.degree;
    let ld = space.local_dofs();
    let rule = reference_rule(assembly_degree(m))?;
    let (gs, gw) = gauss_legendre(segment_points_for(assembly_degree(m)));
    let penalty = params.gamma_d / params.h;
    for cell in active.domain_cells() {
        let geo = cell_geometry(&space.mesh, domain, t_n, cell);
        if geo.is_empty() {
            continue;
        }
        let rows = local_rows(space, dofs, cell);
        let map = space.cell_map(cell);
        for tri in &geo.interior_subtris {
            let jac = 2.0 * triangle_area(tri);
            for (r, w) in rule.iter() {
                let x = map_to_triangle(tri, r);
                let src = 0.5 * (f(x, t_n) + f(x, t_prev));
                if src == 0.0 {
                    continue;
                }
                let phi = space.values(map.to_reference(x));
                for i in 0..ld {
                    b[rows[i]] += w * jac * src * phi[i];
                }
            }
        }
        for seg in &geo.boundary_segments {
            let len = seg.length();
            let [p, q] = seg.endpoints;
            for (s, w) in gs.iter().zip(&gw) {
                let x = p + *s * (q - p);
                let g = g_bc(x, t_n);
                if g == 0.0 {
                    continue;
                }
                let phi = space.values(map.to_reference(x));
                for i in 0..ld {
                    b[rows[i]] += w * len * penalty * g * phi[i];
                }
            }
        }
    }
    Ok(b)
}

/// Assembles matrix and right-hand side together.
#[allow(clippy::too_many_arguments)]
pub fn assemble_system(
    active: &ActiveMesh,
    space: &FESpace,
    params: &FormParams,
    domain: &MovingDomain,
    u_prev: &FEFunction,
    f: &dyn Fn(Point, f64) -> f64,
    g_bc: &dyn Fn(Point, f64) -> f64,
) -> Result<(AssembledSystem, StepOperators)> {
    let ops = assemble_operators(active, space, domain)?;
    let rhs = assemble_rhs(&ops, active, space, params, domain, u_prev, f, g_bc)?;
    Ok((
        AssembledSystem {
            matrix: ops.system_matrix(params),
            rhs,
            dofs: ops.dofs.clone(),
        },
        ops,
    ))
}

/// Discrete energy squared
/// `½‖∇(uⁿ+uⁿ⁻¹)‖² + ‖uⁿ−uⁿ⁻¹‖²/Δt + γ_D/h‖uⁿ‖²_{∂Ω} + γ_g g(uⁿ, uⁿ)`.
pub fn energy(
    active: &ActiveMesh,
    space: &FESpace,
    params: &FormParams,
    domain: &MovingDomain,
    u_n: &FEFunction,
    u_prev: &FEFunction,
) -> Result<f64> {
    let ops = assemble_operators(active, space, domain)?;
    let a = ops.dofs.restrict(&u_n.coefficients);
    let b = ops.dofs.restrict(&u_prev.coefficients);
    Ok(ops.energy(params, &a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::interpolate;
    use crate::geometry::build_active_mesh;
    use crate::mesh::{build_uniform_mesh, BoxDomain};
    use crate::linalg::{solve, SolverOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(n: usize, degree: usize, domain: &MovingDomain, t: f64, delta: f64) -> (FESpace, ActiveMesh) {
        let mesh = Arc::new(build_uniform_mesh(BoxDomain::unit_square(), n).unwrap());
        let space = FESpace::new(mesh, degree).unwrap();
        let active = build_active_mesh(&space.mesh, domain, 1, t, delta, None).unwrap();
        (space, active)
    }

    fn circle() -> MovingDomain {
        MovingDomain::new(
            |x, t| (x.x - 0.5 - t).powi(2) + (x.y - 0.5).powi(2) - 0.09,
            1.0,
            "circle",
        )
    }

    /// Closed-form P1 matrices on the unit square split into two triangles,
    /// with Nitsche terms on the four box edges. No quadrature involved.
    fn hand_assembled(space: &FESpace, params: &FormParams) -> Vec<Vec<f64>> {
        let mesh = &space.mesh;
        let mut a = vec![vec![0.0; 4]; 4];
        for c in 0..2 {
            let v = mesh.cells[c];
            let area = mesh.cell_area(c);
            let g = space.cell_map(c).bary_grads;
            for i in 0..3 {
                for j in 0..3 {
                    let m = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    let k = area * g[i].dot(&g[j]);
                    a[v[i]][v[j]] += m / params.dt + 0.5 * k;
                }
            }
            for (e, &fi) in mesh.cell_facets[c].iter().enumerate() {
                if mesh.facets[fi].is_interior() {
                    continue;
                }
                let normal = mesh.outward_normal(c, fi).unwrap();
                let len = mesh.facet_geometry(fi).unwrap().length;
                let ends = [e, (e + 1) % 3];
                for &i in &ends {
                    for &j in &ends {
                        let b = len / 6.0 * if i == j { 2.0 } else { 1.0 };
                        a[v[i]][v[j]] += params.gamma_d / params.h * b;
                    }
                    for j in 0..3 {
                        // ∫_e ∂ₙφ_j φ_i = (∇φ_j·n)·len/2
                        a[v[i]][v[j]] -= 0.5 * g[j].dot(&normal) * len / 2.0;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn full_square_matches_hand_assembly() {
        let (space, active) = setup(1, 1, &MovingDomain::everywhere(), 0.0, 0.0);
        let params = FormParams::new(1.0, 1e-3, 0.1, space.mesh.h).unwrap();
        let a = assemble_bilinear(&active, &space, &params, &MovingDomain::everywhere()).unwrap();
        let expected = hand_assembled(&space, &params);
        let dense = a.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((dense[i][j] - expected[i][j]).abs() <= 1e-13, "({i},{j})");
            }
        }
        let ops = assemble_operators(&active, &space, &MovingDomain::everywhere()).unwrap();
        assert_eq!(ops.ghost.nnz(), 0);
    }

    #[test]
    fn mass_and_stiffness_identities() {
        let d = circle();
        for degree in [1, 2] {
            let (space, active) = setup(32, degree, &d, 0.02, 0.08);
            let ops = assemble_operators(&active, &space, &d).unwrap();
            let ones = vec![1.0; ops.dofs.len()];
            let total = ops.mass.bilinear(&ones, &ones);
            let area = crate::quadrature::integrate_cut_volume(&active, &space.mesh, &d, 0.02, 2, |_| 1.0).unwrap();
            assert!((total - area).abs() <= 1e-12 * area);
            let k1 = ops.stiffness.matvec(&ones);
            assert!(k1.iter().all(|v| v.abs() <= 1e-12));
            let n1 = ops.nitsche.matvec(&ones);
            assert!(n1.iter().all(|v| v.abs() <= 1e-12));
        }
    }

    #[test]
    fn ghost_single_facet_by_hand() {
        let (space, active) = setup(1, 1, &MovingDomain::everywhere(), 0.0, 0.0);
        let mut active = active;
        // mark the diagonal as a ghost facet
        active.f_ext = active.f_int.clone();
        active.f_int.clear();
        let g = assemble_ghost(&active, &space);
        // v = hat function of the vertex (1, 0), off the diagonal: its normal
        // derivative jumps by √2 across the diagonal of length √2, so
        // vᵀGv = h·2·√2 with h = √2.
        let v = [0.0, 1.0, 0.0, 0.0];
        assert!((g.bilinear(&v, &v) - 4.0).abs() <= 1e-13);
        assert!((ghost_form(&active, &space, &v) - 4.0).abs() <= 1e-13);
        assert!(g.max_abs_diff(&g.transpose()) <= 1e-14);
    }

    #[test]
    fn ghost_vanishes_on_global_polynomials() {
        let d = circle();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for degree in [1, 2] {
            let (space, active) = setup(32, degree, &d, 0.02, 0.08);
            let g = assemble_ghost(&active, &space);
            assert!(g.nnz() > 0);
            assert!(g.max_abs_diff(&g.transpose()) <= 1e-14);
            let dofs = DofMap::from_mask(&space.active_mask(&active));
            for _ in 0..5 {
                let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let p = |x: Point| {
                    let quad = if degree == 2 { c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y } else { 0.0 };
                    c[0] + c[1] * x.x + c[2] * x.y + quad
                };
                let u = interpolate(&space, &active, p);
                let v = dofs.restrict(&u.coefficients);
                let norm2: f64 = v.iter().map(|x| x * x).sum();
                assert!(ghost_form(&active, &space, &u.coefficients) <= 1e-18 * norm2);
                // the matrix product only resolves roundoff of O(1) entries
                assert!(g.bilinear(&v, &v).abs() <= 1e-12 * norm2);
            }
        }
    }

    #[test]
    fn random_vectors_are_coercive() {
        let d = circle();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (degree, gamma_d) in [(1, 1.0), (2, 10.0)] {
            let (space, active) = setup(32, degree, &d, 0.02, 0.08);
            let params = FormParams::new(gamma_d, 1e-3, 0.02, space.mesh.h).unwrap();
            let a = assemble_bilinear(&active, &space, &params, &d).unwrap();
            for _ in 0..20 {
                let v: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(a.bilinear(&v, &v) > 0.0);
            }
        }
    }

    #[test]
    fn rhs_special_cases() {
        let d = MovingDomain::everywhere();
        let (space, active) = setup(4, 2, &d, 0.1, 0.0);
        let params = FormParams::new(10.0, 1e-3, 0.05, space.mesh.h).unwrap();
        let ops = assemble_operators(&active, &space, &d).unwrap();
        let zero = FEFunction::zero(&space, &active);
        let b = assemble_rhs(&ops, &active, &space, &params, &d, &zero, &|_, _| 0.0, &|_, _| 0.0).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
        let b = assemble_rhs(&ops, &active, &space, &params, &d, &zero, &|_, _| 1.0, &|_, _| 0.0).unwrap();
        let rows = ops.mass.matvec(&vec![1.0; ops.dofs.len()]);
        for (x, y) in b.iter().zip(&rows) {
            assert!((x - y).abs() <= 1e-14);
        }
    }

    #[test]
    fn energy_of_constants() {
        let d = MovingDomain::everywhere();
        let (space, active) = setup(8, 1, &d, 0.0, 0.0);
        let params = FormParams::new(1.0, 1e-3, 0.01, space.mesh.h).unwrap();
        let c = 0.7;
        let u = interpolate(&space, &active, |_| c);
        let e = energy(&active, &space, &params, &d, &u, &u).unwrap();
        assert!((e - params.gamma_d / params.h * c * c * 4.0).abs() <= 1e-12);
        let z = FEFunction::zero(&space, &active);
        assert_eq!(energy(&active, &space, &params, &d, &z, &z).unwrap(), 0.0);

        let dc = circle();
        let (space, active) = setup(16, 2, &dc, 0.0, 0.05);
        let ops = assemble_operators(&active, &space, &dc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a: Vec<f64> = (0..ops.dofs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..ops.dofs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(ops.energy(&params, &a, &b) >= 0.0);
        }
    }

    #[test]
    fn stationary_polynomial_is_reproduced() {
        // u = 1 + x − 2y + x² + xy − y² solves −Δu = 0; with exact boundary
        // data a CN step starting from its interpolant must return it.
        let d = MovingDomain::everywhere();
        for degree in [1, 2] {
            let u = move |x: Point, _t: f64| {
                let lin = 1.0 + x.x - 2.0 * x.y;
                if degree == 2 {
                    lin + x.x * x.x + x.x * x.y - x.y * x.y
                } else {
                    lin
                }
            };
            let (space, active) = setup(8, degree, &d, 0.1, 0.0);
            let params = FormParams::new(10.0, 1e-3, 0.05, space.mesh.h).unwrap();
            let prev = interpolate(&space, &active, |x| u(x, 0.0));
            let (sys, _) = assemble_system(&active, &space, &params, &d, &prev, &|_, _| 0.0, &u).unwrap();
            let sol = solve(&sys.matrix, &sys.rhs, &SolverOptions::default()).unwrap();
            let expected = sys.dofs.restrict(&prev.coefficients);
            for (a, b) in sol.x.iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn sparsity_stays_local() {
        let d = circle();
        let (space, active) = setup(32, 2, &d, 0.02, 0.08);
        let params = FormParams::new(10.0, 1e-3, 0.02, space.mesh.h).unwrap();
        let a = assemble_bilinear(&active, &space, &params, &d).unwrap();
        assert!(a.nnz() <= 30 * a.nrows(), "{} nnz for {} dofs", a.nnz(), a.nrows());
    }

    #[test]
    fn invalid_params() {
        assert!(FormParams::new(0.0, 1e-3, 0.1, 0.1).is_err());
        assert!(FormParams::new(1.0, 1e-3, -0.1, 0.1).is_err());
    }
}
