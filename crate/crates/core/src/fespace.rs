//! Continuous P1/P2 Lagrange spaces on the background mesh.
//!
//! All steps share one global DOF numbering; a step only decides which DOFs
//! are active. Moving a solution to the next step is therefore a mask
//! intersection.
//!
//! Local DOF order per cell: the three vertices, then (P2) the midpoints of
//! the edges `(v0, v1)`, `(v1, v2)`, `(v2, v0)`.

use std::sync::Arc;

use nalgebra::Matrix2;

use crate::geometry::ActiveMesh;
use crate::mesh::BackgroundMesh;
use crate::{Error, Point, Result};

pub const MAX_LOCAL_DOFS: usize = 6;

/// Affine map from the reference triangle onto a cell.
#[derive(Debug, Clone, Copy)]
pub struct CellMap {
    pub origin: Point,
    pub jacobian: Matrix2<f64>,
    pub inverse: Matrix2<f64>,
    pub det: f64,
    /// Gradients of the barycentric coordinates.
    pub bary_grads: [Point; 3],
}

impl CellMap {
    pub fn new(vertices: [Point; 3]) -> Self {
        let e1 = vertices[1] - vertices[0];
        let e2 = vertices[2] - vertices[0];
        let jacobian = Matrix2::new(e1.x, e2.x, e1.y, e2.y);
        let det = jacobian.determinant();
        let inverse = jacobian.try_inverse().expect("non-degenerate cell");
        let g1 = Point::new(inverse[(0, 0)], inverse[(0, 1)]);
        let g2 = Point::new(inverse[(1, 0)], inverse[(1, 1)]);
        Self {
            origin: vertices[0],
            jacobian,
            inverse,
            det,
            bary_grads: [-(g1 + g2), g1, g2],
        }
    }

    pub fn to_physical(&self, r: [f64; 2]) -> Point {
        self.origin + self.jacobian * Point::new(r[0], r[1])
    }

    pub fn to_reference(&self, x: Point) -> [f64; 2] {
        let r = self.inverse * (x - self.origin);
        [r.x, r.y]
    }
}

fn barycentric(r: [f64; 2]) -> [f64; 3] {
    [1.0 - r[0] - r[1], r[0], r[1]]
}

const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

#[derive(Debug, Clone)]
pub struct FESpace {
    pub mesh: Arc<BackgroundMesh>,
    pub degree: usize,
    /// Global DOFs of each cell, `local_dofs()` entries per cell.
    cell_dofs: Vec<usize>,
    /// Physical location of every global DOF.
    pub nodes: Vec<Point>,
    maps: Vec<CellMap>,
}

impl FESpace {
    pub fn new(mesh: Arc<BackgroundMesh>, degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::invalid(format!(
                "unsupported polynomial degree {degree} (only 1 and 2)"
            )));
        }
        let nv = mesh.num_vertices();
        let ld = if degree == 1 { 3 } else { 6 };
        let mut cell_dofs = Vec::with_capacity(ld * mesh.num_cells());
        for (cell, facets) in mesh.cells.iter().zip(&mesh.cell_facets) {
            cell_dofs.extend_from_slice(cell);
            if degree == 2 {
                cell_dofs.extend(facets.iter().map(|f| nv + f));
            }
        }
        let mut nodes = mesh.vertices.clone();
        if degree == 2 {
            nodes.extend(mesh.facets.iter().map(|f| {
                0.5 * (mesh.vertices[f.vertices[0]] + mesh.vertices[f.vertices[1]])
            }));
        }
        let maps = (0..mesh.num_cells())
            .map(|c| CellMap::new(mesh.cell_vertices(c)))
            .collect();
        Ok(Self {
            mesh,
            degree,
            cell_dofs,
            nodes,
            maps,
        })
    }

    pub fn ndofs(&self) -> usize {
        self.nodes.len()
    }

    pub fn local_dofs(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let ld = self.local_dofs();
        &self.cell_dofs[cell * ld..(cell + 1) * ld]
    }

    pub fn cell_map(&self, cell: usize) -> &CellMap {
        &self.maps[cell]
    }

    /// Basis values at reference point `r`.
    pub fn values(&self, r: [f64; 2]) -> [f64; MAX_LOCAL_DOFS] {
        let l = barycentric(r);
        let mut out = [0.0; MAX_LOCAL_DOFS];
        if self.degree == 1 {
            out[..3].copy_from_slice(&l);
        } else {
            for i in 0..3 {
                out[i] = l[i] * (2.0 * l[i] - 1.0);
            }
            for (e, &(a, b)) in EDGES.iter().enumerate() {
                out[3 + e] = 4.0 * l[a] * l[b];
            }
        }
        out
    }

    /// Physical gradients of the basis at reference point `r` of `cell`.
    pub fn gradients(&self, cell: usize, r: [f64; 2]) -> [Point; MAX_LOCAL_DOFS] {
        let g = &self.maps[cell].bary_grads;
        let mut out = [Point::zeros(); MAX_LOCAL_DOFS];
        if self.degree == 1 {
            out[..3].copy_from_slice(g);
        } else {
            let l = barycentric(r);
            for i in 0..3 {
                out[i] = (4.0 * l[i] - 1.0) * g[i];
            }
            for (e, &(a, b)) in EDGES.iter().enumerate() {
                out[3 + e] = 4.0 * (l[a] * g[b] + l[b] * g[a]);
            }
        }
        out
    }

    /// Physical Hessians of the basis; constant per cell.
    pub fn hessians(&self, cell: usize) -> [Matrix2<f64>; MAX_LOCAL_DOFS] {
        let mut out = [Matrix2::zeros(); MAX_LOCAL_DOFS];
        if self.degree == 2 {
            let g = &self.maps[cell].bary_grads;
            for i in 0..3 {
                out[i] = 4.0 * g[i] * g[i].transpose();
            }
            for (e, &(a, b)) in EDGES.iter().enumerate() {
                out[3 + e] = 4.0 * (g[a] * g[b].transpose() + g[b] * g[a].transpose());
            }
        }
        out
    }

    /// Marks the DOFs of all active cells.
    pub fn active_mask(&self, active: &ActiveMesh) -> Vec<bool> {
        let mut mask = vec![false; self.ndofs()];
        for &c in &active.active_cells {
            for &d in self.cell_dofs(c) {
                mask[d] = true;
            }
        }
        mask
    }
}

/// Basis data for one cell and reference point.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisEval {
    Values(Vec<f64>),
    Gradients(Vec<Point>),
    Hessians(Vec<Matrix2<f64>>),
}

/// Basis values (`order = 0`), gradients (1) or Hessians (2) in physical
/// coordinates. P1 Hessians are zero.
pub fn eval_basis(space: &FESpace, cell: usize, r: [f64; 2], order: usize) -> Result<BasisEval> {
    if cell >= space.mesh.num_cells() {
        return Err(Error::invalid(format!("cell {cell} out of range")));
    }
    let ld = space.local_dofs();
    match order {
        0 => Ok(BasisEval::Values(space.values(r)[..ld].to_vec())),
        1 => Ok(BasisEval::Gradients(space.gradients(cell, r)[..ld].to_vec())),
        2 => Ok(BasisEval::Hessians(space.hessians(cell)[..ld].to_vec())),
        k => Err(Error::invalid(format!("derivative order {k} not supported"))),
    }
}

/// A finite element function over the global DOFs.
///
/// Coefficients outside `active_mask` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FEFunction {
    pub coefficients: Vec<f64>,
    pub active_mask: Vec<bool>,
    /// DOFs that became active in a transfer and were filled with zero.
    pub zero_filled: Vec<bool>,
}

impl FEFunction {
    pub fn zero(space: &FESpace, active: &ActiveMesh) -> Self {
        let active_mask = space.active_mask(active);
        Self {
            coefficients: vec![0.0; space.ndofs()],
            zero_filled: vec![false; active_mask.len()],
            active_mask,
        }
    }

    pub fn value(&self, space: &FESpace, cell: usize, r: [f64; 2]) -> f64 {
        let phi = space.values(r);
        space
            .cell_dofs(cell)
            .iter()
            .zip(&phi)
            .map(|(&d, p)| self.coefficients[d] * p)
            .sum()
    }

    pub fn gradient(&self, space: &FESpace, cell: usize, r: [f64; 2]) -> Point {
        let g = space.gradients(cell, r);
        space
            .cell_dofs(cell)
            .iter()
            .zip(&g)
            .map(|(&d, g)| self.coefficients[d] * g)
            .sum()
    }

    /// Whether any DOF of `cell` was zero-filled by a transfer.
    pub fn touches_zero_filled(&self, space: &FESpace, cell: usize) -> bool {
        space.cell_dofs(cell).iter().any(|&d| self.zero_filled[d])
    }

    pub fn num_zero_filled(&self) -> usize {
        self.zero_filled.iter().filter(|&&z| z).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Nodal interpolation of `u` on the DOFs of the active cells.
pub fn interpolate(space: &FESpace, active: &ActiveMesh, u: impl Fn(Point) -> f64) -> FEFunction {
    let mut f = FEFunction::zero(space, active);
    for (d, node) in space.nodes.iter().enumerate() {
        if f.active_mask[d] {
            f.coefficients[d] = u(*node);
        }
    }
    f
}

/// Moves `prev` onto the DOFs of `new_active`.
///
/// Shared DOFs keep their coefficients; newly active DOFs are zero and marked
/// in `zero_filled`. Fails if a cell meeting `Ω^n` has a DOF that was not
/// active before.
pub fn transfer(space: &FESpace, prev: &FEFunction, new_active: &ActiveMesh) -> Result<FEFunction> {
    for cell in new_active.domain_cells() {
        if space.cell_dofs(cell).iter().any(|&d| !prev.active_mask[d]) {
            return Err(Error::ExtensionCoverage {
                step: new_active.step,
                cell,
            });
        }
    }
    let active_mask = space.active_mask(new_active);
    let mut coefficients = vec![0.0; space.ndofs()];
    let mut zero_filled = vec![false; space.ndofs()];
    for d in 0..space.ndofs() {
        if !active_mask[d] {
            continue;
        }
        if prev.active_mask[d] {
            coefficients[d] = prev.coefficients[d];
        } else {
            zero_filled[d] = true;
        }
    }
    Ok(FEFunction {
        coefficients,
        active_mask,
        zero_filled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_active_mesh, MovingDomain};
    use crate::mesh::{build_uniform_mesh, BoxDomain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space(n: usize, degree: usize) -> FESpace {
        let mesh = Arc::new(build_uniform_mesh(BoxDomain::unit_square(), n).unwrap());
        FESpace::new(mesh, degree).unwrap()
    }

    fn full_active(space: &FESpace) -> ActiveMesh {
        build_active_mesh(&space.mesh, &MovingDomain::everywhere(), 0, 0.0, 0.0, None).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(space(1, 1).ndofs(), 4);
        assert_eq!(space(1, 2).ndofs(), 9);
        assert_eq!(space(32, 1).ndofs(), 33 * 33);
        let mesh = Arc::new(build_uniform_mesh(BoxDomain::unit_square(), 1).unwrap());
        assert!(FESpace::new(mesh.clone(), 0).is_err());
        assert!(FESpace::new(mesh, 3).is_err());
    }

    #[test]
    fn partition_of_unity_and_lagrange_property() {
        for degree in [1, 2] {
            let s = space(1, degree);
            let ld = s.local_dofs();
            for r in [[0.2, 0.3], [0.0, 0.0], [0.7, 0.1]] {
                let v = s.values(r);
                assert!((v[..ld].iter().sum::<f64>() - 1.0).abs() <= 1e-14);
                let g: Point = s.gradients(0, r)[..ld].iter().sum();
                assert!(g.norm() <= 1e-13);
            }
        }
        let s = space(1, 2);
        let ref_nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        for (i, r) in ref_nodes.iter().enumerate() {
            let v = s.values(*r);
            for (j, vj) in v.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((vj - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p1_gradient_on_unit_right_triangle() {
        let map = CellMap::new([Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]);
        assert_eq!(map.bary_grads[0], Point::new(-1.0, -1.0));
        let s = space(1, 1);
        match eval_basis(&s, 0, [0.3, 0.3], 2).unwrap() {
            BasisEval::Hessians(h) => assert!(h.iter().all(|m| m.norm() == 0.0)),
            _ => unreachable!(),
        }
        assert!(eval_basis(&s, 0, [0.3, 0.3], 3).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = space(3, 2);
        let cell = 7;
        let map = *s.cell_map(cell);
        let r = [0.21, 0.37];
        let x = map.to_physical(r);
        let eps = 1e-6;
        let val_at = |p: Point| s.values(map.to_reference(p));
        let grads = s.gradients(cell, r);
        let hess = s.hessians(cell);
        for i in 0..6 {
            for (k, e) in [Point::new(eps, 0.0), Point::new(0.0, eps)].iter().enumerate() {
                let fd = (val_at(x + e)[i] - val_at(x - e)[i]) / (2.0 * eps);
                assert!((fd - grads[i][k]).abs() < 1e-6);
                let gp = s.gradients(cell, map.to_reference(x + e))[i];
                let gm = s.gradients(cell, map.to_reference(x - e))[i];
                let fd2 = (gp - gm) / (2.0 * eps);
                assert!((fd2 - hess[i].column(k)).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        for (degree, tol) in [(1, 1e-13), (2, 1e-12)] {
            let s = space(4, degree);
            let a = full_active(&s);
            let u = move |p: Point| {
                if degree == 1 {
                    0.3 + 2.0 * p.x - 1.5 * p.y
                } else {
                    0.3 + 2.0 * p.x - 1.5 * p.y + p.x * p.x - 0.7 * p.x * p.y + 2.0 * p.y * p.y
                }
            };
            let f = interpolate(&s, &a, u);
            for c in 0..s.mesh.num_cells() {
                for r in [[0.1, 0.2], [0.6, 0.3], [1.0 / 3.0, 1.0 / 3.0]] {
                    let x = s.cell_map(c).to_physical(r);
                    assert!((f.value(&s, c, r) - u(x)).abs() <= tol);
                }
            }
        }
        let s = space(2, 1);
        let f = interpolate(&s, &full_active(&s), |_| 1.0);
        assert!(f.coefficients.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn continuity_across_facets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for degree in [1, 2] {
            let s = space(4, degree);
            let a = full_active(&s);
            let mut f = FEFunction::zero(&s, &a);
            f.coefficients.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
            for fi in s.mesh.interior_facets() {
                let facet = s.mesh.facets[fi];
                let (c0, c1) = (facet.cells.0, facet.cells.1.unwrap());
                let [p, q] = facet.vertices.map(|v| s.mesh.vertices[v]);
                for _ in 0..5 {
                    let x = p + rng.gen_range(0.0..1.0) * (q - p);
                    let v0 = f.value(&s, c0, s.cell_map(c0).to_reference(x));
                    let v1 = f.value(&s, c1, s.cell_map(c1).to_reference(x));
                    assert!((v0 - v1).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn transfer_on_static_domain_is_identity() {
        let s = space(8, 2);
        let d = MovingDomain::new(|x, _| (x - Point::new(0.5, 0.5)).norm_squared() - 0.09, 0.0, "c");
        let a0 = build_active_mesh(&s.mesh, &d, 0, 0.0, 0.05, None).unwrap();
        let a1 = build_active_mesh(&s.mesh, &d, 1, 0.1, 0.05, Some(&a0)).unwrap();
        let f = interpolate(&s, &a0, |p| p.x.sin() + p.y);
        let g = transfer(&s, &f, &a1).unwrap();
        assert_eq!(g.coefficients, f.coefficients);
        assert_eq!(g.num_zero_filled(), 0);
    }

    #[test]
    fn transfer_of_polynomial_interpolant_on_moving_domain() {
        let s = space(32, 2);
        let d = MovingDomain::new(
            |x, t| (x.x - 0.5 - t).powi(2) + (x.y - 0.5).powi(2) - 0.09,
            1.0,
            "circle",
        );
        let dt = 0.02;
        let a0 = build_active_mesh(&s.mesh, &d, 0, 0.0, 4.0 * dt, None).unwrap();
        let a1 = build_active_mesh(&s.mesh, &d, 1, dt, 4.0 * dt, Some(&a0)).unwrap();
        let p = |x: Point| 1.0 + x.x * x.y - 0.5 * x.y * x.y;
        let f = interpolate(&s, &a0, p);
        let g = transfer(&s, &f, &a1).unwrap();
        assert!(g.num_zero_filled() > 0);
        let exact = interpolate(&s, &a1, p);
        for cell in a1.domain_cells() {
            assert!(!g.touches_zero_filled(&s, cell));
            for &dof in s.cell_dofs(cell) {
                assert!((g.coefficients[dof] - exact.coefficients[dof]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn transfer_detects_missing_coverage() {
        let s = space(16, 1);
        let d = MovingDomain::new(
            |x, t| (x.x - 0.5 - t).powi(2) + (x.y - 0.5).powi(2) - 0.04,
            1.0,
            "circle",
        );
        let a0 = build_active_mesh(&s.mesh, &d, 0, 0.0, 0.0, None).unwrap();
        let a1 = build_active_mesh(&s.mesh, &d, 1, 0.2, 0.0, None).unwrap();
        let f = interpolate(&s, &a0, |_| 1.0);
        assert!(matches!(transfer(&s, &f, &a1), Err(Error::ExtensionCoverage { step: 1, .. })));
    }
}
