//! Quadrature on the reference triangle and on segments, and the linear
//! reconstruction of cut cells.
//!
//! Cut cells are split by the zero line of the linear interpolant of the
//! level set (marching triangles). The part with `phi <= 0` is triangulated
//! and integrated with a reference rule mapped onto each sub-triangle.

use std::f64::consts::PI;

use crate::geometry::{ActiveMesh, MovingDomain};
use crate::mesh::{cross, BackgroundMesh};
use crate::{Error, Point, Result};

/// Highest supported triangle rule degree.
pub const MAX_DEGREE: usize = 6;

/// Quadrature rule on the reference triangle `{(ξ, η) : ξ, η >= 0, ξ + η <= 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre rule with `n` points on `[0, 1]`; exact up to degree `2n-1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let nodes = nodes.into_iter().map(|x| 0.5 * (x + 1.0)).collect();
    let weights = weights.into_iter().map(|w| 0.5 * w).collect();
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss points needed on a segment to integrate polynomials of `degree`.
pub fn segment_points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Triangle rule exact for polynomials of total degree `degree`.
///
/// Degrees 1 and 2 use the centroid and edge-midpoint-free three-point rules;
/// higher degrees use a collapsed tensor Gauss rule.
pub fn reference_rule(degree: usize) -> Result<QuadRule> {
    match degree {
        0 => Err(Error::invalid("quadrature degree must be at least 1")),
        1 => Ok(QuadRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            degree,
        }),
        2 => Ok(QuadRule {
            points: vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            weights: vec![1.0 / 6.0; 3],
            degree,
        }),
        d if d <= MAX_DEGREE => {
            // (s, r) in [0,1]^2 -> (ξ, η) = (s, r(1-s)), Jacobian (1-s).
            // Exact in s up to degree d+1, so n >= (d+2)/2.
            let n = (d + 3) / 2;
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let (s, r) = (x[i], x[j]);
                    points.push([s, r * (1.0 - s)]);
                    weights.push(w[i] * w[j] * (1.0 - s));
                }
            }
            Ok(QuadRule {
                points,
                weights,
                degree,
            })
        }
        d => Err(Error::invalid(format!(
            "unsupported quadrature degree {d} (max {MAX_DEGREE})"
        ))),
    }
}

/// Maps reference coordinates onto the triangle `tri`.
#[inline]
pub fn map_to_triangle(tri: &[Point; 3], r: [f64; 2]) -> Point {
    tri[0] + r[0] * (tri[1] - tri[0]) + r[1] * (tri[2] - tri[0])
}

pub fn triangle_area(tri: &[Point; 3]) -> f64 {
    0.5 * cross(tri[1] - tri[0], tri[2] - tri[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// Piece of the reconstructed interface `phi_h = 0`.
    Interface,
    /// Piece of the bounding box lying inside the domain.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySegment {
    pub endpoints: [Point; 2],
    /// Outward unit normal of the domain.
    pub normal: Point,
    pub kind: BoundaryKind,
}

impl BoundarySegment {
    pub fn length(&self) -> f64 {
        (self.endpoints[1] - self.endpoints[0]).norm()
    }
}

/// The part of one cell inside the discrete domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CutCellGeometry {
    pub interior_subtris: Vec<[Point; 3]>,
    pub boundary_segments: Vec<BoundarySegment>,
}

impl CutCellGeometry {
    pub fn interior_area(&self) -> f64 {
        self.interior_subtris.iter().map(triangle_area).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.interior_subtris.is_empty() && self.boundary_segments.is_empty()
    }
}

/// Relative size below which sub-triangles and segments are dropped.
const SLIVER: f64 = 1e-14;

fn push_tri(out: &mut Vec<[Point; 3]>, tri: [Point; 3], scale: f64) {
    if triangle_area(&tri).abs() > SLIVER * scale {
        out.push(tri);
    }
}

/// Marching-triangles decomposition of one triangle by the linear
/// interpolant of `phi_vals`. A vertex with `phi == 0` counts as inside.
pub fn cut_triangle(vertices: [Point; 3], phi_vals: [f64; 3]) -> Result<CutCellGeometry> {
    let area = 0.5 * cross(vertices[1] - vertices[0], vertices[2] - vertices[0]);
    if !(area.abs() > 0.0) || !area.is_finite() {
        return Err(Error::invalid("degenerate triangle"));
    }
    let inside = phi_vals.map(|p| p <= 0.0);
    let n_in = inside.iter().filter(|&&b| b).count();
    let scale = area.abs();
    let mut geo = CutCellGeometry::default();
    match n_in {
        0 => {}
        3 => geo.interior_subtris.push(vertices),
        _ => {
            // Rotate so that the odd vertex out is first: (i, j, k) stays cyclic.
            let odd_is_inside = n_in == 1;
            let i = (0..3).find(|&v| inside[v] == odd_is_inside).unwrap();
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let crossing = |a: usize, b: usize| {
                let t = phi_vals[a] / (phi_vals[a] - phi_vals[b]);
                vertices[a] + t * (vertices[b] - vertices[a])
            };
            let p_ij = crossing(i, j);
            let p_ik = crossing(i, k);
            if odd_is_inside {
                push_tri(&mut geo.interior_subtris, [vertices[i], p_ij, p_ik], scale);
            } else {
                // quad (j, k, p_ik, p_ij) split along its first diagonal j - p_ik
                push_tri(&mut geo.interior_subtris, [vertices[j], vertices[k], p_ik], scale);
                push_tri(&mut geo.interior_subtris, [vertices[j], p_ik, p_ij], scale);
            }
            let grad = linear_gradient(&vertices, &phi_vals);
            let normal = grad / grad.norm();
            let seg = BoundarySegment {
                endpoints: [p_ij, p_ik],
                normal,
                kind: BoundaryKind::Interface,
            };
            if seg.length() > SLIVER * scale.sqrt() {
                geo.boundary_segments.push(seg);
            }
        }
    }
    if area < 0.0 {
        for tri in &mut geo.interior_subtris {
            tri.swap(1, 2);
        }
    }
    Ok(geo)
}

/// Gradient of the linear interpolant of `vals` on `tri`.
fn linear_gradient(tri: &[Point; 3], vals: &[f64; 3]) -> Point {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let det = cross(e1, e2);
    let d1 = vals[1] - vals[0];
    let d2 = vals[2] - vals[0];
    Point::new(d1 * e2.y - d2 * e1.y, d2 * e1.x - d1 * e2.x) / det
}

/// Level-set values at the vertices of `cell`.
pub fn vertex_phi(mesh: &BackgroundMesh, domain: &MovingDomain, t: f64, cell: usize) -> [f64; 3] {
    mesh.cell_vertices(cell).map(|x| domain.phi(x, t))
}

/// Cut geometry of a background cell, including the parts of the bounding
/// box boundary that lie inside the domain.
pub fn cell_geometry(
    mesh: &BackgroundMesh,
    domain: &MovingDomain,
    t: f64,
    cell: usize,
) -> CutCellGeometry {
    let verts = mesh.cell_vertices(cell);
    let phi = vertex_phi(mesh, domain, t, cell);
    let mut geo = cut_triangle(verts, phi).expect("background cells are non-degenerate");
    for (k, &fi) in mesh.cell_facets[cell].iter().enumerate() {
        if mesh.facets[fi].is_interior() {
            continue;
        }
        let (a, b) = (k, (k + 1) % 3);
        let clipped = match (phi[a] <= 0.0, phi[b] <= 0.0) {
            (true, true) => Some([verts[a], verts[b]]),
            (false, false) => None,
            (true, false) => {
                let t = phi[a] / (phi[a] - phi[b]);
                Some([verts[a], verts[a] + t * (verts[b] - verts[a])])
            }
            (false, true) => {
                let t = phi[b] / (phi[b] - phi[a]);
                Some([verts[b] + t * (verts[a] - verts[b]), verts[b]])
            }
        };
        if let Some(endpoints) = clipped {
            if (endpoints[1] - endpoints[0]).norm() > SLIVER * mesh.h {
                geo.boundary_segments.push(BoundarySegment {
                    endpoints,
                    normal: mesh.outward_normal(cell, fi).expect("facet of this cell"),
                    kind: BoundaryKind::Box,
                });
            }
        }
    }
    geo
}

/// `∫_{Ω_h ∩ active cells} f dx` with a rule of the given degree.
pub fn integrate_cut_volume(
    active: &ActiveMesh,
    mesh: &BackgroundMesh,
    domain: &MovingDomain,
    t: f64,
    degree: usize,
    f: impl Fn(Point) -> f64,
) -> Result<f64> {
    let rule = reference_rule(degree)?;
    let mut total = 0.0;
    for cell in active.domain_cells() {
        let geo = cell_geometry(mesh, domain, t, cell);
        for tri in &geo.interior_subtris {
            let jac = 2.0 * triangle_area(tri);
            for (r, w) in rule.iter() {
                total += w * jac * f(map_to_triangle(tri, r));
            }
        }
    }
    Ok(total)
}

/// `∫_{∂Ω_h} f(x, n) ds` over the reconstructed boundary.
pub fn integrate_cut_boundary(
    active: &ActiveMesh,
    mesh: &BackgroundMesh,
    domain: &MovingDomain,
    t: f64,
    degree: usize,
    f: impl Fn(Point, Point) -> f64,
) -> Result<f64> {
    if degree == 0 || degree > 2 * MAX_DEGREE {
        return Err(Error::invalid(format!("unsupported boundary degree {degree}")));
    }
    let (s, w) = gauss_legendre(segment_points_for(degree));
    let mut total = 0.0;
    for cell in active.domain_cells() {
        let geo = cell_geometry(mesh, domain, t, cell);
        for seg in &geo.boundary_segments {
            let len = seg.length();
            let [p, q] = seg.endpoints;
            for (si, wi) in s.iter().zip(&w) {
                total += wi * len * f(p + *si * (q - p), seg.normal);
            }
        }
    }
    Ok(total)
}
