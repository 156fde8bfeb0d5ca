//! Fixed background triangulations of an axis-aligned box.
//!
//! Meshes are always generated: an `n × n` grid of squares, each split along
//! the bottom-left to top-right diagonal, optionally refined by midpoint
//! subdivision. Facets carry their incident cells so that jump terms can be
//! assembled without extra lookups.

use std::collections::HashMap;

use crate::{Error, Point, Result};

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub min: Point,
    pub max: Point,
}

impl BoxDomain {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    pub fn unit_square() -> Self {
        Self::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0))
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.max.x - self.min.x) + (self.max.y - self.min.y))
    }

    fn is_degenerate(&self) -> bool {
        !(self.max.x > self.min.x && self.max.y > self.min.y)
            || !self.min.iter().chain(self.max.iter()).all(|v| v.is_finite())
    }
}

/// An edge of the triangulation.
///
/// `cells.0 < cells.1` whenever the second cell exists; the facet normal
/// points out of `cells.0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    pub vertices: [usize; 2],
    pub cells: (usize, Option<usize>),
}

impl Facet {
    pub fn is_interior(&self) -> bool {
        self.cells.1.is_some()
    }
}

/// Geometric data of one facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetGeometry {
    pub normal: Point,
    pub length: f64,
    pub midpoint: Point,
}

#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub bbox: BoxDomain,
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    /// Facets of each cell, in the order of the local edges
    /// `(v0, v1)`, `(v1, v2)`, `(v2, v0)`.
    pub cell_facets: Vec<[usize; 3]>,
    /// Maximum cell diameter.
    pub h: f64,
    /// Subdivisions per axis of the equivalent uniform grid.
    pub subdivisions: usize,
}

impl BackgroundMesh {
    pub const DIM: usize = 2;

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        let [a, b, c] = self.cells[cell];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        0.5 * cross(b - a, c - a)
    }

    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn interior_facets(&self) -> impl Iterator<Item = usize> + '_ {
        self.facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_interior())
            .map(|(i, _)| i)
    }

    /// Unit normal (outward from the lower-indexed incident cell), length and
    /// midpoint of a facet.
    pub fn facet_geometry(&self, facet: usize) -> Result<FacetGeometry> {
        let f = self
            .facets
            .get(facet)
            .ok_or_else(|| Error::invalid(format!("facet index {facet} out of range")))?;
        let p = self.vertices[f.vertices[0]];
        let q = self.vertices[f.vertices[1]];
        let t = q - p;
        let length = t.norm();
        let mut normal = Point::new(t.y, -t.x) / length;
        let opposite = self.opposite_vertex(f.cells.0, f.vertices);
        if normal.dot(&(self.vertices[opposite] - p)) > 0.0 {
            normal = -normal;
        }
        Ok(FacetGeometry {
            normal,
            length,
            midpoint: 0.5 * (p + q),
        })
    }

    /// Outward unit normal of `facet` as seen from `cell`.
    pub fn outward_normal(&self, cell: usize, facet: usize) -> Result<Point> {
        let g = self.facet_geometry(facet)?;
        let f = &self.facets[facet];
        if f.cells.0 == cell {
            Ok(g.normal)
        } else if f.cells.1 == Some(cell) {
            Ok(-g.normal)
        } else {
            Err(Error::invalid(format!(
                "cell {cell} is not incident to facet {facet}"
            )))
        }
    }

    fn opposite_vertex(&self, cell: usize, edge: [usize; 2]) -> usize {
        self.cells[cell]
            .iter()
            .copied()
            .find(|v| !edge.contains(v))
            .expect("triangle has a vertex off each edge")
    }

    fn from_cells(
        bbox: BoxDomain,
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        subdivisions: usize,
    ) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(cells.len() * 2);
        let mut facets: Vec<Facet> = Vec::with_capacity(cells.len() * 3 / 2 + subdivisions * 4);
        let mut cell_facets = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            let mut local = [0usize; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let (a, b) = (cell[k], cell[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *slot = *lookup.entry(key).or_insert_with(|| {
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        cells: (ci, None),
                    });
                    facets.len() - 1
                });
                let f = &mut facets[*slot];
                if f.cells.0 != ci {
                    f.cells.1 = Some(ci);
                }
            }
            cell_facets.push(local);
        }
        let mut mesh = Self {
            bbox,
            vertices,
            cells,
            facets,
            cell_facets,
            h: 0.0,
            subdivisions,
        };
        mesh.h = (0..mesh.num_cells())
            .map(|c| mesh.cell_diameter(c))
            .fold(0.0, f64::max);
        mesh
    }
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Uniform criss-cross triangulation with `n` squares per axis.
pub fn build_uniform_mesh(bbox: BoxDomain, n: usize) -> Result<BackgroundMesh> {
    if n == 0 {
        return Err(Error::invalid("number of subdivisions must be at least 1"));
    }
    if bbox.is_degenerate() {
        return Err(Error::invalid(format!("degenerate box {bbox:?}")));
    }
    let dx = (bbox.max.x - bbox.min.x) / n as f64;
    let dy = (bbox.max.y - bbox.min.y) / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // Snap the last row/column to the box to avoid round-off drift.
            let x = if i == n { bbox.max.x } else { bbox.min.x + i as f64 * dx };
            let y = if j == n { bbox.max.y } else { bbox.min.y + j as f64 * dy };
            vertices.push(Point::new(x, y));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    Ok(BackgroundMesh::from_cells(bbox, vertices, cells, n))
}

/// Splits every triangle into four congruent children through its edge
/// midpoints.
pub fn refine_uniform(mesh: &BackgroundMesh) -> BackgroundMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint_of = vec![usize::MAX; mesh.num_facets()];
    for (fi, f) in mesh.facets.iter().enumerate() {
        let [a, b] = f.vertices;
        vertices.push(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        midpoint_of[fi] = vertices.len() - 1;
    }
    let mut cells = Vec::with_capacity(4 * mesh.num_cells());
    for (cell, local) in mesh.cells.iter().zip(&mesh.cell_facets) {
        let [a, b, c] = *cell;
        let (ab, bc, ca) = (
            midpoint_of[local[0]],
            midpoint_of[local[1]],
            midpoint_of[local[2]],
        );
        cells.push([a, ab, ca]);
        cells.push([ab, b, bc]);
        cells.push([ca, bc, c]);
        cells.push([ab, bc, ca]);
    }
    BackgroundMesh::from_cells(mesh.bbox, vertices, cells, mesh.subdivisions * 2)
}
