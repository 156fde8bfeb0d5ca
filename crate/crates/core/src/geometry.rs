//! Level-set description of the moving domain and the per-step active mesh.
//!
//! Cells are classified from seven samples of the level set (vertices, edge
//! midpoints, centroid). A value `phi <= 0` counts as inside. Cells outside
//! `Ω(t)` whose smallest sample is at most `delta` belong to the extension
//! strip and stay active.

use std::fmt;
use std::sync::Arc;

use crate::mesh::BackgroundMesh;
use crate::{Error, Point, Result};

pub type LevelSetFn = dyn Fn(Point, f64) -> f64 + Send + Sync;

/// A domain `Ω(t) = { x : phi(x, t) <= 0 }`.
#[derive(Clone)]
pub struct MovingDomain {
    pub phi: Arc<LevelSetFn>,
    /// Maximal normal speed of the boundary.
    pub w_max: f64,
    pub description: String,
}

impl MovingDomain {
    pub fn new(
        phi: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        w_max: f64,
        description: impl Into<String>,
    ) -> Self {
        Self {
            phi: Arc::new(phi),
            w_max,
            description: description.into(),
        }
    }

    /// `phi ≡ -1`: the domain covers the whole bounding box at all times.
    pub fn everywhere() -> Self {
        Self::new(|_, _| -1.0, 0.0, "whole box")
    }

    #[inline]
    pub fn phi(&self, x: Point, t: f64) -> f64 {
        (self.phi)(x, t)
    }
}

impl fmt::Debug for MovingDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MovingDomain")
            .field("w_max", &self.w_max)
            .field("description", &self.description)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Inside,
    Cut,
    /// Outside `Ω(t)` but within the `δ`-neighbourhood.
    Strip,
    Outside,
}

impl CellClass {
    pub fn is_active(self) -> bool {
        self != CellClass::Outside
    }

    /// Whether the cell has a nonempty intersection with `Ω(t)`.
    pub fn meets_domain(self) -> bool {
        matches!(self, CellClass::Inside | CellClass::Cut)
    }

    pub fn code(self) -> u8 {
        match self {
            CellClass::Inside => 0,
            CellClass::Cut => 1,
            CellClass::Strip => 2,
            CellClass::Outside => 3,
        }
    }
}

/// Returns `4·dt`.
pub fn delta_default(dt: f64) -> Result<f64> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(4.0 * dt)
}

/// The seven sample points of a cell.
pub fn cell_samples(mesh: &BackgroundMesh, cell: usize) -> [Point; 7] {
    let [a, b, c] = mesh.cell_vertices(cell);
    [
        a,
        b,
        c,
        0.5 * (a + b),
        0.5 * (b + c),
        0.5 * (c + a),
        (a + b + c) / 3.0,
    ]
}

fn classify_samples(values: &[f64], delta: f64) -> CellClass {
    let any_in = values.iter().any(|&v| v <= 0.0);
    let any_out = values.iter().any(|&v| v > 0.0);
    match (any_in, any_out) {
        (true, true) => CellClass::Cut,
        (true, false) => CellClass::Inside,
        _ => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            if min <= delta {
                CellClass::Strip
            } else {
                CellClass::Outside
            }
        }
    }
}

pub fn classify_cells(
    mesh: &BackgroundMesh,
    domain: &MovingDomain,
    t: f64,
    delta: f64,
) -> Result<Vec<CellClass>> {
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("delta must be nonnegative, got {delta}")));
    }
    Ok((0..mesh.num_cells())
        .map(|c| {
            let samples = cell_samples(mesh, c).map(|x| domain.phi(x, t));
            classify_samples(&samples, delta)
        })
        .collect())
}

/// Active triangulation and facet sets of one time step.
#[derive(Debug, Clone)]
pub struct ActiveMesh {
    pub step: usize,
    pub t: f64,
    pub delta: f64,
    pub classes: Vec<CellClass>,
    pub active_cells: Vec<usize>,
    /// Facets whose two cells both lie inside the domain.
    pub f_int: Vec<usize>,
    /// Facets with at least one cut incident cell.
    pub f_cut: Vec<usize>,
    /// Remaining interior facets of the active submesh.
    pub f_ext: Vec<usize>,
    /// Cells meeting `Ω^n` that lay only in the `δ`-strip at the previous step.
    pub strip_cells: Option<Vec<usize>>,
}

impl ActiveMesh {
    pub fn is_active(&self, cell: usize) -> bool {
        self.classes[cell].is_active()
    }

    /// Ghost-penalty facets `F_cut ∪ F_ext`, sorted.
    pub fn ghost_facets(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.f_cut.iter().chain(&self.f_ext).copied().collect();
        g.sort_unstable();
        g
    }

    /// Cells that intersect `Ω^n`.
    pub fn domain_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_cells
            .iter()
            .copied()
            .filter(|&c| self.classes[c].meets_domain())
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }
}

/// Classifies cells at time `t` and builds the facet sets. With `prev`, also
/// checks that every cell meeting `Ω^n` was active at the previous step and
/// records the strip cells.
pub fn build_active_mesh(
    mesh: &BackgroundMesh,
    domain: &MovingDomain,
    step: usize,
    t: f64,
    delta: f64,
    prev: Option<&ActiveMesh>,
) -> Result<ActiveMesh> {
    let classes = classify_cells(mesh, domain, t, delta)?;
    let active_cells: Vec<usize> = (0..mesh.num_cells())
        .filter(|&c| classes[c].is_active())
        .collect();

    let (mut f_int, mut f_cut, mut f_ext) = (Vec::new(), Vec::new(), Vec::new());
    for (fi, f) in mesh.facets.iter().enumerate() {
        let (a, Some(b)) = f.cells else { continue };
        let (ca, cb) = (classes[a], classes[b]);
        if !ca.is_active() || !cb.is_active() {
            continue;
        }
        if ca == CellClass::Cut || cb == CellClass::Cut {
            f_cut.push(fi);
        } else if ca == CellClass::Inside && cb == CellClass::Inside {
            f_int.push(fi);
        } else {
            f_ext.push(fi);
        }
    }

    let strip_cells = match prev {
        None => None,
        Some(prev) => {
            if prev.classes.len() != classes.len() {
                return Err(Error::invalid("previous active mesh belongs to another mesh"));
            }
            let mut strip = Vec::new();
            for &c in &active_cells {
                if !classes[c].meets_domain() {
                    continue;
                }
                if !prev.classes[c].is_active() {
                    return Err(Error::ExtensionCoverage { step, cell: c });
                }
                if prev.classes[c] == CellClass::Strip {
                    strip.push(c);
                }
            }
            Some(strip)
        }
    };

    Ok(ActiveMesh {
        step,
        t,
        delta,
        classes,
        active_cells,
        f_int,
        f_cut,
        f_ext,
        strip_cells,
    })
}
