//! Legacy ASCII VTK output of a discrete solution on the active cells.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::fespace::{FEFunction, FESpace};
use crate::geometry::ActiveMesh;
use crate::{Point, Result};

/// Writes the active cells as triangles with the vertex values of `u`, the
/// exact solution and each cell's class (0 inside, 1 cut, 2 strip).
pub fn write_step(
    path: &Path,
    space: &FESpace,
    active: &ActiveMesh,
    u: &FEFunction,
    exact: impl Fn(Point) -> f64,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_to(&mut out, space, active, u, exact)?;
    out.flush()?;
    Ok(())
}

pub fn write_to(
    out: &mut impl Write,
    space: &FESpace,
    active: &ActiveMesh,
    u: &FEFunction,
    exact: impl Fn(Point) -> f64,
) -> Result<()> {
    let mesh = &space.mesh;
    let mut index = vec![usize::MAX; mesh.num_vertices()];
    let mut points = Vec::new();
    for &c in &active.active_cells {
        for &v in &mesh.cells[c] {
            if index[v] == usize::MAX {
                index[v] = points.len();
                points.push(v);
            }
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "solution at t = {}", active.t)?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", points.len())?;
    for &v in &points {
        let x = mesh.vertices[v];
        writeln!(out, "{} {} 0", x.x, x.y)?;
    }
    let nc = active.active_cells.len();
    writeln!(out, "CELLS {} {}", nc, 4 * nc)?;
    for &c in &active.active_cells {
        let [a, b, d] = mesh.cells[c].map(|v| index[v]);
        writeln!(out, "3 {a} {b} {d}")?;
    }
    writeln!(out, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(out, "5")?;
    }
    writeln!(out, "CELL_DATA {nc}")?;
    writeln!(out, "SCALARS cell_class int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &c in &active.active_cells {
        writeln!(out, "{}", active.classes[c].code())?;
    }
    writeln!(out, "POINT_DATA {}", points.len())?;
    // vertex DOFs carry the global vertex index in both spaces
    writeln!(out, "SCALARS u_h double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &v in &points {
        writeln!(out, "{}", u.coefficients[v])?;
    }
    writeln!(out, "SCALARS u_exact double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &v in &points {
        writeln!(out, "{}", exact(mesh.vertices[v]))?;
    }
    Ok(())
}
