//! Legacy ASCII VTK output (and a minimal reader for round-trip checks).
//!
//! All primal fields at k = 0 are cell-wise quantities, so everything is
//! written as CELL_DATA: velocity, pressure, strain and stress magnitudes
//! at the barycenter, the yielded-cell indicator, and the multiplier
//! magnitude. Floats are printed with the shortest representation that
//! round-trips, which keeps files byte-stable across runs.

use crate::assembly::State;
use crate::error::{Error, Result};
use crate::fem::{hdiv_basis, DofLayout};
use crate::linalg::fmt_f64;
use crate::mesh::Mesh;
use crate::rheology::ModelParams;
use crate::tensor::frob;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Writes just the triangulation.
pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header_and_grid(&mut out, mesh)?;
    Ok(())
}

/// Writes the triangulation plus the solution fields as cell data.
pub fn write_solution(
    mesh: &Mesh,
    layout: &DofLayout,
    params: &ModelParams,
    state: &State,
    path: &Path,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_header_and_grid(&mut out, mesh)?;

    let n = mesh.num_cells();
    let third = [1.0 / 3.0; 3];
    writeln!(out, "CELL_DATA {n}")?;

    writeln!(out, "VECTORS velocity double")?;
    for cell in 0..n {
        let (ux, uy) = (state.u[2 * cell], state.u[2 * cell + 1]);
        writeln!(out, "{} {} 0", fmt_f64(ux), fmt_f64(uy))?;
    }

    let mut scalars: Vec<(&str, Vec<f64>)> = Vec::new();
    scalars.push(("pressure", state.phi.clone()));

    let mut strain = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    let mut multiplier = Vec::with_capacity(n);
    let mut stress = Vec::with_capacity(n);
    for cell in 0..n {
        let theta = state.theta_at(cell, third);
        let tmag = frob(&theta);
        strain.push(tmag);
        active.push(if params.chi_active(tmag) { 1.0 } else { 0.0 });
        multiplier.push(frob(&state.q_at(cell, third)));

        let (geo, basis) = hdiv_basis(mesh, cell)?;
        let bary = mesh.barycenter(cell);
        let _ = geo;
        let tensors = basis.eval_tensors(bary);
        let mut sig = [[0.0; 2]; 2];
        for (t, ten) in tensors.iter().enumerate() {
            let (edge, _) = mesh.cell_edges[cell][t / 4];
            let dof = layout.sigma_dof(edge, (t % 4) / 2, t % 2);
            let coeff = state.sigma[dof - layout.off_sigma];
            for r in 0..2 {
                for c in 0..2 {
                    sig[r][c] += coeff * ten[r][c];
                }
            }
        }
        stress.push(frob(&sig));
    }
    scalars.push(("strain_magnitude", strain));
    scalars.push(("stress_magnitude", stress));
    scalars.push(("active", active));
    scalars.push(("multiplier_magnitude", multiplier));

    for (name, values) in scalars {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(out, "{}", fmt_f64(v))?;
        }
    }
    Ok(())
}

fn write_header_and_grid(out: &mut impl Write, mesh: &Mesh) -> Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "viscoflow")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.num_vertices())?;
    for v in &mesh.vertices {
        writeln!(out, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]))?;
    }
    let c = mesh.num_cells();
    writeln!(out, "CELLS {c} {}", 4 * c)?;
    for cell in &mesh.cells {
        writeln!(out, "3 {} {} {}", cell[0], cell[1], cell[2])?;
    }
    writeln!(out, "CELL_TYPES {c}")?;
    for _ in 0..c {
        writeln!(out, "5")?;
    }
    Ok(())
}

/// Minimal parsed form of the files this module writes.
#[derive(Debug, Default)]
pub struct VtkGrid {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<[usize; 3]>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
    pub cell_vectors: BTreeMap<String, Vec<[f64; 3]>>,
}

/// Parses a legacy ASCII unstructured grid produced by [`write_solution`].
pub fn read_vtk(path: &Path) -> Result<VtkGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace().peekable();
    let mut grid = VtkGrid::default();

    fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::invalid(format!("malformed VTK file near {what}")))
    }

    let mut n_cells = 0usize;
    while let Some(tok) = tokens.next() {
        match tok {
            "POINTS" => {
                let n: usize = parse(tokens.next(), "POINTS")?;
                tokens.next(); // data type
                for _ in 0..n {
                    let x: f64 = parse(tokens.next(), "point")?;
                    let y: f64 = parse(tokens.next(), "point")?;
                    let z: f64 = parse(tokens.next(), "point")?;
                    grid.points.push([x, y, z]);
                }
            }
            "CELLS" => {
                let n: usize = parse(tokens.next(), "CELLS")?;
                tokens.next(); // total size
                n_cells = n;
                for _ in 0..n {
                    let k: usize = parse(tokens.next(), "cell arity")?;
                    if k != 3 {
                        return Err(Error::invalid("only triangle cells are supported"));
                    }
                    let a = parse(tokens.next(), "cell")?;
                    let b = parse(tokens.next(), "cell")?;
                    let c = parse(tokens.next(), "cell")?;
                    grid.cells.push([a, b, c]);
                }
            }
            "CELL_TYPES" => {
                let n: usize = parse(tokens.next(), "CELL_TYPES")?;
                for _ in 0..n {
                    let t: usize = parse(tokens.next(), "cell type")?;
                    if t != 5 {
                        return Err(Error::invalid("only VTK_TRIANGLE is supported"));
                    }
                }
            }
            "CELL_DATA" => {
                n_cells = parse(tokens.next(), "CELL_DATA")?;
            }
            "VECTORS" => {
                let name: String = parse(tokens.next(), "VECTORS name")?;
                tokens.next(); // data type
                let mut vals = Vec::with_capacity(n_cells);
                for _ in 0..n_cells {
                    let x: f64 = parse(tokens.next(), "vector")?;
                    let y: f64 = parse(tokens.next(), "vector")?;
                    let z: f64 = parse(tokens.next(), "vector")?;
                    vals.push([x, y, z]);
                }
                grid.cell_vectors.insert(name, vals);
            }
            "SCALARS" => {
                let name: String = parse(tokens.next(), "SCALARS name")?;
                tokens.next(); // data type
                tokens.next(); // component count
                let lut: String = parse(tokens.next(), "LOOKUP_TABLE")?;
                if lut != "LOOKUP_TABLE" {
                    return Err(Error::invalid("expected LOOKUP_TABLE"));
                }
                tokens.next(); // table name
                let mut vals = Vec::with_capacity(n_cells);
                for _ in 0..n_cells {
                    vals.push(parse(tokens.next(), "scalar")?);
                }
                grid.cell_scalars.insert(name, vals);
            }
            _ => {}
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::build_dof_layout;
    use crate::mesh::{build_crossed_rect, Rect};

    #[test]
    fn solution_round_trips_bitwise() {
        let mesh = build_crossed_rect(2, 2, Rect::UNIT).unwrap();
        let layout = build_dof_layout(&mesh).unwrap();
        let params = ModelParams::herschel_bulkley(1.75, 1.0, 2.5, 1e3).unwrap();
        let mut state = State::zeros(&layout);
        for (i, v) in state.theta.iter_mut().enumerate() {
            *v = (i as f64 * 0.618).sin() * 0.01;
        }
        for (i, v) in state.u.iter_mut().enumerate() {
            *v = (i as f64) / 7.0;
        }
        for (i, v) in state.sigma.iter_mut().enumerate() {
            *v = ((i * 13 % 5) as f64 - 2.0) * 0.25;
        }

        let dir = std::env::temp_dir().join("viscoflow_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("solution.vtk");
        write_solution(&mesh, &layout, &params, &state, &path).unwrap();
        let grid = read_vtk(&path).unwrap();

        assert_eq!(grid.points.len(), mesh.num_vertices());
        assert_eq!(grid.cells.len(), mesh.num_cells());
        assert_eq!(grid.cells, mesh.cells.iter().map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>());
        let velocity = &grid.cell_vectors["velocity"];
        for cell in 0..mesh.num_cells() {
            // Bitwise equality: the shortest round-trip formatting restores
            // the exact f64.
            assert_eq!(velocity[cell][0].to_bits(), state.u[2 * cell].to_bits());
            assert_eq!(velocity[cell][1].to_bits(), state.u[2 * cell + 1].to_bits());
        }
        for v in &grid.cell_scalars["active"] {
            assert!(*v == 0.0 || *v == 1.0);
        }
        // Deterministic output: a second write is byte-identical.
        let path2 = dir.join("solution2.vtk");
        write_solution(&mesh, &layout, &params, &state, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
