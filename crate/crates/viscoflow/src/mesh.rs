//! Conforming 2D triangulations used by the solver.
//!
//! Two generators are provided: a rectangle meshed in a *crossed* pattern
//! (each grid square split into four triangles meeting at its barycenter,
//! which preserves the symmetries of the rectangle) and a straight channel
//! with a symmetric contraction of the middle third.
//!
//! Edges carry a global orientation fixed lexicographically by vertex index
//! (low index to high index), which makes the signs of H(div) degrees of
//! freedom deterministic.

use crate::error::{Error, Result};
use crate::tensor::Vec2;

/// Classification of mesh edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    Left,
    Right,
    Bottom,
    Top,
    Wall,
    Inflow,
    Outflow,
}

impl BoundaryTag {
    pub fn is_boundary(self) -> bool {
        self != BoundaryTag::Interior
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// A conforming triangulation with oriented edges and boundary tags.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Vertex coordinates.
    pub vertices: Vec<Vec2>,
    /// Vertex index triples, counterclockwise.
    pub cells: Vec<[usize; 3]>,
    /// Vertex index pairs with global orientation low index -> high index.
    pub edges: Vec<[usize; 2]>,
    /// For each cell, its three edges in traversal order (local edge `j`
    /// connects local vertices `j` and `(j+1) % 3`) with the sign relating
    /// the traversal direction to the global edge orientation.
    pub cell_edges: Vec<[(usize, i8); 3]>,
    /// Cells adjacent to each edge; boundary edges have one neighbor.
    pub edge_cells: Vec<[Option<usize>; 2]>,
    /// Tag per edge; `Interior` exactly for the interior edges.
    pub boundary_tags: Vec<BoundaryTag>,
}

/// Geometry of the affine map from the reference triangle
/// `{(0,0), (1,0), (0,1)}` onto a physical cell.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    /// Columns are the edge vectors `v1 - v0` and `v2 - v0`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inv_transpose: [[f64; 2]; 2],
    pub area: f64,
    /// Outward unit normals per local edge.
    pub edge_normals: [Vec2; 3],
    pub edge_lengths: [f64; 3],
    /// First vertex of the cell, the image of the reference origin.
    pub origin: Vec2,
}

impl CellGeometry {
    /// Maps a reference point to physical coordinates.
    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> Vec2 {
        [
            self.origin[0] + self.jacobian[0][0] * xi[0] + self.jacobian[0][1] * xi[1],
            self.origin[1] + self.jacobian[1][0] * xi[0] + self.jacobian[1][1] * xi[1],
        ]
    }
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Barycenter of a cell.
    pub fn barycenter(&self, cell: usize) -> Vec2 {
        let [a, b, c] = self.cells[cell];
        let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [
            (va[0] + vb[0] + vc[0]) / 3.0,
            (va[1] + vb[1] + vc[1]) / 3.0,
        ]
    }

    /// Signed area of a cell (positive for counterclockwise orientation).
    pub fn signed_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cells[cell];
        let (va, vb, vc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((vb[0] - va[0]) * (vc[1] - va[1]) - (vc[0] - va[0]) * (vb[1] - va[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.signed_area(c)).sum()
    }

    /// Maximum cell diameter.
    pub fn max_diameter(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in &self.cells {
            for j in 0..3 {
                let a = self.vertices[cell[j]];
                let b = self.vertices[cell[(j + 1) % 3]];
                h = h.max(((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Checks the structural invariants: consistent orientation, two-sided
    /// interior edges, Euler relation and boundary tag coverage.
    pub fn validate(&self) -> Result<()> {
        for c in 0..self.num_cells() {
            if self.signed_area(c) <= 0.0 {
                return Err(Error::invalid(format!("cell {c} is not counterclockwise")));
            }
        }
        let (v, e, c) = (self.num_vertices(), self.num_edges(), self.num_cells());
        if v + c != e + 1 {
            return Err(Error::invalid(format!(
                "Euler relation violated: V={v}, E={e}, C={c}"
            )));
        }
        let mut seen = vec![0usize; e];
        for ce in &self.cell_edges {
            for &(idx, _) in ce {
                seen[idx] += 1;
            }
        }
        for (idx, &count) in seen.iter().enumerate() {
            let tag = self.boundary_tags[idx];
            match count {
                1 if tag.is_boundary() => {}
                2 if tag == BoundaryTag::Interior => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "edge {idx} shared by {count} cells but tagged {tag:?}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Builds the edge tables for a vertex/cell soup and tags boundary edges
/// through `tag_edge(midpoint)`.
fn finish_mesh(
    vertices: Vec<Vec2>,
    cells: Vec<[usize; 3]>,
    tag_edge: impl Fn(Vec2) -> BoundaryTag,
) -> Mesh {
    use std::collections::HashMap;

    let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut edge_cells: Vec<[Option<usize>; 2]> = Vec::new();
    let mut cell_edges = Vec::with_capacity(cells.len());

    for (ci, cell) in cells.iter().enumerate() {
        let mut local = [(0usize, 0i8); 3];
        for j in 0..3 {
            let a = cell[j];
            let b = cell[(j + 1) % 3];
            let key = (a.min(b), a.max(b));
            let idx = *edge_ids.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                edge_cells.push([None, None]);
                edges.len() - 1
            });
            let slot = if edge_cells[idx][0].is_none() { 0 } else { 1 };
            edge_cells[idx][slot] = Some(ci);
            local[j] = (idx, if a < b { 1 } else { -1 });
        }
        cell_edges.push(local);
    }

    let boundary_tags = edges
        .iter()
        .zip(&edge_cells)
        .map(|(e, adj)| {
            if adj[1].is_some() {
                BoundaryTag::Interior
            } else {
                let (a, b) = (vertices[e[0]], vertices[e[1]]);
                tag_edge([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])
            }
        })
        .collect();

    Mesh { vertices, cells, edges, cell_edges, edge_cells, boundary_tags }
}

fn side_tagger(rect: Rect) -> impl Fn(Vec2) -> BoundaryTag {
    let tol = 1e-12 * (1.0 + rect.x1.abs() + rect.y1.abs() + rect.x0.abs() + rect.y0.abs());
    move |m: Vec2| {
        if (m[0] - rect.x0).abs() < tol {
            BoundaryTag::Left
        } else if (m[0] - rect.x1).abs() < tol {
            BoundaryTag::Right
        } else if (m[1] - rect.y0).abs() < tol {
            BoundaryTag::Bottom
        } else if (m[1] - rect.y1).abs() < tol {
            BoundaryTag::Top
        } else {
            BoundaryTag::Wall
        }
    }
}

/// Meshes `bounds` with `nx` by `ny` grid squares, each split into four
/// triangles meeting at the square's barycenter. Boundary edges are tagged
/// `Left`/`Right`/`Bottom`/`Top` by geometric side.
pub fn build_crossed_rect(nx: usize, ny: usize, bounds: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("cell counts must be at least 1"));
    }
    if !(bounds.x1 > bounds.x0) || !(bounds.y1 > bounds.y0) {
        return Err(Error::invalid("degenerate rectangle"));
    }

    let dx = (bounds.x1 - bounds.x0) / nx as f64;
    let dy = (bounds.y1 - bounds.y0) / ny as f64;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for iy in 0..=ny {
        for ix in 0..=nx {
            // Endpoints are exact so side tagging is robust.
            let x = if ix == nx { bounds.x1 } else { bounds.x0 + ix as f64 * dx };
            let y = if iy == ny { bounds.y1 } else { bounds.y0 + iy as f64 * dy };
            vertices.push([x, y]);
        }
    }
    let center_base = vertices.len();
    for iy in 0..ny {
        for ix in 0..nx {
            vertices.push([
                bounds.x0 + (ix as f64 + 0.5) * dx,
                bounds.y0 + (iy as f64 + 0.5) * dy,
            ]);
        }
    }

    let vid = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut cells = Vec::with_capacity(4 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (bl, br) = (vid(ix, iy), vid(ix + 1, iy));
            let (tr, tl) = (vid(ix + 1, iy + 1), vid(ix, iy + 1));
            let c = center_base + iy * nx + ix;
            cells.push([bl, br, c]);
            cells.push([br, tr, c]);
            cells.push([tr, tl, c]);
            cells.push([tl, bl, c]);
        }
    }

    Ok(finish_mesh(vertices, cells, side_tagger(bounds)))
}

/// Meshes a straight channel `[0, length] x [-half_height, half_height]`
/// whose middle third is symmetrically contracted to
/// `contraction_ratio * half_height`. The half-height profile ramps linearly
/// over one grid column on each flank of the middle third so the mesh stays
/// conforming; rows follow the profile, columns keep the crossed pattern.
///
/// Boundary tags: `Inflow` on `x = 0`, `Outflow` on `x = length`, `Wall`
/// elsewhere.
pub fn build_channel(
    length: f64,
    half_height: f64,
    contraction_ratio: f64,
    resolution: usize,
) -> Result<Mesh> {
    if !(contraction_ratio > 0.0 && contraction_ratio < 1.0) {
        return Err(Error::invalid("contraction ratio must lie in (0, 1)"));
    }
    if resolution < 2 {
        return Err(Error::invalid("resolution must be at least 2 cells per unit"));
    }
    if !(length > 0.0) || !(half_height > 0.0) {
        return Err(Error::invalid("degenerate channel dimensions"));
    }

    let nx = (length * resolution as f64).round().max(1.0) as usize;
    let ny = (2.0 * half_height * resolution as f64).round().max(1.0) as usize;
    let w = length / nx as f64;
    let (xa, xb) = (length / 3.0, 2.0 * length / 3.0);

    let profile = |x: f64| -> f64 {
        let r = contraction_ratio;
        if x <= xa - w || x >= xb + w {
            half_height
        } else if x >= xa && x <= xb {
            r * half_height
        } else if x < xa {
            let t = (x - (xa - w)) / w;
            half_height * (1.0 - t * (1.0 - r))
        } else {
            let t = (x - xb) / w;
            half_height * (r + t * (1.0 - r))
        }
    };
    let grid_x = |ix: usize| if ix == nx { length } else { ix as f64 * w };
    let grid_y = |ix: usize, iy: usize| {
        let h = profile(grid_x(ix));
        h * (2.0 * iy as f64 / ny as f64 - 1.0)
    };

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for iy in 0..=ny {
        for ix in 0..=nx {
            vertices.push([grid_x(ix), grid_y(ix, iy)]);
        }
    }
    let center_base = vertices.len();
    let vid = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    for iy in 0..ny {
        for ix in 0..nx {
            let corners = [vid(ix, iy), vid(ix + 1, iy), vid(ix + 1, iy + 1), vid(ix, iy + 1)];
            let mut cx = 0.0;
            let mut cy = 0.0;
            for &v in &corners {
                cx += vertices[v][0];
                cy += vertices[v][1];
            }
            vertices.push([0.25 * cx, 0.25 * cy]);
        }
    }

    let mut cells = Vec::with_capacity(4 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (bl, br) = (vid(ix, iy), vid(ix + 1, iy));
            let (tr, tl) = (vid(ix + 1, iy + 1), vid(ix, iy + 1));
            let c = center_base + iy * nx + ix;
            cells.push([bl, br, c]);
            cells.push([br, tr, c]);
            cells.push([tr, tl, c]);
            cells.push([tl, bl, c]);
        }
    }

    let tol = 1e-12 * (1.0 + length + half_height);
    Ok(finish_mesh(vertices, cells, move |m: Vec2| {
        if m[0].abs() < tol {
            BoundaryTag::Inflow
        } else if (m[0] - length).abs() < tol {
            BoundaryTag::Outflow
        } else {
            BoundaryTag::Wall
        }
    }))
}

/// Affine geometry of one cell.
pub fn cell_geometry(mesh: &Mesh, cell: usize) -> Result<CellGeometry> {
    if cell >= mesh.num_cells() {
        return Err(Error::invalid(format!(
            "cell index {cell} out of range ({} cells)",
            mesh.num_cells()
        )));
    }
    let [a, b, c] = mesh.cells[cell];
    let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let jacobian = [[vb[0] - va[0], vc[0] - va[0]], [vb[1] - va[1], vc[1] - va[1]]];
    let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
    if det <= 0.0 {
        return Err(Error::invalid(format!("cell {cell} is degenerate or inverted")));
    }
    let inv_transpose = [
        [jacobian[1][1] / det, -jacobian[1][0] / det],
        [-jacobian[0][1] / det, jacobian[0][0] / det],
    ];

    let verts = [va, vb, vc];
    let mut edge_normals = [[0.0; 2]; 3];
    let mut edge_lengths = [0.0; 3];
    for j in 0..3 {
        let p = verts[j];
        let q = verts[(j + 1) % 3];
        let t = [q[0] - p[0], q[1] - p[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        // Counterclockwise traversal puts the outward normal at -90 degrees
        // from the tangent.
        edge_normals[j] = [t[1] / len, -t[0] / len];
        edge_lengths[j] = len;
    }

    Ok(CellGeometry {
        jacobian,
        det,
        inv_transpose,
        area: det / 2.0,
        edge_normals,
        edge_lengths,
        origin: va,
    })
}

/// Unit normal of a global edge, oriented by the low -> high vertex
/// convention (rotate the tangent by -90 degrees).
pub fn edge_canonical_normal(mesh: &Mesh, edge: usize) -> (Vec2, f64) {
    let [a, b] = mesh.edges[edge];
    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
    let t = [pb[0] - pa[0], pb[1] - pa[1]];
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    ([t[1] / len, -t[0] / len], len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_crossed_square() {
        let mesh = build_crossed_rect(1, 1, Rect::UNIT).unwrap();
        assert_eq!(mesh.num_cells(), 4);
        assert_eq!(mesh.num_vertices(), 5);
        assert_eq!(mesh.num_edges(), 8);
        mesh.validate().unwrap();
    }

    #[test]
    fn paper_scale_cell_count() {
        // h = 1/100 yields 40 000 cells.
        let mesh = build_crossed_rect(100, 100, Rect::UNIT).unwrap();
        assert_eq!(mesh.num_cells(), 40_000);
        assert_eq!(mesh.num_vertices(), 101 * 101 + 100 * 100);
        assert_eq!(mesh.num_edges(), 60_200);
    }

    #[test]
    fn euler_relation_2x1() {
        let mesh = build_crossed_rect(2, 1, Rect::UNIT).unwrap();
        let (v, e, c) = (mesh.num_vertices() as i64, mesh.num_edges() as i64, mesh.num_cells() as i64);
        assert_eq!(v - e + c, 1);
        mesh.validate().unwrap();
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_crossed_rect(0, 1, Rect::UNIT).is_err());
        assert!(build_crossed_rect(1, 1, Rect { x0: 0.0, y0: 0.0, x1: 0.0, y1: 1.0 }).is_err());
        assert!(build_channel(4.0, 1.0, 1.5, 4).is_err());
        assert!(build_channel(4.0, 1.0, 0.5, 1).is_err());
    }

    #[test]
    fn areas_sum_to_domain_area() {
        for (nx, ny) in [(1, 1), (3, 2), (8, 8), (5, 9)] {
            let rect = Rect { x0: -1.0, y0: 2.0, x1: 3.5, y1: 4.0 };
            let mesh = build_crossed_rect(nx, ny, rect).unwrap();
            let sum = mesh.total_area();
            assert!(
                (sum - rect.area()).abs() <= 1e-12 * rect.area(),
                "nx={nx} ny={ny}: {sum} vs {}",
                rect.area()
            );
        }
    }

    #[test]
    fn square_vertex_set_is_rotation_invariant() {
        let mesh = build_crossed_rect(4, 4, Rect::UNIT).unwrap();
        for v in &mesh.vertices {
            let rotated = [v[1], 1.0 - v[0]];
            let found = mesh
                .vertices
                .iter()
                .any(|w| (w[0] - rotated[0]).abs() < 1e-12 && (w[1] - rotated[1]).abs() < 1e-12);
            assert!(found, "rotated image of {v:?} not in vertex set");
        }
    }

    #[test]
    fn interior_edges_see_opposite_normals() {
        let mesh = build_crossed_rect(3, 3, Rect::UNIT).unwrap();
        for (e, adj) in mesh.edge_cells.iter().enumerate() {
            let (Some(c0), Some(c1)) = (adj[0], adj[1]) else { continue };
            let mut normals = Vec::new();
            for cell in [c0, c1] {
                let geo = cell_geometry(&mesh, cell).unwrap();
                let j = mesh.cell_edges[cell].iter().position(|&(idx, _)| idx == e).unwrap();
                normals.push(geo.edge_normals[j]);
            }
            assert!((normals[0][0] + normals[1][0]).abs() < 1e-14);
            assert!((normals[0][1] + normals[1][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn geometry_of_reference_shaped_cell() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let cells = vec![[0, 1, 2]];
        let mesh = finish_mesh(vertices, cells, |_| BoundaryTag::Wall);
        let geo = cell_geometry(&mesh, 0).unwrap();
        assert_eq!(geo.jacobian, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(geo.det, 1.0);
        assert_eq!(geo.area, 0.5);
    }

    #[test]
    fn geometry_scales_quadratically() {
        let vertices = vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]];
        let cells = vec![[0, 1, 2]];
        let mesh = finish_mesh(vertices, cells, |_| BoundaryTag::Wall);
        let geo = cell_geometry(&mesh, 0).unwrap();
        assert_eq!(geo.det, 4.0);
        assert_eq!(geo.area, 2.0);
        assert!(cell_geometry(&mesh, 1).is_err());
    }

    #[test]
    fn area_matches_shoelace_on_random_cells() {
        let mesh = build_channel(4.0, 1.0, 0.5, 3).unwrap();
        for cell in 0..mesh.num_cells() {
            let [a, b, c] = mesh.cells[cell];
            let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let shoelace = 0.5
                * (va[0] * vb[1] - vb[0] * va[1] + vb[0] * vc[1] - vc[0] * vb[1] + vc[0] * va[1]
                    - va[0] * vc[1]);
            let geo = cell_geometry(&mesh, cell).unwrap();
            assert!((geo.area - shoelace.abs()).abs() < 1e-13);
        }
    }

    #[test]
    fn channel_invariants_and_tags() {
        let mesh = build_channel(4.0, 1.0, 0.5, 4).unwrap();
        mesh.validate().unwrap();
        let mut has = (false, false, false);
        for tag in &mesh.boundary_tags {
            match tag {
                BoundaryTag::Inflow => has.0 = true,
                BoundaryTag::Outflow => has.1 = true,
                BoundaryTag::Wall => has.2 = true,
                _ => {}
            }
        }
        assert!(has.0 && has.1 && has.2);
    }

    #[test]
    fn channel_near_unit_ratio_matches_rect_count() {
        let mesh = build_channel(4.0, 1.0, 0.999, 4).unwrap();
        let rect = build_crossed_rect(16, 8, Rect { x0: 0.0, y0: -1.0, x1: 4.0, y1: 1.0 }).unwrap();
        assert_eq!(mesh.num_cells(), rect.num_cells());
        assert_eq!(mesh.num_edges(), rect.num_edges());
    }

    #[test]
    fn channel_wall_normals_point_out_of_fluid() {
        let mesh = build_channel(4.0, 1.0, 0.5, 4).unwrap();
        for (e, tag) in mesh.boundary_tags.iter().enumerate() {
            if !tag.is_boundary() {
                continue;
            }
            let cell = mesh.edge_cells[e][0].unwrap();
            let geo = cell_geometry(&mesh, cell).unwrap();
            let j = mesh.cell_edges[cell].iter().position(|&(idx, _)| idx == e).unwrap();
            let n = geo.edge_normals[j];
            let [a, b] = mesh.edges[e];
            let mid = [
                0.5 * (mesh.vertices[a][0] + mesh.vertices[b][0]),
                0.5 * (mesh.vertices[a][1] + mesh.vertices[b][1]),
            ];
            let bary = mesh.barycenter(cell);
            // The barycenter lies inside the fluid, so the outward normal
            // must point from it toward the wall.
            let d = [mid[0] - bary[0], mid[1] - bary[1]];
            assert!(d[0] * n[0] + d[1] * n[1] > 0.0);
        }
    }

    #[test]
    fn channel_area_matches_profile_integral() {
        let mesh = build_channel(4.0, 1.0, 0.5, 4).unwrap();
        // Column cross-sections vary linearly in x, so the exact area is the
        // trapezoid sum of vertical extents over the grid columns.
        let nx = 16;
        let w = 4.0 / nx as f64;
        let mut exact = 0.0;
        for ix in 0..nx {
            let h = |x: f64| {
                let (xa, xb) = (4.0 / 3.0, 8.0 / 3.0);
                if x <= xa - w || x >= xb + w {
                    1.0
                } else if x >= xa && x <= xb {
                    0.5
                } else if x < xa {
                    1.0 - (x - (xa - w)) / w * 0.5
                } else {
                    0.5 + (x - xb) / w * 0.5
                }
            };
            let x0 = ix as f64 * w;
            let x1 = x0 + w;
            exact += w * (h(x0) + h(x1));
        }
        assert!((mesh.total_area() - exact).abs() < 1e-12 * exact);
    }
}
