//! Structured nested triangulations of the unit interval and unit square.
//!
//! Meshes are uniform tensor grids: `m` subdivisions per side, vertices on
//! the lattice i/m. In 2d every grid square is split into two triangles by
//! the same diagonal (lower-left to upper-right), so regular refinement of a
//! level-`k` mesh reproduces the structured mesh with `2m` subdivisions and
//! the vertex sets are nested with bit-identical coordinates.

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, NodalVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Interval01,
    Square01,
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval01 => 1,
            Domain::Square01 => 2,
        }
    }
}

/// Cell connectivity: vertex index pairs in 1d, triangles in 2d.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cells {
    Interval(Vec<[usize; 2]>),
    Triangle(Vec<[usize; 3]>),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Interval(c) => c.len(),
            Cells::Triangle(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One level of the mesh hierarchy.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub level_index: usize,
    pub domain: Domain,
    /// Mesh size 1/m.
    pub h: f64,
    /// Subdivisions per side.
    pub subdivisions: usize,
    /// Vertex coordinates; the second component is unused in 1d.
    pub vertices: Vec<[f64; 2]>,
    pub cells: Cells,
    pub is_boundary: Vec<bool>,
    /// Interior vertex indices in lattice order; position = dof index.
    pub interior_dof: Vec<usize>,
    /// Vertex index -> interior dof index.
    vertex_to_dof: Vec<Option<usize>>,
}

impl MeshLevel {
    fn structured(domain: Domain, m: usize, level_index: usize) -> MeshLevel {
        let h = 1.0 / m as f64;
        let (vertices, cells, is_boundary) = match domain {
            Domain::Interval01 => {
                let vertices: Vec<[f64; 2]> =
                    (0..=m).map(|i| [i as f64 / m as f64, 0.0]).collect();
                let cells = Cells::Interval((0..m).map(|i| [i, i + 1]).collect());
                let is_boundary: Vec<bool> = (0..=m).map(|i| i == 0 || i == m).collect();
                (vertices, cells, is_boundary)
            }
            Domain::Square01 => {
                let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
                let mut is_boundary = Vec::with_capacity((m + 1) * (m + 1));
                for j in 0..=m {
                    for i in 0..=m {
                        vertices.push([i as f64 / m as f64, j as f64 / m as f64]);
                        is_boundary.push(i == 0 || i == m || j == 0 || j == m);
                    }
                }
                let vid = |i: usize, j: usize| j * (m + 1) + i;
                let mut tris = Vec::with_capacity(2 * m * m);
                for j in 0..m {
                    for i in 0..m {
                        // both triangles share the (i,j)-(i+1,j+1) diagonal
                        tris.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
                        tris.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
                    }
                }
                (vertices, Cells::Triangle(tris), is_boundary)
            }
        };
        let interior_dof: Vec<usize> = (0..vertices.len()).filter(|&v| !is_boundary[v]).collect();
        let mut vertex_to_dof = vec![None; vertices.len()];
        for (d, &v) in interior_dof.iter().enumerate() {
            vertex_to_dof[v] = Some(d);
        }
        MeshLevel {
            level_index,
            domain,
            h,
            subdivisions: m,
            vertices,
            cells,
            is_boundary,
            interior_dof,
            vertex_to_dof,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_dof.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.vertex_to_dof[v]
    }

    /// Scatter interior dof values to all vertices, zero on the boundary.
    pub fn full_values(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_interior());
        let mut full = vec![0.0; self.n_vertices()];
        for (d, &v) in self.interior_dof.iter().enumerate() {
            full[v] = u[d];
        }
        full
    }

    /// Debug dump of vertices, cells and boundary flags as a JSON string.
    pub fn dump_json(&self) -> String {
        let cells: Vec<Vec<usize>> = match &self.cells {
            Cells::Interval(c) => c.iter().map(|c| c.to_vec()).collect(),
            Cells::Triangle(c) => c.iter().map(|c| c.to_vec()).collect(),
        };
        let d = self.domain.dim();
        let verts: Vec<Vec<f64>> = self.vertices.iter().map(|p| p[..d].to_vec()).collect();
        serde_json::json!({
            "level_index": self.level_index,
            "h": self.h,
            "vertices": verts,
            "cells": cells,
            "is_boundary": self.is_boundary,
        })
        .to_string()
    }
}

/// Number of subdivisions encoded by a mesh size, if 1/h is an integer >= 2.
fn subdivisions_of(h: f64) -> Option<usize> {
    if !(h > 0.0) || h >= 1.0 {
        return None;
    }
    let m = (1.0 / h).round();
    if m >= 2.0 && (m * h - 1.0).abs() <= 1e-9 {
        Some(m as usize)
    } else {
        None
    }
}

/// Build the coarsest structured mesh with mesh size `h`.
pub fn build_coarse_mesh(domain: Domain, h: f64) -> Result<MeshLevel> {
    let m = subdivisions_of(h).ok_or(Error::InvalidMeshSize(h))?;
    Ok(MeshLevel::structured(domain, m, 0))
}

/// Regular refinement: every cell is split into beta^d subcells.
pub fn refine_regular(mesh: &MeshLevel, beta: u32) -> Result<MeshLevel> {
    if beta != 2 {
        return Err(Error::UnsupportedBeta(beta));
    }
    Ok(MeshLevel::structured(
        mesh.domain,
        2 * mesh.subdivisions,
        mesh.level_index + 1,
    ))
}

/// Image of each coarse vertex in the fine vertex numbering.
pub fn coincidence_map(coarse: &MeshLevel, fine: &MeshLevel) -> Result<Vec<usize>> {
    check_nested(coarse, fine)?;
    let m = coarse.subdivisions;
    let map = match coarse.domain {
        Domain::Interval01 => (0..=m).map(|i| 2 * i).collect(),
        Domain::Square01 => {
            let mf = fine.subdivisions;
            let mut map = Vec::with_capacity((m + 1) * (m + 1));
            for j in 0..=m {
                for i in 0..=m {
                    map.push(2 * j * (mf + 1) + 2 * i);
                }
            }
            map
        }
    };
    Ok(map)
}

fn check_nested(coarse: &MeshLevel, fine: &MeshLevel) -> Result<()> {
    if coarse.domain != fine.domain {
        return Err(Error::LevelMismatch("different domains".into()));
    }
    if fine.subdivisions != 2 * coarse.subdivisions {
        return Err(Error::LevelMismatch(format!(
            "fine mesh ({} subdivisions) is not the regular refinement of the coarse mesh ({})",
            fine.subdivisions, coarse.subdivisions
        )));
    }
    Ok(())
}

/// P1 interpolation weights of a fine vertex in terms of coarse vertices.
///
/// Every fine vertex is either a coarse vertex or the midpoint of a coarse
/// edge (in 2d the odd/odd vertices sit on the shared diagonal).
fn fine_vertex_weights(coarse: &MeshLevel, fine_vertex: usize, fine: &MeshLevel) -> Vec<(usize, f64)> {
    let m = coarse.subdivisions;
    match coarse.domain {
        Domain::Interval01 => {
            let a = fine_vertex;
            if a % 2 == 0 {
                vec![(a / 2, 1.0)]
            } else {
                vec![((a - 1) / 2, 0.5), ((a + 1) / 2, 0.5)]
            }
        }
        Domain::Square01 => {
            let mf = fine.subdivisions;
            let (a, b) = (fine_vertex % (mf + 1), fine_vertex / (mf + 1));
            let vid = |i: usize, j: usize| j * (m + 1) + i;
            match (a % 2, b % 2) {
                (0, 0) => vec![(vid(a / 2, b / 2), 1.0)],
                (1, 0) => vec![
                    (vid((a - 1) / 2, b / 2), 0.5),
                    (vid((a + 1) / 2, b / 2), 0.5),
                ],
                (0, 1) => vec![
                    (vid(a / 2, (b - 1) / 2), 0.5),
                    (vid(a / 2, (b + 1) / 2), 0.5),
                ],
                _ => vec![
                    (vid((a - 1) / 2, (b - 1) / 2), 0.5),
                    (vid((a + 1) / 2, (b + 1) / 2), 0.5),
                ],
            }
        }
    }
}

/// Interpolate vertex values (all vertices, boundary included) from the
/// coarse level to the fine level of a nested pair.
pub fn interpolate_vertex_values(
    coarse: &MeshLevel,
    fine: &MeshLevel,
    coarse_values: &[f64],
) -> Result<Vec<f64>> {
    check_nested(coarse, fine)?;
    assert_eq!(coarse_values.len(), coarse.n_vertices());
    let mut out = vec![0.0; fine.n_vertices()];
    for (fv, o) in out.iter_mut().enumerate() {
        for (cv, w) in fine_vertex_weights(coarse, fv, fine) {
            *o += w * coarse_values[cv];
        }
    }
    Ok(out)
}

/// Prolongation matrix on interior dofs: exact P1 interpolation from the
/// coarse level into its regular refinement.
pub fn assemble_prolongation(coarse: &MeshLevel, fine: &MeshLevel) -> Result<CsrMatrix> {
    check_nested(coarse, fine)?;
    let mut triplets = Vec::new();
    for (fdof, &fv) in fine.interior_dof.iter().enumerate() {
        for (cv, w) in fine_vertex_weights(coarse, fv, fine) {
            if let Some(cdof) = coarse.dof_of_vertex(cv) {
                triplets.push((fdof, cdof, w));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        fine.n_interior(),
        coarse.n_interior(),
        triplets,
    ))
}

/// Nested hierarchy of structured meshes with inter-level prolongations.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub domain: Domain,
    pub beta: u32,
    levels: Vec<MeshLevel>,
    /// prolongations[k-1] maps level k-1 interior dofs to level k.
    prolongations: Vec<CsrMatrix>,
    /// coarse_to_fine[k-1][v] is the level-k vertex coincident with level-(k-1) vertex v.
    coarse_to_fine: Vec<Vec<usize>>,
}

/// Build levels 0..=n by repeated regular refinement of the coarse mesh.
pub fn build_hierarchy(domain: Domain, h0: f64, n: usize, beta: u32) -> Result<MeshHierarchy> {
    if beta != 2 {
        return Err(Error::UnsupportedBeta(beta));
    }
    if n < 1 {
        return Err(Error::Config("hierarchy needs at least one level above the coarse mesh".into()));
    }
    let mut levels = vec![build_coarse_mesh(domain, h0)?];
    let mut prolongations = Vec::with_capacity(n);
    let mut coarse_to_fine = Vec::with_capacity(n);
    for _ in 0..n {
        let fine = refine_regular(levels.last().unwrap(), beta)?;
        let coarse = levels.last().unwrap();
        prolongations.push(assemble_prolongation(coarse, &fine)?);
        coarse_to_fine.push(coincidence_map(coarse, &fine)?);
        levels.push(fine);
    }
    Ok(MeshHierarchy {
        domain,
        beta,
        levels,
        prolongations,
        coarse_to_fine,
    })
}

impl MeshHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index of the finest level.
    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &MeshLevel {
        &self.levels[k]
    }

    /// Prolongation from level k-1 to level k.
    pub fn prolongation(&self, k: usize) -> &CsrMatrix {
        &self.prolongations[k - 1]
    }

    /// Vertex image along the coincidence maps from `from` up to `to`.
    pub fn vertex_image(&self, from: usize, to: usize, vertex: usize) -> usize {
        let mut v = vertex;
        for k in from..to {
            v = self.coarse_to_fine[k][v];
        }
        v
    }

    /// Composite prolongation P_to ... P_{from+1} (interior dofs).
    pub fn composite_prolongation(&self, from: usize, to: usize) -> CsrMatrix {
        assert!(from < to && to <= self.top_level());
        let mut p = self.prolongations[from].clone();
        for k in from + 1..to {
            p = self.prolongations[k].matmul(&p);
        }
        p
    }

    /// Lift a nodal vector to a finer level by repeated prolongation.
    ///
    /// The lifted coefficients represent the same piecewise-linear function.
    pub fn lift(&self, u: &NodalVector, to: usize) -> NodalVector {
        assert!(u.level_index <= to);
        let mut values = u.values.clone();
        for k in u.level_index..to {
            values = self.prolongations[k].matvec(&values);
        }
        NodalVector::new(to, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_interval_counts() {
        let m = build_coarse_mesh(Domain::Interval01, 0.25).unwrap();
        assert_eq!(m.n_vertices(), 5);
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_interior(), 3);
        assert_eq!(m.h, 0.25);
    }

    #[test]
    fn coarse_square_counts() {
        let m = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        assert_eq!(m.n_vertices(), 25);
        assert_eq!(m.n_cells(), 32);
        assert_eq!(m.n_interior(), 9);

        let m3 = build_coarse_mesh(Domain::Square01, 1.0 / 3.0).unwrap();
        assert_eq!(m3.n_vertices(), 16);
        assert_eq!(m3.n_cells(), 18);
        assert_eq!(m3.n_interior(), 4);
    }

    #[test]
    fn coarse_mesh_rejects_bad_h() {
        assert!(build_coarse_mesh(Domain::Interval01, 0.3).is_err());
        assert!(build_coarse_mesh(Domain::Interval01, 1.0).is_err());
        assert!(build_coarse_mesh(Domain::Square01, 1.5).is_err());
        assert!(build_coarse_mesh(Domain::Square01, 0.0).is_err());
        assert!(build_coarse_mesh(Domain::Square01, -0.25).is_err());
    }

    #[test]
    fn refine_interval() {
        let m = build_coarse_mesh(Domain::Interval01, 0.25).unwrap();
        let f = refine_regular(&m, 2).unwrap();
        assert_eq!(f.n_cells(), 8);
        assert_eq!(f.n_vertices(), 9);
        assert_eq!(f.h, 0.125);
        assert!(refine_regular(&m, 3).is_err());
    }

    #[test]
    fn refine_square_cell_count() {
        let m = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        let f = refine_regular(&m, 2).unwrap();
        assert_eq!(f.n_cells(), 128);
    }

    #[test]
    fn cells_are_non_degenerate() {
        let m = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        if let Cells::Triangle(tris) = &m.cells {
            for t in tris {
                let [a, b, c] = [m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]];
                let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
                assert!(area > 0.0);
            }
        } else {
            panic!("expected triangles");
        }
    }

    #[test]
    fn boundary_flags_match_coordinates() {
        let m = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        for (v, p) in m.vertices.iter().enumerate() {
            let on = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
            assert_eq!(m.is_boundary[v], on);
        }
    }

    #[test]
    fn hierarchy_interior_dims_and_h() {
        let h = build_hierarchy(Domain::Interval01, 0.25, 3, 2).unwrap();
        let dims: Vec<usize> = (0..4).map(|k| h.level(k).n_interior()).collect();
        assert_eq!(dims, vec![3, 7, 15, 31]);

        let h2 = build_hierarchy(Domain::Square01, 0.25, 2, 2).unwrap();
        assert_eq!(h2.level(0).h, 0.25);
        assert_eq!(h2.level(1).h, 0.125);
        assert_eq!(h2.level(2).h, 0.0625);
        assert_eq!(h2.level(1).h, h2.level(0).h / 2.0);

        assert!(build_hierarchy(Domain::Square01, 0.25, 1, 3).is_err());
    }

    #[test]
    fn vertex_sets_are_nested() {
        let h = build_hierarchy(Domain::Square01, 0.25, 2, 2).unwrap();
        for k in 0..2 {
            let coarse = h.level(k);
            for v in 0..coarse.n_vertices() {
                let img = h.vertex_image(k, k + 1, v);
                assert_eq!(coarse.vertices[v], h.level(k + 1).vertices[img]);
            }
        }
    }

    #[test]
    fn prolongation_weights() {
        let h = build_hierarchy(Domain::Interval01, 0.25, 1, 2).unwrap();
        let p = h.prolongation(1);
        // fine vertex coincident with coarse vertex 1 (x=0.25) is fine dof 1
        let (cols, vals) = p.row(1);
        assert_eq!(cols, &[0]);
        assert_eq!(vals, &[1.0]);
        // fine midpoint x=0.375 interpolates its two coarse neighbours
        let (cols, vals) = p.row(2);
        assert_eq!(cols, &[0, 1]);
        assert_eq!(vals, &[0.5, 0.5]);
    }

    #[test]
    fn prolongation_reproduces_constants_with_boundary() {
        let coarse = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        let fine = refine_regular(&coarse, 2).unwrap();
        let ones = vec![1.0; coarse.n_vertices()];
        let lifted = interpolate_vertex_values(&coarse, &fine, &ones).unwrap();
        for v in lifted {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn prolongation_rejects_mismatched_levels() {
        let a = build_coarse_mesh(Domain::Square01, 0.25).unwrap();
        let b = build_coarse_mesh(Domain::Square01, 0.125).unwrap();
        let c = refine_regular(&b, 2).unwrap();
        assert!(assemble_prolongation(&a, &c).is_err());
        let i = build_coarse_mesh(Domain::Interval01, 0.125).unwrap();
        assert!(assemble_prolongation(&a, &i).is_err());
    }

    #[test]
    fn dump_json_contains_mesh_data() {
        let m = build_coarse_mesh(Domain::Interval01, 0.5).unwrap();
        let s = m.dump_json();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["vertices"].as_array().unwrap().len(), 3);
        assert_eq!(v["cells"].as_array().unwrap().len(), 2);
        assert_eq!(v["is_boundary"][0], serde_json::json!(true));
    }
}
