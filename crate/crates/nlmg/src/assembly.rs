//! P1 finite element assembly on one mesh level.
//!
//! All integrals use the same quadrature: 2-point Gauss per cell in 1d and
//! the 3-point edge-midpoint rule in 2d. The rule is exact for the bilinear
//! forms (degree 2); nonlinear integrands are approximated, but since every
//! code path (direct solves, corrections, oracles) shares the rule, the same
//! discrete problem is solved everywhere and comparisons stay consistent.

use crate::error::{Error, Result};
use crate::mesh::{Cells, Domain, MeshLevel};
use crate::sparse::{CsrMatrix, NodalVector};

/// Quadrature rule in barycentric coordinates; weights sum to one and are
/// scaled by the cell measure during assembly.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// 2-point Gauss rule on a segment (exact through degree 3).
pub fn quadrature_interval() -> QuadratureRule {
    let s = 0.5 / f64::sqrt(3.0);
    QuadratureRule {
        points: vec![[0.5 + s, 0.5 - s, 0.0], [0.5 - s, 0.5 + s, 0.0]],
        weights: vec![0.5, 0.5],
    }
}

/// Edge-midpoint rule on a triangle (exact through degree 2).
pub fn quadrature_triangle() -> QuadratureRule {
    QuadratureRule {
        points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
        weights: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    }
}

pub fn quadrature_for(domain: Domain) -> QuadratureRule {
    match domain {
        Domain::Interval01 => quadrature_interval(),
        Domain::Square01 => quadrature_triangle(),
    }
}

/// Potential term V(x) of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Constant(f64),
    /// V(x) = c * Σ_i (x_i - 1/2)²
    HarmonicWell { coefficient: f64 },
}

impl Potential {
    pub fn eval(&self, x: &[f64; 2], dim: usize) -> f64 {
        match self {
            Potential::Constant(c) => *c,
            Potential::HarmonicWell { coefficient } => {
                let mut s = 0.0;
                for xi in x.iter().take(dim) {
                    s += (xi - 0.5) * (xi - 0.5);
                }
                coefficient * s
            }
        }
    }
}

type PointFn = fn(&[f64; 2], usize, f64) -> f64;

/// The nonlinear term f(x,u) together with its derivative f_u(x,u) and, when
/// available, the multiplicative splitting f = w(x,u)·u used by the SCF
/// linearization.
#[derive(Debug, Clone, Copy)]
pub enum Nonlinearity {
    Zero,
    /// f = V(x) u
    Potential { v: Potential },
    /// f = ζ u³
    Cubic { zeta: f64 },
    /// f = V(x) u + ζ u³
    Gpe { v: Potential, zeta: f64 },
    /// Caller-supplied term; `w` is the splitting weight if one exists.
    Custom {
        f: PointFn,
        f_u: PointFn,
        w: Option<PointFn>,
    },
}

impl Nonlinearity {
    pub fn f(&self, x: &[f64; 2], dim: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Potential { v } => v.eval(x, dim) * u,
            Nonlinearity::Cubic { zeta } => zeta * u * u * u,
            Nonlinearity::Gpe { v, zeta } => v.eval(x, dim) * u + zeta * u * u * u,
            Nonlinearity::Custom { f, .. } => f(x, dim, u),
        }
    }

    pub fn f_u(&self, x: &[f64; 2], dim: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Potential { v } => v.eval(x, dim),
            Nonlinearity::Cubic { zeta } => 3.0 * zeta * u * u,
            Nonlinearity::Gpe { v, zeta } => v.eval(x, dim) + 3.0 * zeta * u * u,
            Nonlinearity::Custom { f_u, .. } => f_u(x, dim, u),
        }
    }

    /// Splitting weight w(x,u) with f = w·u, when the nonlinearity splits.
    pub fn splitting_weight(&self, x: &[f64; 2], dim: usize, u: f64) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::Potential { v } => Some(v.eval(x, dim)),
            Nonlinearity::Cubic { zeta } => Some(zeta * u * u),
            Nonlinearity::Gpe { v, zeta } => Some(v.eval(x, dim) + zeta * u * u),
            Nonlinearity::Custom { w, .. } => w.map(|w| w(x, dim, u)),
        }
    }

    pub fn is_splittable(&self) -> bool {
        !matches!(self, Nonlinearity::Custom { w: None, .. })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }
}

/// Per-cell geometry: vertex ids, coordinates, measure and constant P1
/// basis gradients.
struct CellGeometry {
    verts: Vec<usize>,
    coords: Vec<[f64; 2]>,
    measure: f64,
    grads: Vec<[f64; 2]>,
}

fn cell_geometry(mesh: &MeshLevel, cell: usize) -> CellGeometry {
    match &mesh.cells {
        Cells::Interval(cells) => {
            let [a, b] = cells[cell];
            let (xa, xb) = (mesh.vertices[a][0], mesh.vertices[b][0]);
            let len = xb - xa;
            CellGeometry {
                verts: vec![a, b],
                coords: vec![mesh.vertices[a], mesh.vertices[b]],
                measure: len,
                grads: vec![[-1.0 / len, 0.0], [1.0 / len, 0.0]],
            }
        }
        Cells::Triangle(cells) => {
            let [a, b, c] = cells[cell];
            let (pa, pb, pc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
            let area = 0.5 * det;
            let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
            CellGeometry {
                verts: vec![a, b, c],
                coords: vec![pa, pb, pc],
                measure: area,
                grads: vec![g(pb, pc), g(pc, pa), g(pa, pb)],
            }
        }
    }
}

fn quad_point(geo: &CellGeometry, bary: &[f64; 3]) -> [f64; 2] {
    let mut x = [0.0, 0.0];
    for (i, p) in geo.coords.iter().enumerate() {
        x[0] += bary[i] * p[0];
        x[1] += bary[i] * p[1];
    }
    x
}

/// Assemble a matrix with entries ∫ c(x) φ_i φ_j over the given dof map,
/// where the coefficient is evaluated at quadrature points.
fn assemble_weighted_mass_kernel<F: Fn(&[f64; 2], f64) -> f64>(
    mesh: &MeshLevel,
    full_u: Option<&[f64]>,
    coefficient: F,
    interior_only: bool,
) -> CsrMatrix {
    let rule = quadrature_for(mesh.domain);
    let n = if interior_only {
        mesh.n_interior()
    } else {
        mesh.n_vertices()
    };
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell);
        let nv = geo.verts.len();
        let mut local = vec![0.0; nv * nv];
        for (q, bary) in rule.points.iter().enumerate() {
            let x = quad_point(&geo, bary);
            let uq = full_u.map_or(0.0, |u| {
                geo.verts
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| bary[i] * u[v])
                    .sum()
            });
            let c = coefficient(&x, uq) * rule.weights[q] * geo.measure;
            for i in 0..nv {
                for j in 0..nv {
                    local[i * nv + j] += c * bary[i] * bary[j];
                }
            }
        }
        for i in 0..nv {
            for j in 0..nv {
                let (vi, vj) = (geo.verts[i], geo.verts[j]);
                if interior_only {
                    if let (Some(di), Some(dj)) = (mesh.dof_of_vertex(vi), mesh.dof_of_vertex(vj)) {
                        triplets.push((di, dj, local[i * nv + j]));
                    }
                } else {
                    triplets.push((vi, vj, local[i * nv + j]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Stiffness matrix (∇φ_i, ∇φ_j) on interior dofs. Symmetric positive
/// definite after Dirichlet elimination.
pub fn assemble_stiffness(mesh: &MeshLevel) -> CsrMatrix {
    let n = mesh.n_interior();
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell);
        let nv = geo.verts.len();
        for i in 0..nv {
            for j in 0..nv {
                if let (Some(di), Some(dj)) = (
                    mesh.dof_of_vertex(geo.verts[i]),
                    mesh.dof_of_vertex(geo.verts[j]),
                ) {
                    let gij = geo.grads[i][0] * geo.grads[j][0] + geo.grads[i][1] * geo.grads[j][1];
                    triplets.push((di, dj, gij * geo.measure));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Consistent mass matrix (φ_i, φ_j) on interior dofs.
pub fn assemble_mass(mesh: &MeshLevel) -> CsrMatrix {
    assemble_weighted_mass_kernel(mesh, None, |_, _| 1.0, true)
}

/// Consistent mass matrix over all vertices, boundary included.
pub fn assemble_mass_full(mesh: &MeshLevel) -> CsrMatrix {
    assemble_weighted_mass_kernel(mesh, None, |_, _| 1.0, false)
}

fn check_vector(mesh: &MeshLevel, u: &NodalVector) -> Result<()> {
    if u.level_index != mesh.level_index || u.len() != mesh.n_interior() {
        return Err(Error::LevelMismatch(format!(
            "vector on level {} with {} entries does not match mesh level {} with {} interior dofs",
            u.level_index,
            u.len(),
            mesh.level_index,
            mesh.n_interior()
        )));
    }
    Ok(())
}

/// Load vector with entries ∫ f(x, u_h) φ_j, u_h the P1 interpolant of `u`.
pub fn assemble_nonlinear_load(
    mesh: &MeshLevel,
    u: &NodalVector,
    f: &Nonlinearity,
) -> Result<NodalVector> {
    check_vector(mesh, u)?;
    let dim = mesh.domain.dim();
    let rule = quadrature_for(mesh.domain);
    let full = mesh.full_values(&u.values);
    let mut out = vec![0.0; mesh.n_interior()];
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell);
        let nv = geo.verts.len();
        for (q, bary) in rule.points.iter().enumerate() {
            let x = quad_point(&geo, bary);
            let uq: f64 = geo
                .verts
                .iter()
                .enumerate()
                .map(|(i, &v)| bary[i] * full[v])
                .sum();
            let c = f.f(&x, dim, uq) * rule.weights[q] * geo.measure;
            for i in 0..nv {
                if let Some(di) = mesh.dof_of_vertex(geo.verts[i]) {
                    out[di] += c * bary[i];
                }
            }
        }
    }
    Ok(NodalVector::new(mesh.level_index, out))
}

/// Matrix with entries ∫ f_u(x, u_h) φ_i φ_j: the u-derivative of the
/// nonlinear load, used as the zeroth-order part of the linearized operator.
pub fn assemble_linearized_term(
    mesh: &MeshLevel,
    u: &NodalVector,
    f: &Nonlinearity,
) -> Result<CsrMatrix> {
    check_vector(mesh, u)?;
    let dim = mesh.domain.dim();
    let full = mesh.full_values(&u.values);
    Ok(assemble_weighted_mass_kernel(
        mesh,
        Some(&full),
        |x, uq| f.f_u(x, dim, uq),
        true,
    ))
}

/// Matrix with entries ∫ w(x, u_h) φ_i φ_j for the splitting f = w·u, so that
/// the frozen-coefficient eigenproblem (A + W(u)) x = λ M x is linear.
pub fn assemble_weighted_mass(
    mesh: &MeshLevel,
    u: &NodalVector,
    f: &Nonlinearity,
) -> Result<CsrMatrix> {
    check_vector(mesh, u)?;
    if !f.is_splittable() {
        return Err(Error::NotSplittable);
    }
    let dim = mesh.domain.dim();
    let full = mesh.full_values(&u.values);
    Ok(assemble_weighted_mass_kernel(
        mesh,
        Some(&full),
        |x, uq| f.splitting_weight(x, dim, uq).unwrap(),
        true,
    ))
}

/// Quadrature functionals of u_h against a smooth function: returns
/// (∫u_h², ∫u_h v, ∫v², ∫|∇u_h|², ∫∇u_h·∇v, ∫|∇v|²), from which L² and
/// H¹-seminorm errors follow for either sign of u_h.
pub fn error_functionals_vs_function<F, G>(
    mesh: &MeshLevel,
    u: &NodalVector,
    exact: F,
    exact_grad: G,
) -> Result<[f64; 6]>
where
    F: Fn(&[f64; 2]) -> f64,
    G: Fn(&[f64; 2]) -> [f64; 2],
{
    check_vector(mesh, u)?;
    let rule = quadrature_for(mesh.domain);
    let full = mesh.full_values(&u.values);
    let mut acc = [0.0f64; 6];
    for cell in 0..mesh.n_cells() {
        let geo = cell_geometry(mesh, cell);
        let mut grad_uh = [0.0, 0.0];
        for (i, &v) in geo.verts.iter().enumerate() {
            grad_uh[0] += full[v] * geo.grads[i][0];
            grad_uh[1] += full[v] * geo.grads[i][1];
        }
        for (q, bary) in rule.points.iter().enumerate() {
            let x = quad_point(&geo, bary);
            let w = rule.weights[q] * geo.measure;
            let uh: f64 = geo
                .verts
                .iter()
                .enumerate()
                .map(|(i, &v)| bary[i] * full[v])
                .sum();
            let ve = exact(&x);
            let ge = exact_grad(&x);
            acc[0] += w * uh * uh;
            acc[1] += w * uh * ve;
            acc[2] += w * ve * ve;
            acc[3] += w * (grad_uh[0] * grad_uh[0] + grad_uh[1] * grad_uh[1]);
            acc[4] += w * (grad_uh[0] * ge[0] + grad_uh[1] * ge[1]);
            acc[5] += w * (ge[0] * ge[0] + ge[1] * ge[1]);
        }
    }
    Ok(acc)
}
