//! Geometric multigrid V-cycles for the SPD linear systems arising in the
//! correction steps.
//!
//! Coarse operators are Galerkin projections P'AP of the top-level matrix,
//! smoothing is symmetric Gauss-Seidel with two pre- and two post-steps, and
//! the coarsest level is solved by dense Cholesky. `matvec_count` tallies
//! algebraic work in units of matrix nonzeros touched, so it scales with the
//! number of unknowns rather than the number of calls.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mesh::MeshHierarchy;
use crate::sparse::{norm2, CsrMatrix, NodalVector};

const NU_PRE: usize = 2;
const NU_POST: usize = 2;

/// Statistics of one multigrid solve.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct SolveStats {
    pub v_cycles: usize,
    pub final_relative_residual: f64,
    /// Work in matrix-nonzero touches (smoothing, residuals, transfers).
    pub matvec_count: u64,
}

/// Matrices and transfer operators for V-cycles down to level 0.
pub struct MgHierarchy {
    /// System matrices for levels 0..=top.
    matrices: Vec<CsrMatrix>,
    /// prolongations[k-1] maps level k-1 to level k.
    prolongations: Vec<CsrMatrix>,
    top_level: usize,
    coarsest: Cholesky<f64, Dyn>,
    nu_pre: usize,
    nu_post: usize,
}

/// Build the multigrid hierarchy for `top_matrix` (plus an optional
/// zeroth-order term) living on `top_level` of the mesh hierarchy.
pub fn setup_mg(
    hier: &MeshHierarchy,
    top_matrix: &CsrMatrix,
    top_level: usize,
    extra_term: Option<&CsrMatrix>,
) -> Result<MgHierarchy> {
    let n_top = hier.level(top_level).n_interior();
    if top_matrix.n_rows() != n_top || top_matrix.n_cols() != n_top {
        return Err(Error::DimensionMismatch(format!(
            "top matrix is {}x{}, level {} has {} interior dofs",
            top_matrix.n_rows(),
            top_matrix.n_cols(),
            top_level,
            n_top
        )));
    }
    let top = match extra_term {
        Some(extra) => top_matrix.add_scaled(extra, 1.0),
        None => top_matrix.clone(),
    };

    let mut matrices = vec![top];
    let mut prolongations = Vec::with_capacity(top_level);
    for k in (1..=top_level).rev() {
        let p = hier.prolongation(k).clone();
        let coarse = matrices.last().unwrap().galerkin(&p);
        matrices.push(coarse);
        prolongations.push(p);
    }
    matrices.reverse();
    prolongations.reverse();

    for (k, a) in matrices.iter().enumerate() {
        for (i, d) in a.diagonal().iter().enumerate() {
            if *d <= 0.0 {
                return Err(Error::NotSpd(format!(
                    "nonpositive diagonal {d:e} at row {i} on level {k}"
                )));
            }
        }
    }
    let coarsest = Cholesky::new(matrices[0].to_dense())
        .ok_or_else(|| Error::NotSpd("coarsest-level Cholesky factorization failed".into()))?;

    Ok(MgHierarchy {
        matrices,
        prolongations,
        top_level,
        coarsest,
        nu_pre: NU_PRE,
        nu_post: NU_POST,
    })
}

impl MgHierarchy {
    pub fn top_level(&self) -> usize {
        self.top_level
    }

    pub fn matrix(&self, local_level: usize) -> &CsrMatrix {
        &self.matrices[local_level]
    }

    pub fn top_matrix(&self) -> &CsrMatrix {
        self.matrices.last().unwrap()
    }

    fn cycle(&self, level: usize, x: &mut [f64], b: &[f64], work: &mut u64) {
        if level == 0 {
            let sol = self.coarsest.solve(&DVector::from_column_slice(b));
            x.copy_from_slice(sol.as_slice());
            *work += (b.len() * b.len()) as u64;
            return;
        }
        let a = &self.matrices[level];
        let nnz = a.nnz() as u64;
        for _ in 0..self.nu_pre {
            a.gauss_seidel_forward(x, b);
            a.gauss_seidel_backward(x, b);
            *work += 2 * nnz;
        }
        let mut r = a.matvec(x);
        *work += nnz;
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let p = &self.prolongations[level - 1];
        let rc = p.transpose().matvec(&r);
        *work += p.nnz() as u64;
        let mut ec = vec![0.0; rc.len()];
        self.cycle(level - 1, &mut ec, &rc, work);
        let e = p.matvec(&ec);
        *work += p.nnz() as u64;
        for (xi, ei) in x.iter_mut().zip(&e) {
            *xi += ei;
        }
        for _ in 0..self.nu_post {
            a.gauss_seidel_forward(x, b);
            a.gauss_seidel_backward(x, b);
            *work += 2 * nnz;
        }
    }
}

/// Apply one V-cycle to A x = rhs starting from `x`.
pub fn vcycle(mg: &MgHierarchy, rhs: &NodalVector, x: &NodalVector) -> NodalVector {
    let mut out = x.values.clone();
    let mut work = 0u64;
    mg.cycle(mg.matrices.len() - 1, &mut out, &rhs.values, &mut work);
    NodalVector::new(rhs.level_index, out)
}

/// V-cycle iteration until the relative Euclidean residual drops below
/// `rel_tol`, starting from `x0` (zero if `None`).
pub fn solve(
    mg: &MgHierarchy,
    rhs: &NodalVector,
    x0: Option<&NodalVector>,
    rel_tol: f64,
    max_cycles: usize,
) -> Result<(NodalVector, SolveStats)> {
    assert!(rel_tol > 0.0);
    let a = mg.top_matrix();
    let n = a.n_rows();
    let b = &rhs.values;
    let b_norm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.values.clone());
    let mut work = 0u64;
    let mut stats = SolveStats::default();

    if b_norm == 0.0 {
        return Ok((NodalVector::new(rhs.level_index, vec![0.0; n]), stats));
    }

    let residual = |x: &[f64], work: &mut u64| -> f64 {
        let ax = a.matvec(x);
        *work += a.nnz() as u64;
        let mut s = 0.0;
        for (axi, bi) in ax.iter().zip(b) {
            let r = bi - axi;
            s += r * r;
        }
        s.sqrt() / b_norm
    };

    let mut rel = residual(&x, &mut work);
    for cycle in 1..=max_cycles {
        if rel <= rel_tol {
            break;
        }
        mg.cycle(mg.matrices.len() - 1, &mut x, b, &mut work);
        rel = residual(&x, &mut work);
        stats.v_cycles = cycle;
        if rel <= rel_tol {
            break;
        }
    }
    stats.final_relative_residual = rel;
    stats.matvec_count = work;
    if rel > rel_tol {
        return Err(Error::NoConvergence {
            what: format!("multigrid solve on level {}", rhs.level_index),
            iterations: max_cycles,
            lambda_trace: Vec::new(),
        });
    }
    Ok((NodalVector::new(rhs.level_index, x), stats))
}

/// Solver tolerance used for the auxiliary linear problems of the correction
/// steps: tight enough that algebraic error never pollutes the
/// discretization-rate measurements.
pub fn correction_solve_tol(h_fine: f64) -> f64 {
    (1e-10f64).min(0.01 * h_fine * h_fine)
}

pub const MAX_VCYCLES: usize = 100;
