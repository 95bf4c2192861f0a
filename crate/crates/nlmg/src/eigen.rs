//! Nonlinear eigenvalue solves on small spaces: the level-1 problem, the
//! coarse-plus-one-vector augmented problems of the correction steps, and the
//! full fine-space direct solve used as reference.
//!
//! The SCF linearization freezes the multiplicative splitting f = w(x,u)·u,
//! so every sweep solves a linear generalized eigenproblem
//! (A + W(u_prev)) x = λ M x for its smallest eigenpair.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::assembly::{
    assemble_mass, assemble_nonlinear_load, assemble_stiffness, assemble_weighted_mass,
    Nonlinearity,
};
use crate::error::{Error, Result};
use crate::mesh::{MeshHierarchy, MeshLevel};
use crate::multigrid::{self, setup_mg};
use crate::sparse::{axpy, dot, norm2, CsrMatrix, NodalVector};

/// Gram eigenvalues below this signal that the extra vector of an augmented
/// space lies (numerically) inside the coarse space.
const GRAM_TOL: f64 = 1e-12;

/// Iteration cap for the inner inverse iterations.
const MAX_INVERSE_ITER: usize = 500;

/// An approximate eigenpair with b-normalization u'Mu = 1 and the sign fixed
/// so that the (approximate) integral of u is positive.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda: f64,
    pub u: NodalVector,
    /// Euclidean residual of the eigenproblem the pair was computed from:
    /// full-space ||(A + W(u))u - λMu||/||u|| for the direct solvers, the
    /// reduced-problem residual for augmented solves.
    pub residual: f64,
}

impl EigenPair {
    pub fn level_index(&self) -> usize {
        self.u.level_index
    }
}

/// Stopping parameters for the SCF fixed-point loop.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScfConfig {
    /// Successive-eigenvalue tolerance |λ_i - λ_{i-1}|.
    pub tol: f64,
    pub max_iter: usize,
    /// Mixing factor in (0, 1]; 1 is the undamped update.
    pub damping: f64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("scf.tol must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("scf.max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config("scf.damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Scale to u'Mu = 1 and fix the sign so that sum(Mu) > 0.
pub fn normalize_and_orient(u: &NodalVector, m: &CsrMatrix) -> Result<NodalVector> {
    if norm2(&u.values) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mu = m.matvec(&u.values);
    let nrm2 = dot(&u.values, &mu);
    if !(nrm2 > 0.0) {
        return Err(Error::ZeroVector);
    }
    let scale = 1.0 / nrm2.sqrt();
    let orient: f64 = mu.iter().sum();
    let s = if orient < 0.0 { -scale } else { scale };
    Ok(NodalVector::new(
        u.level_index,
        u.values.iter().map(|v| s * v).collect(),
    ))
}

/// λ(u) = a(u, u) for b-normalized u: u'A0u plus the nonlinear load pairing.
pub fn rayleigh_quotient(
    a0: &CsrMatrix,
    mesh: &MeshLevel,
    f: &Nonlinearity,
    u: &NodalVector,
) -> Result<f64> {
    let load = assemble_nonlinear_load(mesh, u, f)?;
    Ok(dot(&u.values, &a0.matvec(&u.values)) + dot(&u.values, &load.values))
}

/// Smallest eigenpair of the dense symmetric generalized problem
/// A y = λ M y via Cholesky reduction and a tridiagonalization-based
/// symmetric eigensolver. The returned vector is M-normalized.
pub fn dense_smallest_generalized(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let chol = Cholesky::new(m.clone()).ok_or(Error::SingularSystem)?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(a)
        .ok_or(Error::SingularSystem)?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularSystem)?;
    // symmetrize to guard against roundoff drift before the eigensolve
    let c = (&c + c.transpose()) * 0.5;
    let se = SymmetricEigen::new(c);
    let mut idx = 0;
    for (i, ev) in se.eigenvalues.iter().enumerate() {
        if *ev < se.eigenvalues[idx] {
            idx = i;
        }
    }
    let lambda = se.eigenvalues[idx];
    let y = se.eigenvectors.column(idx).into_owned();
    let xvec = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(Error::SingularSystem)?;
    if !lambda.is_finite() {
        return Err(Error::SingularSystem);
    }
    Ok((lambda, xvec))
}

/// Inverse iteration on A x = λ M x for the smallest eigenpair.
///
/// `solve_a` applies A^{-1}; stopping needs the relative Rayleigh-quotient
/// change to drop below `rq_rel_tol` and, when given, the Euclidean
/// eigen-residual to drop below `resid_target`.
fn inverse_iteration<S>(
    mut solve_a: S,
    a: &CsrMatrix,
    m: &CsrMatrix,
    init: &[f64],
    rq_rel_tol: f64,
    resid_target: Option<f64>,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, usize)>
where
    S: FnMut(&[f64], Option<&[f64]>) -> Result<Vec<f64>>,
{
    let m_normalize = |v: &mut Vec<f64>| -> Result<()> {
        let n2 = dot(v, &m.matvec(v));
        if !(n2 > 0.0) {
            return Err(Error::SingularSystem);
        }
        let s = 1.0 / n2.sqrt();
        for vi in v.iter_mut() {
            *vi *= s;
        }
        Ok(())
    };

    let mut x = init.to_vec();
    m_normalize(&mut x)?;
    let mut lambda = dot(&x, &a.matvec(&x));
    for it in 1..=max_iter {
        let b = m.matvec(&x);
        // the previous iterate scaled by 1/λ is a good starting guess
        let guess: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        let mut z = solve_a(&b, Some(&guess))?;
        m_normalize(&mut z)?;
        let az = a.matvec(&z);
        let lambda_new = dot(&z, &az);
        let mz = m.matvec(&z);
        let mut r2 = 0.0;
        for i in 0..z.len() {
            let r = az[i] - lambda_new * mz[i];
            r2 += r * r;
        }
        let resid = r2.sqrt() / norm2(&z);
        let rq_ok = (lambda_new - lambda).abs() <= rq_rel_tol * lambda_new.abs().max(1.0);
        let resid_ok = resid_target.map_or(true, |t| resid <= t);
        x = z;
        lambda = lambda_new;
        if rq_ok && resid_ok {
            return Ok((lambda, x, it));
        }
    }
    Err(Error::NoConvergence {
        what: "inverse iteration".into(),
        iterations: max_iter,
        lambda_trace: vec![lambda],
    })
}

/// Smallest eigenpair of A x = λ M x by inverse iteration with Rayleigh
/// quotient stopping (relative eigenvalue change below `tol`).
pub fn smallest_generalized_eigenpair(
    a: &CsrMatrix,
    m: &CsrMatrix,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let chol = Cholesky::new(a.to_dense()).ok_or(Error::SingularSystem)?;
    let ones = vec![1.0; a.n_rows()];
    let (lambda, x, _) = inverse_iteration(
        |b, _| Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec()),
        a,
        m,
        &ones,
        tol,
        None,
        MAX_INVERSE_ITER,
    )?;
    Ok((lambda, x))
}

/// Nonlinear residual A0 u + load(u) - λ M u in the Euclidean norm,
/// divided by ||u||.
fn self_consistent_residual(
    a0: &CsrMatrix,
    m: &CsrMatrix,
    mesh: &MeshLevel,
    f: &Nonlinearity,
    u: &NodalVector,
    lambda: f64,
) -> Result<f64> {
    let load = assemble_nonlinear_load(mesh, u, f)?;
    let mut r = a0.matvec(&u.values);
    axpy(1.0, &load.values, &mut r);
    axpy(-lambda, &m.matvec(&u.values), &mut r);
    Ok(norm2(&r) / norm2(&u.values))
}

fn mix_iterates(
    prev: &NodalVector,
    next: &NodalVector,
    damping: f64,
    m: &CsrMatrix,
) -> Result<NodalVector> {
    if damping >= 1.0 {
        return Ok(next.clone());
    }
    let mut v = prev.values.clone();
    for (vi, ni) in v.iter_mut().zip(&next.values) {
        *vi = (1.0 - damping) * *vi + damping * ni;
    }
    normalize_and_orient(&NodalVector::new(prev.level_index, v), m)
}

/// SCF iteration on the full space of `mesh`: every sweep solves
/// (A0 + W(u_prev)) x = λ M x with a dense factorization and mixes the
/// result with damping. Converges when the eigenvalue settles and the
/// self-consistent residual is small.
pub fn scf_solve(
    a0: &CsrMatrix,
    m: &CsrMatrix,
    mesh: &MeshLevel,
    f: &Nonlinearity,
    init: &NodalVector,
    cfg: &ScfConfig,
) -> Result<EigenPair> {
    scf_solve_counted(a0, m, mesh, f, init, cfg).map(|(pair, _)| pair)
}

/// `scf_solve` variant that also reports the number of sweeps taken.
pub fn scf_solve_counted(
    a0: &CsrMatrix,
    m: &CsrMatrix,
    mesh: &MeshLevel,
    f: &Nonlinearity,
    init: &NodalVector,
    cfg: &ScfConfig,
) -> Result<(EigenPair, usize)> {
    cfg.validate()?;
    let mut u = normalize_and_orient(init, m)?;
    let mut lambda_prev = rayleigh_quotient(a0, mesh, f, &u)?;
    let mut trace = Vec::new();
    for sweep in 1..=cfg.max_iter {
        let w = assemble_weighted_mass(mesh, &u, f)?;
        let b = a0.add_scaled(&w, 1.0);
        let chol = Cholesky::new(b.to_dense()).ok_or(Error::SingularSystem)?;
        let inner_rq = (0.01 * cfg.tol).max(1e-14);
        let (lambda, x, _) = inverse_iteration(
            |rhs, _| {
                Ok(chol
                    .solve(&DVector::from_column_slice(rhs))
                    .as_slice()
                    .to_vec())
            },
            &b,
            m,
            &u.values,
            inner_rq,
            Some(50.0 * cfg.tol),
            MAX_INVERSE_ITER,
        )?;
        let x = normalize_and_orient(&NodalVector::new(u.level_index, x), m)?;
        let u_next = mix_iterates(&u, &x, cfg.damping, m)?;
        let resid = self_consistent_residual(a0, m, mesh, f, &u_next, lambda)?;
        trace.push(lambda);
        let done = (lambda - lambda_prev).abs() <= cfg.tol && resid <= 100.0 * cfg.tol;
        u = u_next;
        lambda_prev = lambda;
        if done {
            return Ok((
                EigenPair {
                    lambda,
                    u,
                    residual: resid,
                },
                sweep,
            ));
        }
    }
    Err(Error::NoConvergence {
        what: format!("SCF on level {}", mesh.level_index),
        iterations: cfg.max_iter,
        lambda_trace: trace,
    })
}

/// The coarse space plus the span of one fine-level vector, represented by
/// the basis operator G = [G_H | ũ] with G_H the composite prolongation of
/// the coarse hat functions.
pub struct AugmentedSpace<'h> {
    pub hier: &'h MeshHierarchy,
    pub fine_level: usize,
    /// Composite prolongation from level 0 to the fine level.
    pub g_coarse: CsrMatrix,
    g_coarse_t: CsrMatrix,
    pub u_tilde: NodalVector,
    mass: CsrMatrix,
    reduced_mass: DMatrix<f64>,
}

impl<'h> AugmentedSpace<'h> {
    /// N_H + 1.
    pub fn dim(&self) -> usize {
        self.g_coarse.n_cols() + 1
    }

    /// Apply G to reduced coordinates.
    pub fn lift_coords(&self, y: &[f64]) -> Vec<f64> {
        let nh = self.g_coarse.n_cols();
        let mut v = self.g_coarse.matvec(&y[..nh]);
        axpy(y[nh], &self.u_tilde.values, &mut v);
        v
    }

    /// Reduced matrix G' B G of a fine-level operator.
    fn reduce(&self, b: &CsrMatrix, work: &mut u64) -> DMatrix<f64> {
        let nh = self.g_coarse.n_cols();
        let bg = b.matmul(&self.g_coarse);
        let top = self.g_coarse_t.matmul(&bg).to_dense();
        let bu = b.matvec(&self.u_tilde.values);
        let border = self.g_coarse_t.matvec(&bu);
        let corner = dot(&self.u_tilde.values, &bu);
        *work += (b.nnz() * (nh + 2)) as u64;
        let mut red = DMatrix::zeros(nh + 1, nh + 1);
        red.view_mut((0, 0), (nh, nh)).copy_from(&top);
        for i in 0..nh {
            red[(i, nh)] = border[i];
            red[(nh, i)] = border[i];
        }
        red[(nh, nh)] = corner;
        red
    }
}

/// Assemble the augmented space V_H + span{ũ} on level `k_plus_1` and check
/// that its Gram matrix is safely positive definite.
pub fn build_augmented_space<'h>(
    hier: &'h MeshHierarchy,
    k_plus_1: usize,
    u_tilde: &NodalVector,
) -> Result<AugmentedSpace<'h>> {
    if u_tilde.level_index != k_plus_1 {
        return Err(Error::LevelMismatch(format!(
            "augmenting vector lives on level {}, expected {}",
            u_tilde.level_index, k_plus_1
        )));
    }
    if norm2(&u_tilde.values) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let g_coarse = hier.composite_prolongation(0, k_plus_1);
    let g_coarse_t = g_coarse.transpose();
    let mass = assemble_mass(hier.level(k_plus_1));
    let mut aug = AugmentedSpace {
        hier,
        fine_level: k_plus_1,
        g_coarse,
        g_coarse_t,
        u_tilde: u_tilde.clone(),
        mass: mass.clone(),
        reduced_mass: DMatrix::zeros(0, 0),
    };
    let mut work = 0u64;
    let reduced_mass = aug.reduce(&mass, &mut work);
    let se = SymmetricEigen::new((&reduced_mass + reduced_mass.transpose()) * 0.5);
    let min_ev = se.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_ev >= GRAM_TOL) {
        return Err(Error::DegenerateSpace(min_ev));
    }
    aug.reduced_mass = reduced_mass;
    Ok(aug)
}

/// SCF on the augmented space: per sweep assemble the fine-level frozen
/// weight, reduce to (N_H+1)-dimensional dense matrices, solve the dense
/// generalized eigenproblem and lift back. Returns the pair on the fine
/// level and the number of sweeps ϖ.
pub fn solve_augmented(
    aug: &AugmentedSpace,
    f: &Nonlinearity,
    init_fine: &NodalVector,
    cfg: &ScfConfig,
) -> Result<(EigenPair, usize)> {
    let mut work = 0u64;
    solve_augmented_counted(aug, f, init_fine, cfg, &mut work)
}

pub(crate) fn solve_augmented_counted(
    aug: &AugmentedSpace,
    f: &Nonlinearity,
    init_fine: &NodalVector,
    cfg: &ScfConfig,
    work: &mut u64,
) -> Result<(EigenPair, usize)> {
    cfg.validate()?;
    let mesh = aug.hier.level(aug.fine_level);
    let a0 = assemble_stiffness(mesh);
    let mut u = normalize_and_orient(init_fine, &aug.mass)?;
    let mut lambda_prev = rayleigh_quotient(&a0, mesh, f, &u)?;
    let mut trace = Vec::new();
    for sweep in 1..=cfg.max_iter {
        let w = assemble_weighted_mass(mesh, &u, f)?;
        let b = a0.add_scaled(&w, 1.0);
        let reduced_b = aug.reduce(&b, work);
        let (lambda, y) = dense_smallest_generalized(&reduced_b, &aug.reduced_mass)?;
        let ry = {
            let by = &reduced_b * &y;
            let my = &aug.reduced_mass * &y;
            (by - my * lambda).norm() / y.norm()
        };
        let lifted = NodalVector::new(aug.fine_level, aug.lift_coords(y.as_slice()));
        let x = normalize_and_orient(&lifted, &aug.mass)?;
        let u_next = mix_iterates(&u, &x, cfg.damping, &aug.mass)?;
        trace.push(lambda);
        let done = (lambda - lambda_prev).abs() <= cfg.tol && ry <= 100.0 * cfg.tol;
        u = u_next;
        lambda_prev = lambda;
        if done {
            return Ok((
                EigenPair {
                    lambda,
                    u,
                    residual: ry,
                },
                sweep,
            ));
        }
    }
    Err(Error::NoConvergence {
        what: format!("augmented SCF on level {}", aug.fine_level),
        iterations: cfg.max_iter,
        lambda_trace: trace,
    })
}

/// Normalized interpolant of Π_i sin(π x_i): positive, satisfies the
/// boundary conditions, and close to the ground state.
pub fn default_initial_guess(mesh: &MeshLevel, m: &CsrMatrix) -> Result<NodalVector> {
    let dim = mesh.domain.dim();
    let values: Vec<f64> = mesh
        .interior_dof
        .iter()
        .map(|&v| {
            let p = mesh.vertices[v];
            let mut s = (std::f64::consts::PI * p[0]).sin();
            if dim == 2 {
                s *= (std::f64::consts::PI * p[1]).sin();
            }
            s
        })
        .collect();
    normalize_and_orient(&NodalVector::new(mesh.level_index, values), m)
}

/// Direct SCF solve on the full space of `level`, with the inner linear
/// eigen-solves done by inverse iteration and multigrid inner solves.
pub fn direct_solve_fine(
    hier: &MeshHierarchy,
    level: usize,
    f: &Nonlinearity,
    cfg: &ScfConfig,
) -> Result<EigenPair> {
    cfg.validate()?;
    let mesh = hier.level(level);
    let a0 = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let init = default_initial_guess(mesh, &m)?;
    let mut u = init;
    let mut lambda_prev = rayleigh_quotient(&a0, mesh, f, &u)?;
    let mut trace = Vec::new();
    // inner linear solves: tighter than the eigen targets so the algebraic
    // error stays below the inverse-iteration angle we ask for
    let mg_tol = 1e-12;
    for _sweep in 1..=cfg.max_iter {
        let b = if f.is_zero() {
            a0.clone()
        } else {
            let w = assemble_weighted_mass(mesh, &u, f)?;
            a0.add_scaled(&w, 1.0)
        };
        let mg = setup_mg(hier, &b, level, None)?;
        let inner_rq = (0.01 * cfg.tol).max(1e-14);
        let (lambda, x, _) = inverse_iteration(
            |rhs, guess| {
                let rhs_v = NodalVector::new(level, rhs.to_vec());
                let guess_v = guess.map(|g| NodalVector::new(level, g.to_vec()));
                let (z, _) = multigrid::solve(
                    &mg,
                    &rhs_v,
                    guess_v.as_ref(),
                    mg_tol,
                    multigrid::MAX_VCYCLES,
                )?;
                Ok(z.values)
            },
            &b,
            &m,
            &u.values,
            inner_rq,
            Some(50.0 * cfg.tol),
            MAX_INVERSE_ITER,
        )?;
        let x = normalize_and_orient(&NodalVector::new(level, x), &m)?;
        let u_next = mix_iterates(&u, &x, cfg.damping, &m)?;
        let resid = self_consistent_residual(&a0, &m, mesh, f, &u_next, lambda)?;
        trace.push(lambda);
        let done = (lambda - lambda_prev).abs() <= cfg.tol && resid <= 100.0 * cfg.tol;
        u = u_next;
        lambda_prev = lambda;
        if done {
            return Ok(EigenPair {
                lambda,
                u,
                residual: resid,
            });
        }
    }
    Err(Error::NoConvergence {
        what: format!("direct SCF on level {level}"),
        iterations: cfg.max_iter,
        lambda_trace: trace,
    })
}
