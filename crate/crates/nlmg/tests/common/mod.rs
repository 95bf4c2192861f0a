//! Independent oracles for the integration suites. Everything here computes
//! reference values through routes the library does not use: closed-form
//! eigenvalues, pointwise P1 evaluation by cell lookup, a plain conjugate
//! gradient solver, and a dense brute-force SCF iteration with its own 1d
//! assembly.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use nlmg::mesh::{Domain, MeshLevel};
use nlmg::sparse::{dot, norm2, CsrMatrix};

/// Smallest eigenvalue of the 1d discrete problem with consistent mass on a
/// uniform grid: (6/h²)(1-cos πh)/(2+cos πh).
pub fn discrete_eigenvalue_interval(h: f64) -> f64 {
    let c = (std::f64::consts::PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

/// Evaluate the P1 interpolant of vertex values at an arbitrary point by
/// locating the containing cell on the structured grid.
pub fn eval_p1(mesh: &MeshLevel, full_values: &[f64], x: &[f64; 2]) -> f64 {
    assert_eq!(full_values.len(), mesh.n_vertices());
    let m = mesh.subdivisions;
    let clamp_cell = |t: f64| -> usize {
        let c = (t * m as f64).floor() as isize;
        c.clamp(0, m as isize - 1) as usize
    };
    match mesh.domain {
        Domain::Interval01 => {
            let i = clamp_cell(x[0]);
            let (xa, xb) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
            let t = (x[0] - xa) / (xb - xa);
            (1.0 - t) * full_values[i] + t * full_values[i + 1]
        }
        Domain::Square01 => {
            let (i, j) = (clamp_cell(x[0]), clamp_cell(x[1]));
            let h = 1.0 / m as f64;
            let (lx, ly) = ((x[0] - i as f64 * h) / h, (x[1] - j as f64 * h) / h);
            let vid = |a: usize, b: usize| b * (m + 1) + a;
            // the square is split along the lower-left to upper-right diagonal
            if lx >= ly {
                // triangle (i,j), (i+1,j), (i+1,j+1)
                let (v0, v1, v2) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1));
                let (b1, b2) = (lx - ly, ly);
                let b0 = 1.0 - b1 - b2;
                b0 * full_values[v0] + b1 * full_values[v1] + b2 * full_values[v2]
            } else {
                // triangle (i,j), (i+1,j+1), (i,j+1)
                let (v0, v1, v2) = (vid(i, j), vid(i + 1, j + 1), vid(i, j + 1));
                let (b1, b2) = (lx, ly - lx);
                let b0 = 1.0 - b1 - b2;
                b0 * full_values[v0] + b1 * full_values[v1] + b2 * full_values[v2]
            }
        }
    }
}

/// Plain conjugate gradients, used only to cross-check multigrid solves.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let b_norm = norm2(b).max(f64::MIN_POSITIVE);
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() / b_norm <= rel_tol {
            break;
        }
        let ap = a.matvec(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

/// Dense 1d assembly for the brute-force oracle: uniform grid with `m`
/// subdivisions, interior dofs only. Stiffness and mass come from the exact
/// element integrals.
pub struct DenseProblem1d {
    pub m_sub: usize,
    pub h: f64,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
}

pub fn dense_problem_1d(m_sub: usize) -> DenseProblem1d {
    let n = m_sub - 1;
    let h = 1.0 / m_sub as f64;
    let mut a = DMatrix::zeros(n, n);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 2.0 / h;
        m[(i, i)] = 2.0 * h / 3.0;
        if i + 1 < n {
            a[(i, i + 1)] = -1.0 / h;
            a[(i + 1, i)] = -1.0 / h;
            m[(i, i + 1)] = h / 6.0;
            m[(i + 1, i)] = h / 6.0;
        }
    }
    DenseProblem1d {
        m_sub,
        h,
        stiffness: a,
        mass: m,
    }
}

/// Harmonic-well GPE weight w(x,u) = V(x) + ζu² assembled densely with the
/// same 2-point Gauss rule per element, u the P1 interpolant of the interior
/// values (zero on the boundary).
pub fn dense_weighted_mass_1d(
    p: &DenseProblem1d,
    u: &DVector<f64>,
    well: f64,
    zeta: f64,
) -> DMatrix<f64> {
    let n = p.m_sub - 1;
    let h = p.h;
    let mut w = DMatrix::zeros(n, n);
    let s = 0.5 / f64::sqrt(3.0);
    let quad = [(0.5 - s, 0.5), (0.5 + s, 0.5)];
    let full = |i: isize| -> f64 {
        if i <= 0 || i >= p.m_sub as isize {
            0.0
        } else {
            u[(i - 1) as usize]
        }
    };
    for e in 0..p.m_sub {
        let x_left = e as f64 * h;
        let (ul, ur) = (full(e as isize), full(e as isize + 1));
        for (t, wq) in quad {
            let x = x_left + t * h;
            let uq = (1.0 - t) * ul + t * ur;
            let weight = well * (x - 0.5) * (x - 0.5) + zeta * uq * uq;
            let phi = [1.0 - t, t];
            for a in 0..2 {
                for b in 0..2 {
                    let (ia, ib) = (e as isize + a as isize - 1, e as isize + b as isize - 1);
                    if ia >= 0 && ia < n as isize && ib >= 0 && ib < n as isize {
                        w[(ia as usize, ib as usize)] += wq * h * weight * phi[a] * phi[b];
                    }
                }
            }
        }
    }
    w
}

fn dense_smallest(a: &DMatrix<f64>, m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let chol = nalgebra::Cholesky::new(m.clone()).expect("mass must be SPD");
    let l = chol.l();
    let x = l.solve_lower_triangular(a).unwrap();
    let c = l.solve_lower_triangular(&x.transpose()).unwrap();
    let c = (&c + c.transpose()) * 0.5;
    let se = SymmetricEigen::new(c);
    let mut idx = 0;
    for (i, ev) in se.eigenvalues.iter().enumerate() {
        if *ev < se.eigenvalues[idx] {
            idx = i;
        }
    }
    let y = se.eigenvectors.column(idx).into_owned();
    let v = l.transpose().solve_upper_triangular(&y).unwrap();
    (se.eigenvalues[idx], v)
}

/// Brute-force damped fixed-point SCF for the 1d GPE ground state with
/// V(x) = well·(x-1/2)², f = V u + ζ u³. Dense matrices, full eigensolve per
/// sweep, iterated until |Δλ| ≤ tol. Completely independent of the library's
/// solver path.
pub fn brute_force_gpe_1d(m_sub: usize, well: f64, zeta: f64, damping: f64, tol: f64) -> f64 {
    let p = dense_problem_1d(m_sub);
    let n = m_sub - 1;
    // positive initial profile sin(pi x), M-normalized
    let mut u = DVector::from_fn(n, |i, _| {
        (std::f64::consts::PI * ((i + 1) as f64 * p.h)).sin()
    });
    let normalize = |v: &mut DVector<f64>, m: &DMatrix<f64>| {
        let nrm = (v.dot(&(m * &*v))).sqrt();
        *v /= nrm;
        let s: f64 = (m * &*v).sum();
        if s < 0.0 {
            *v = -&*v;
        }
    };
    normalize(&mut u, &p.mass);
    let mut lambda_prev = f64::INFINITY;
    for _ in 0..100_000 {
        let w = dense_weighted_mass_1d(&p, &u, well, zeta);
        let b = &p.stiffness + &w;
        let (lambda, mut x) = dense_smallest(&b, &p.mass);
        normalize(&mut x, &p.mass);
        let mut mixed = &u * (1.0 - damping) + &x * damping;
        normalize(&mut mixed, &p.mass);
        u = mixed;
        if (lambda - lambda_prev).abs() <= tol {
            return lambda;
        }
        lambda_prev = lambda;
    }
    panic!("brute-force SCF did not converge");
}
