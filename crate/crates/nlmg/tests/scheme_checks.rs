//! Correction-step oracle comparisons and scheme-level behaviour.

mod common;

use nlmg::assembly::{
    assemble_linearized_term, assemble_mass, assemble_nonlinear_load, assemble_stiffness,
    Nonlinearity, Potential,
};
use nlmg::eigen::{
    build_augmented_space, dense_smallest_generalized, normalize_and_orient, scf_solve,
    solve_augmented, EigenPair, ScfConfig,
};
use nlmg::mesh::{build_hierarchy, Domain, MeshHierarchy};
use nlmg::multigrid::{self, setup_mg};
use nlmg::scheme::{
    correction_fixed_point, correction_newton, run_scheme, CorrectionKind, SchemeConfig,
};
use nlmg::sparse::{axpy, dot, norm2, NodalVector};

fn dense_linear_pair(hier: &MeshHierarchy, level: usize) -> EigenPair {
    let mesh = hier.level(level);
    let a = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    let (lambda, x) = dense_smallest_generalized(&a.to_dense(), &m.to_dense()).unwrap();
    let u = normalize_and_orient(&NodalVector::new(level, x.as_slice().to_vec()), &m).unwrap();
    EigenPair {
        lambda,
        u,
        residual: 0.0,
    }
}

/// Fixed-point correction with the exact coarse pair: the auxiliary solve
/// reproduces the discrete source solution and the eigenvalue equals the
/// dense Ritz value of the augmented basis.
#[test]
fn fixed_point_correction_matches_dense_augmented_solve() {
    let hier = build_hierarchy(Domain::Interval01, 0.25, 2, 2).unwrap();
    let pair1 = dense_linear_pair(&hier, 1);
    let f = Nonlinearity::Zero;

    // auxiliary problem solved two independent ways
    let fine = hier.level(2);
    let a = assemble_stiffness(fine);
    let m = assemble_mass(fine);
    let u_lift = hier.lift(&pair1.u, 2);
    let rhs: Vec<f64> = m
        .matvec(&u_lift.values)
        .iter()
        .map(|v| pair1.lambda * v)
        .collect();
    let u_hat = common::cg_solve(&a, &rhs, 1e-14, 100_000);

    let aug = build_augmented_space(&hier, 2, &NodalVector::new(2, u_hat.clone())).unwrap();
    let g = {
        // dense basis [G_H | u_hat] assembled explicitly
        let gh = hier.composite_prolongation(0, 2).to_dense();
        let mut g = nalgebra::DMatrix::zeros(gh.nrows(), gh.ncols() + 1);
        g.view_mut((0, 0), (gh.nrows(), gh.ncols())).copy_from(&gh);
        for i in 0..gh.nrows() {
            g[(i, gh.ncols())] = u_hat[i];
        }
        g
    };
    let red_a = g.transpose() * a.to_dense() * &g;
    let red_m = g.transpose() * m.to_dense() * &g;
    let (ritz, _) = dense_smallest_generalized(&red_a, &red_m).unwrap();

    let (pair2, trace) =
        correction_fixed_point(&hier, &f, &pair1, 1, &ScfConfig::default()).unwrap();
    assert_eq!(trace.k, 2);
    assert!(
        (pair2.lambda - ritz).abs() < 1e-9,
        "correction {} vs dense Ritz {ritz}",
        pair2.lambda
    );
    let _ = aug;
    // and the fine Ritz value is bracketed by the two direct eigenvalues
    let direct2 = dense_linear_pair(&hier, 2);
    assert!(pair2.lambda >= direct2.lambda - 1e-12);
    assert!(pair2.lambda <= pair1.lambda + 1e-12);
}

/// At f = 0 the Newton right-hand side differs from the fixed-point one by
/// exactly the stiffness action on the lifted iterate, so both corrections
/// solve the same auxiliary problem.
#[test]
fn newton_reduces_to_fixed_point_without_nonlinearity() {
    let hier = build_hierarchy(Domain::Interval01, 0.125, 2, 2).unwrap();
    let pair1 = dense_linear_pair(&hier, 1);
    let fine = hier.level(2);
    let a = assemble_stiffness(fine);
    let m = assemble_mass(fine);
    let u_lift = hier.lift(&pair1.u, 2);
    let f = Nonlinearity::Zero;

    let load = assemble_nonlinear_load(fine, &u_lift, &f).unwrap();
    let mut rhs_fp = m.matvec(&u_lift.values);
    for (r, l) in rhs_fp.iter_mut().zip(&load.values) {
        *r = pair1.lambda * *r - l;
    }
    let mut rhs_newton = rhs_fp.clone();
    axpy(-1.0, &a.matvec(&u_lift.values), &mut rhs_newton);

    // algebraic identity between the two right-hand sides
    let au = a.matvec(&u_lift.values);
    for i in 0..rhs_fp.len() {
        assert!((rhs_newton[i] - (rhs_fp[i] - au[i])).abs() <= 1e-12);
    }

    // solving both systems tightly gives the same corrected iterate
    let lin = assemble_linearized_term(fine, &u_lift, &f).unwrap();
    assert_eq!(lin.max_abs(), 0.0);
    let mg = setup_mg(&hier, &a, 2, None).unwrap();
    let (u_fp, _) = multigrid::solve(
        &mg,
        &NodalVector::new(2, rhs_fp),
        Some(&u_lift),
        1e-13,
        multigrid::MAX_VCYCLES,
    )
    .unwrap();
    let (e_newton, _) = multigrid::solve(
        &mg,
        &NodalVector::new(2, rhs_newton),
        None,
        1e-13,
        multigrid::MAX_VCYCLES,
    )
    .unwrap();
    let mut u_newton = u_lift.values.clone();
    axpy(1.0, &e_newton.values, &mut u_newton);
    let scale = norm2(&u_fp.values);
    for (a, b) in u_fp.values.iter().zip(&u_newton) {
        assert!((a - b).abs() <= 1e-12 * scale.max(1.0), "{a} vs {b}");
    }
}

/// With a strong cubic coupling the Newton correction lands at least as
/// close to the level-2 direct eigenvalue as the fixed-point correction
/// (up to a 5% margin).
#[test]
fn newton_correction_is_at_least_as_accurate_for_strong_coupling() {
    let hier = build_hierarchy(Domain::Interval01, 0.125, 2, 2).unwrap();
    let f = Nonlinearity::Gpe {
        v: Potential::Constant(0.0),
        zeta: 50.0,
    };
    // this coupling sits beyond the period-2 instability of the undamped
    // fixed-point map (checked against an independent energy minimization),
    // so the strong-coupling case is run with mixing
    let cfg = ScfConfig {
        tol: 1e-12,
        max_iter: 2000,
        damping: 0.3,
    };
    // level-1 nonlinear pair
    let mesh1 = hier.level(1);
    let a1 = assemble_stiffness(mesh1);
    let m1 = assemble_mass(mesh1);
    let init = nlmg::eigen::default_initial_guess(mesh1, &m1).unwrap();
    let pair1 = scf_solve(&a1, &m1, mesh1, &f, &init, &cfg).unwrap();
    // level-2 reference warm-started from the level-1 state to stay on the
    // ground-state branch
    let mesh2 = hier.level(2);
    let a2 = assemble_stiffness(mesh2);
    let m2 = assemble_mass(mesh2);
    let init2 = hier.lift(&pair1.u, 2);
    let reference = scf_solve(&a2, &m2, mesh2, &f, &init2, &cfg).unwrap();

    let (fp, _) = correction_fixed_point(&hier, &f, &pair1, 1, &cfg).unwrap();
    let (nw, _) = correction_newton(&hier, &f, &pair1, 1, &cfg).unwrap();
    let gap_fp = (fp.lambda - reference.lambda).abs();
    let gap_nw = (nw.lambda - reference.lambda).abs();
    assert!(
        gap_nw <= 1.05 * gap_fp,
        "newton gap {gap_nw} vs fixed-point gap {gap_fp}"
    );
}

/// Feeding the exact discrete solution of the nonlinear problem into the
/// Newton correction leaves only a solver-accuracy-sized error update.
#[test]
fn newton_update_vanishes_at_the_nonlinear_solution() {
    let hier = build_hierarchy(Domain::Interval01, 0.125, 2, 2).unwrap();
    let f = Nonlinearity::Cubic { zeta: 10.0 };
    let cfg = ScfConfig {
        tol: 1e-13,
        max_iter: 1000,
        damping: 1.0,
    };
    let mesh2 = hier.level(2);
    let a2 = assemble_stiffness(mesh2);
    let m2 = assemble_mass(mesh2);
    let init = nlmg::eigen::default_initial_guess(mesh2, &m2).unwrap();
    let pair = scf_solve(&a2, &m2, mesh2, &f, &init, &cfg).unwrap();

    // Newton auxiliary problem with the solution itself as the iterate
    let load = assemble_nonlinear_load(mesh2, &pair.u, &f).unwrap();
    let lin = assemble_linearized_term(mesh2, &pair.u, &f).unwrap();
    let mut rhs = m2.matvec(&pair.u.values);
    for (r, l) in rhs.iter_mut().zip(&load.values) {
        *r = pair.lambda * *r - l;
    }
    axpy(-1.0, &a2.matvec(&pair.u.values), &mut rhs);
    let mg = setup_mg(&hier, &a2, 2, Some(&lin)).unwrap();
    let (e, _) = multigrid::solve(
        &mg,
        &NodalVector::new(2, rhs),
        None,
        1e-12,
        multigrid::MAX_VCYCLES,
    )
    .unwrap();
    assert!(
        norm2(&e.values) <= 1e-8,
        "error update norm {}",
        norm2(&e.values)
    );
}

#[test]
fn augmented_sweep_counts_stay_low_along_a_nonlinear_run() {
    let cfg = SchemeConfig {
        domain: Domain::Interval01,
        coarse_h: 0.125,
        n_levels: 4,
        beta: 2,
        nonlinearity: Nonlinearity::Gpe {
            v: Potential::HarmonicWell { coefficient: 100.0 },
            zeta: 10.0,
        },
        correction: CorrectionKind::FixedPoint,
        scf: ScfConfig::default(),
    };
    let (_, traces, _) = run_scheme(&cfg).unwrap();
    for t in traces.iter().filter(|t| t.k >= 2) {
        assert!(t.varpi <= 3, "level {}: varpi {}", t.k, t.varpi);
        assert!(t.varpi >= 1);
    }
}

#[test]
fn per_level_work_doubles_with_the_unknowns_in_1d() {
    let cfg = SchemeConfig {
        domain: Domain::Interval01,
        coarse_h: 0.125,
        n_levels: 6,
        beta: 2,
        nonlinearity: Nonlinearity::Zero,
        correction: CorrectionKind::FixedPoint,
        scf: ScfConfig::default(),
    };
    let (_, traces, _) = run_scheme(&cfg).unwrap();
    let works: Vec<u64> = traces
        .iter()
        .filter(|t| t.k >= 3)
        .map(|t| t.mg_stats.matvec_count)
        .collect();
    for w in works.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!(
            (1.5..=2.5).contains(&ratio),
            "work ratio {ratio} outside doubling band"
        );
    }
}

#[test]
fn degenerate_augmentation_is_reported() {
    let hier = build_hierarchy(Domain::Interval01, 0.25, 2, 2).unwrap();
    let g = hier.composite_prolongation(0, 2);
    let inside = NodalVector::new(2, g.matvec(&[0.4, 1.0, -0.2]));
    let err = match build_augmented_space(&hier, 2, &inside) {
        Err(e) => e,
        Ok(_) => panic!("expected a degenerate-space error"),
    };
    assert!(matches!(err, nlmg::Error::DegenerateSpace(_)));
    // and a valid space still solves
    let m = assemble_mass(hier.level(2));
    let u = nlmg::eigen::default_initial_guess(hier.level(2), &m).unwrap();
    let aug = build_augmented_space(&hier, 2, &u).unwrap();
    let (pair, _) = solve_augmented(&aug, &Nonlinearity::Zero, &u, &ScfConfig::default()).unwrap();
    let nrm = dot(&pair.u.values, &m.matvec(&pair.u.values));
    assert!((nrm - 1.0).abs() < 1e-12);
}
