//! Correction steps and the full eigenvalue multigrid scheme.
//!
//! One correction step takes the pair (λ_k, u_k) from level k to level k+1:
//! it solves one linear auxiliary problem on level k+1 with multigrid and
//! then a small nonlinear eigenproblem on the coarse space augmented by the
//! multigrid solution. The fixed-point variant keeps the Laplacian on the
//! left; the Newton variant solves for an error update with the linearized
//! operator -Δ + f_u(x, u_k) on the left.

use crate::assembly::{
    assemble_linearized_term, assemble_mass, assemble_nonlinear_load, assemble_stiffness,
    Nonlinearity,
};
use crate::eigen::{
    build_augmented_space, scf_solve_counted, solve_augmented_counted, EigenPair, ScfConfig,
};
use crate::error::{Error, Result};
use crate::mesh::{build_hierarchy, Domain, MeshHierarchy};
use crate::multigrid::{self, correction_solve_tol, setup_mg, SolveStats};
use crate::sparse::{axpy, dot, NodalVector};

/// Tolerance on |u'Mu - 1| for pairs entering a correction step.
const NORMALIZATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionKind {
    FixedPoint,
    Newton,
}

/// Full configuration of one scheme run.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub domain: Domain,
    pub coarse_h: f64,
    /// Number of refinements above the coarse space; the scheme ends on level n.
    pub n_levels: usize,
    pub beta: u32,
    pub nonlinearity: Nonlinearity,
    pub correction: CorrectionKind,
    pub scf: ScfConfig,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 1 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.beta != 2 {
            return Err(Error::UnsupportedBeta(self.beta));
        }
        self.scf.validate()
    }
}

/// Per-level record of the scheme run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LevelTrace {
    pub k: usize,
    pub lambda: f64,
    /// SCF sweeps of the nonlinear solve on this level.
    pub varpi: usize,
    pub mg_stats: SolveStats,
    pub err_lambda: Option<f64>,
    pub err_l2: Option<f64>,
    pub err_h1: Option<f64>,
}

/// Work tallies for one run. `matvecs` counts sparse work in units of matrix
/// nonzeros touched (multigrid plus the reduced-matrix products);
/// `dense_eig_work` uses the (N_H+1)³ operation proxy per augmented sweep.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct WorkCounter {
    pub n_k: Vec<usize>,
    pub matvecs: u64,
    pub dense_eig_work: u64,
    pub assemblies: u64,
}

fn check_normalized(hier: &MeshHierarchy, pair: &EigenPair) -> Result<()> {
    let m = assemble_mass(hier.level(pair.level_index()));
    let nrm = dot(&pair.u.values, &m.matvec(&pair.u.values));
    if (nrm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(nrm));
    }
    Ok(())
}

fn correction_impl(
    hier: &MeshHierarchy,
    f: &Nonlinearity,
    pair_k: &EigenPair,
    k: usize,
    kind: CorrectionKind,
    scf: &ScfConfig,
    wc: &mut WorkCounter,
) -> Result<(EigenPair, LevelTrace)> {
    if pair_k.level_index() != k {
        return Err(Error::LevelMismatch(format!(
            "pair lives on level {}, expected {k}",
            pair_k.level_index()
        )));
    }
    if k + 1 > hier.top_level() {
        return Err(Error::LevelMismatch(format!(
            "no level {} in the hierarchy",
            k + 1
        )));
    }
    check_normalized(hier, pair_k)?;

    let fine = hier.level(k + 1);
    let a = assemble_stiffness(fine);
    let m = assemble_mass(fine);
    wc.assemblies += 2;

    // the lifted coefficients represent u_k exactly on the finer mesh
    let u_lift = hier.lift(&pair_k.u, k + 1);
    let load = assemble_nonlinear_load(fine, &u_lift, f)?;
    wc.assemblies += 1;

    let mut rhs = m.matvec(&u_lift.values);
    wc.matvecs += m.nnz() as u64;
    for (r, l) in rhs.iter_mut().zip(&load.values) {
        *r = pair_k.lambda * *r - l;
    }

    let rel_tol = correction_solve_tol(fine.h);
    let (u_tilde, mg_stats) = match kind {
        CorrectionKind::FixedPoint => {
            let mg = setup_mg(hier, &a, k + 1, None)?;
            let rhs_v = NodalVector::new(k + 1, rhs);
            multigrid::solve(&mg, &rhs_v, Some(&u_lift), rel_tol, multigrid::MAX_VCYCLES)?
        }
        CorrectionKind::Newton => {
            let lin = assemble_linearized_term(fine, &u_lift, f)?;
            wc.assemblies += 1;
            let mg = setup_mg(hier, &a, k + 1, Some(&lin)).map_err(|e| match e {
                Error::NotSpd(_) => Error::NonCoercive,
                other => other,
            })?;
            axpy(-1.0, &a.matvec(&u_lift.values), &mut rhs);
            wc.matvecs += a.nnz() as u64;
            let rhs_v = NodalVector::new(k + 1, rhs);
            let (e_tilde, stats) =
                multigrid::solve(&mg, &rhs_v, None, rel_tol, multigrid::MAX_VCYCLES)?;
            let mut u = u_lift.values.clone();
            axpy(1.0, &e_tilde.values, &mut u);
            (NodalVector::new(k + 1, u), stats)
        }
    };
    wc.matvecs += mg_stats.matvec_count;

    let aug = build_augmented_space(hier, k + 1, &u_tilde)?;
    // Stop the augmented sweeps at discretization accuracy: the eigenvalue
    // error of the incoming iterate and the level-(k+1) discretization error
    // both scale like h², so a fixed tolerance would force the sweep count
    // to grow with accuracy instead of staying at the expected two or three.
    let aug_scf = ScfConfig {
        tol: scf
            .tol
            .max(2e-3 * pair_k.lambda.abs().max(1.0) * fine.h * fine.h),
        ..*scf
    };
    let mut aux_work = 0u64;
    let (pair, varpi) = solve_augmented_counted(&aug, f, &u_tilde, &aug_scf, &mut aux_work)?;
    wc.matvecs += aux_work;
    wc.assemblies += 1 + varpi as u64;
    let n_coarse_plus_1 = (hier.level(0).n_interior() + 1) as u64;
    wc.dense_eig_work += varpi as u64 * n_coarse_plus_1.pow(3);

    let trace = LevelTrace {
        k: k + 1,
        lambda: pair.lambda,
        varpi,
        mg_stats,
        err_lambda: None,
        err_l2: None,
        err_h1: None,
    };
    Ok((pair, trace))
}

/// One correction step with the plain Laplacian as the auxiliary operator.
pub fn correction_fixed_point(
    hier: &MeshHierarchy,
    f: &Nonlinearity,
    pair_k: &EigenPair,
    k: usize,
    scf: &ScfConfig,
) -> Result<(EigenPair, LevelTrace)> {
    let mut wc = WorkCounter::default();
    correction_impl(hier, f, pair_k, k, CorrectionKind::FixedPoint, scf, &mut wc)
}

/// One correction step solving for an error update with the linearized
/// operator -Δ + f_u(x, u_k).
pub fn correction_newton(
    hier: &MeshHierarchy,
    f: &Nonlinearity,
    pair_k: &EigenPair,
    k: usize,
    scf: &ScfConfig,
) -> Result<(EigenPair, LevelTrace)> {
    let mut wc = WorkCounter::default();
    correction_impl(hier, f, pair_k, k, CorrectionKind::Newton, scf, &mut wc)
}

/// Everything a scheme run produces, including the per-level eigenpairs
/// needed for error columns.
pub struct SchemeRun {
    pub final_pair: EigenPair,
    pub traces: Vec<LevelTrace>,
    pub work: WorkCounter,
    /// Pairs for levels 1..=n, aligned with `traces`.
    pub pairs: Vec<EigenPair>,
}

/// Run the scheme on a prebuilt hierarchy (which may contain extra levels
/// beyond `cfg.n_levels`, e.g. for a finer reference solve).
pub fn run_scheme_on(hier: &MeshHierarchy, cfg: &SchemeConfig) -> Result<SchemeRun> {
    cfg.validate()?;
    if hier.top_level() < cfg.n_levels {
        return Err(Error::LevelMismatch(format!(
            "hierarchy has {} levels, scheme needs {}",
            hier.top_level(),
            cfg.n_levels
        )));
    }
    if hier.domain != cfg.domain {
        return Err(Error::LevelMismatch("hierarchy domain differs".into()));
    }

    let mut work = WorkCounter {
        n_k: (0..=cfg.n_levels)
            .map(|k| hier.level(k).n_interior())
            .collect(),
        ..Default::default()
    };

    // level 1: solve the nonlinear eigenproblem on V_{h_1} directly
    let mesh1 = hier.level(1);
    let a1 = assemble_stiffness(mesh1);
    let m1 = assemble_mass(mesh1);
    work.assemblies += 2;
    let init = crate::eigen::default_initial_guess(mesh1, &m1)?;
    let (pair1, sweeps1) = scf_solve_counted(&a1, &m1, mesh1, &cfg.nonlinearity, &init, &cfg.scf)?;
    work.assemblies += sweeps1 as u64;

    let mut traces = vec![LevelTrace {
        k: 1,
        lambda: pair1.lambda,
        varpi: sweeps1,
        mg_stats: SolveStats::default(),
        err_lambda: None,
        err_l2: None,
        err_h1: None,
    }];
    let mut pairs = vec![pair1];

    for k in 1..cfg.n_levels {
        let (pair, trace) = correction_impl(
            hier,
            &cfg.nonlinearity,
            pairs.last().unwrap(),
            k,
            cfg.correction,
            &cfg.scf,
            &mut work,
        )?;
        traces.push(trace);
        pairs.push(pair);
    }

    Ok(SchemeRun {
        final_pair: pairs.last().unwrap().clone(),
        traces,
        work,
        pairs,
    })
}

/// Run the full eigenvalue multigrid scheme from scratch.
pub fn run_scheme(cfg: &SchemeConfig) -> Result<(EigenPair, Vec<LevelTrace>, WorkCounter)> {
    let hier = build_hierarchy(cfg.domain, cfg.coarse_h, cfg.n_levels, cfg.beta)?;
    let run = run_scheme_on(&hier, cfg)?;
    Ok((run.final_pair, run.traces, run.work))
}

/// Per-level work of one run against the dimension model.
#[derive(Debug, Clone, serde::Serialize)]
pub struct WorkModelReport {
    /// (level k, N_k, multigrid work units) for the correction levels.
    pub per_level: Vec<(usize, usize, u64)>,
    /// Multigrid work per unknown for each correction level.
    pub work_per_dof: Vec<f64>,
    /// Log-log regression slope of multigrid work against N_k.
    pub slope: f64,
    /// Dense eigensolve work (N_H+1)³·ϖ_k for each correction level.
    pub dense_eig_per_level: Vec<u64>,
    pub varpi: Vec<usize>,
    /// Set when the per-level eigenvalue gaps fail to contract, which
    /// indicates the coarse space is too coarse for the smallness condition.
    pub coarse_space_warning: Option<String>,
}

/// Fit the observed per-level work to the linear model and summarize the
/// dense-eigensolve term.
pub fn work_model_check(wc: &WorkCounter, traces: &[LevelTrace]) -> WorkModelReport {
    let n_coarse_plus_1 = (wc.n_k.first().copied().unwrap_or(0) + 1) as u64;
    let mut per_level = Vec::new();
    let mut work_per_dof = Vec::new();
    let mut dense = Vec::new();
    let mut varpi = Vec::new();
    for t in traces {
        varpi.push(t.varpi);
        if t.k >= 2 {
            let n_k = wc.n_k[t.k];
            per_level.push((t.k, n_k, t.mg_stats.matvec_count));
            work_per_dof.push(t.mg_stats.matvec_count as f64 / n_k as f64);
            dense.push(t.varpi as u64 * n_coarse_plus_1.pow(3));
        }
    }
    let slope = if per_level.len() >= 2 {
        let xs: Vec<f64> = per_level.iter().map(|(_, n, _)| (*n as f64).ln()).collect();
        let ys: Vec<f64> = per_level.iter().map(|(_, _, w)| (*w as f64).ln()).collect();
        let n = xs.len() as f64;
        let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    let coarse_space_warning = {
        let gaps: Vec<f64> = traces
            .windows(2)
            .map(|w| (w[1].lambda - w[0].lambda).abs())
            .collect();
        let contracts = gaps.windows(2).all(|g| g[1] <= g[0] || g[1] < 1e-12);
        if contracts || gaps.len() < 2 {
            None
        } else {
            Some("coarse space too coarse - decrease H".to_string())
        }
    };
    WorkModelReport {
        per_level,
        work_per_dof,
        slope,
        dense_eig_per_level: dense,
        varpi,
        coarse_space_warning,
    }
}
