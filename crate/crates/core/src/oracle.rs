//! Cross-validation of every closed form against an independent route.
//!
//! Each check reports the worst discrepancy seen over a small seeded batch of
//! problems together with the tolerance it is held to.

use std::path::Path;

use nalgebra::Matrix2;

use crate::error::Result;
use crate::experiments::{fmt_float, gen_gaussian};
use crate::linalg::{lambda_min_positive, pseudo_solve, DenseMatrix, LinearSystem, Vector};
use crate::rates::{
    block_eigenvalues, expected_update_matrix, lambda_min_plus_w_eps, rk_expected_update, rk_rate,
    sap_rate_from_ez, w_eps_closed_form, w_eps_svd_assembly, ExpectationMode,
};
use crate::sampling::SeededStream;
use crate::sap::{
    block_structure_report, build_embedded_system, rek_matrix_step, sap_step, update_matrix_z,
    BlockSketch, ProjectionMetric,
};
use crate::solvers::{rek_step, rk_step, saprek_step, SolverState};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn pass(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance
    }
}

const EPS_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

fn random_state(m: usize, n: usize, s: &mut SeededStream) -> SolverState {
    SolverState {
        x: Vector::from_fn(n, |_, _| s.standard_normal()),
        z: Vector::from_fn(m, |_, _| s.standard_normal()),
        k: 0,
    }
}

fn stack(z: &Vector, x: &Vector) -> Vector {
    Vector::from_iterator(z.len() + x.len(), z.iter().chain(x.iter()).copied())
}

fn system(m: usize, n: usize, s: &mut SeededStream) -> Result<LinearSystem> {
    let a = gen_gaussian(m, n, s);
    let b = Vector::from_fn(m, |_, _| s.uniform());
    LinearSystem::new(a, b)
}

fn least_squares(seed: u64) -> Result<f64> {
    let mut s = SeededStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let sys = system(30, 6, &mut s)?;
        let x = pseudo_solve(sys.a(), sys.b())?;
        let gram = sys.a().transpose() * sys.a();
        let rhs = sys.a().transpose() * sys.b();
        let chol = gram.cholesky().expect("full column rank").solve(&rhs);
        worst = worst.max((x - &chol).norm() / chol.norm());
    }
    Ok(worst)
}

fn closed_form_vs_brute(seed: u64) -> Result<(f64, f64)> {
    let mut s = SeededStream::new(seed);
    let (mut brute_gap, mut svd_gap): (f64, f64) = (0.0, 0.0);
    for (m, n) in [(6, 3), (4, 4), (3, 5)] {
        let a = gen_gaussian(m, n, &mut s);
        for eps in EPS_GRID {
            let closed = w_eps_closed_form(&a, eps)?.matrix;
            let brute = expected_update_matrix(&a, eps, ExpectationMode::DroppedTerm)?.matrix;
            let assembled = w_eps_svd_assembly(&a, eps)?.matrix;
            brute_gap = brute_gap.max((&closed - brute).amax());
            svd_gap = svd_gap.max((&closed - assembled).amax());
        }
    }
    Ok((brute_gap, svd_gap))
}

fn lambda_vs_eigensolver(seed: u64) -> Result<f64> {
    let mut s = SeededStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a = gen_gaussian(12, 4, &mut s);
        for eps in EPS_GRID {
            let formula = lambda_min_plus_w_eps(&a, eps)?;
            let eig = lambda_min_positive(&w_eps_closed_form(&a, eps)?.matrix).unwrap_or(0.0);
            worst = worst.max((formula - eig).abs());
        }
    }
    Ok(worst)
}

fn block_eigen_vs_2x2(seed: u64) -> f64 {
    let mut s = SeededStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let sigma = s.uniform().max(1e-3);
        let eps = 10f64.powf(-4.0 + 8.0 * s.uniform());
        let m = 1 + (s.uniform() * 400.0) as usize;
        let mf = m as f64;
        let d = mf + 1.0 / eps;
        let off = (sigma - sigma.powi(3)) / eps.sqrt();
        let block = Matrix2::new(
            (mf - 2.0 + 1.0 / eps) * sigma * sigma + 1.0,
            off,
            off,
            sigma * sigma / eps,
        ) / d;
        let e = block.symmetric_eigen().eigenvalues;
        let (lo, hi) = block_eigenvalues(sigma, m, eps);
        let scale = hi.max(1e-300);
        worst = worst
            .max((lo - e.min()).abs() / scale)
            .max((hi - e.max()).abs() / scale);
    }
    worst
}

fn saprek_vs_sap(seed: u64) -> Result<f64> {
    let mut s = SeededStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let sys = system(8, 4, &mut s)?;
        let emb = build_embedded_system(sys.a(), sys.b())?;
        let state = random_state(8, 4, &mut s);
        for eps in EPS_GRID {
            let b = ProjectionMetric::new(eps, 8, 4)?.to_dense();
            for i in 0..8 {
                for j in 0..4 {
                    let fast = saprek_step(&sys, &state, i, j, eps)?;
                    let sk = BlockSketch::new(i, j, 8, 4)?.to_dense();
                    let slow =
                        sap_step(&emb.matrix, &emb.rhs, &b, &sk, &stack(&state.z, &state.x))?;
                    let fast = stack(&fast.z, &fast.x);
                    worst = worst.max((fast - &slow).norm() / (1.0 + slow.norm()));
                }
            }
        }
    }
    Ok(worst)
}

fn rek_vs_matrix_form(seed: u64) -> Result<f64> {
    let mut s = SeededStream::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let sys = system(8, 4, &mut s)?;
        let state = random_state(8, 4, &mut s);
        for i in 0..8 {
            for j in 0..4 {
                let fast = rek_step(&sys, &state, i, j)?;
                let (z, x) = rek_matrix_step(&sys, &state.z, &state.x, i, j)?;
                worst = worst.max((fast.z - z).amax()).max((fast.x - x).amax());
            }
        }
    }
    Ok(worst)
}

fn rk_vs_sap(seed: u64) -> Result<(f64, f64)> {
    let mut s = SeededStream::new(seed);
    let (mut step_gap, mut rate_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let sys = system(9, 4, &mut s)?;
        let identity = DenseMatrix::identity(4, 4);
        let x = Vector::from_fn(4, |_, _| s.standard_normal());
        for i in 0..9 {
            let mut sk = DenseMatrix::zeros(9, 1);
            sk[(i, 0)] = 1.0;
            let slow = sap_step(sys.a(), sys.b(), &identity, &sk, &x)?;
            step_gap = step_gap.max((rk_step(&sys, &x, i)? - slow).amax());
        }
        let ez = rk_expected_update(sys.a())?;
        rate_gap = rate_gap.max((sap_rate_from_ez(&ez, &identity)? - rk_rate(sys.a())?).abs());
    }
    Ok((step_gap, rate_gap))
}

fn block_structure_violations(seed: u64) -> Result<f64> {
    let mut s = SeededStream::new(seed);
    let a = gen_gaussian(6, 3, &mut s);
    let emb = build_embedded_system(&a, &Vector::zeros(6))?;
    let mut bad = 0usize;
    for eps in EPS_GRID {
        let b = ProjectionMetric::new(eps, 6, 3)?.to_dense();
        let zs = (0..6)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| {
                update_matrix_z(&emb.matrix, &b, &BlockSketch::new(i, j, 6, 3)?.to_dense())
            })
            .collect::<Result<Vec<_>>>()?;
        bad += block_structure_report(&zs, &b, 6)?
            .entries
            .iter()
            .filter(|e| !e.equivalence_holds)
            .count();
    }
    Ok(bad as f64)
}

/// Run every cross-check with streams derived from `seed`.
pub fn run_oracle_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    let (brute_gap, svd_gap) = closed_form_vs_brute(seed.wrapping_add(1))?;
    let (rk_step_gap, rk_rate_gap) = rk_vs_sap(seed.wrapping_add(5))?;
    Ok(vec![
        OracleCheck {
            name: "pseudo_solve_vs_normal_equations",
            value: least_squares(seed)?,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "w_eps_closed_form_vs_brute_force",
            value: brute_gap,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "w_eps_closed_form_vs_svd_assembly",
            value: svd_gap,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "lambda_min_plus_vs_eigensolver",
            value: lambda_vs_eigensolver(seed.wrapping_add(2))?,
            tolerance: 1e-9,
        },
        OracleCheck {
            name: "block_eigenvalues_vs_2x2_eigensolver",
            value: block_eigen_vs_2x2(seed.wrapping_add(3)),
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "saprek_step_vs_sap_step",
            value: saprek_vs_sap(seed.wrapping_add(4))?,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "rek_step_vs_rek_matrix_step",
            value: rek_vs_matrix_form(seed.wrapping_add(6))?,
            tolerance: 1e-12,
        },
        OracleCheck {
            name: "rk_step_vs_sap_step",
            value: rk_step_gap,
            tolerance: 1e-12,
        },
        OracleCheck {
            name: "rk_rate_vs_sap_rate_from_ez",
            value: rk_rate_gap,
            tolerance: 1e-10,
        },
        OracleCheck {
            name: "block_structure_violations",
            value: block_structure_violations(seed.wrapping_add(7))?,
            tolerance: 0.0,
        },
    ])
}

pub fn write_oracle_csv(path: &Path, checks: &[OracleCheck]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["check", "value", "tolerance", "pass"])?;
    for c in checks {
        w.write_record([
            c.name.to_string(),
            fmt_float(c.value),
            fmt_float(c.tolerance),
            c.pass().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
