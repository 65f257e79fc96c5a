//! RK, REK and SAP-REK(ε) updates in explicit closed form, and the seeded run loop.
//!
//! All REK-family updates use the freshly updated `z^{k+1}` inside the `x` update.

use std::fmt;

use crate::error::{check_eps, Error, Result};
use crate::linalg::{axpy, dot, svd, LeastSquaresReference, LinearSystem, SvdResult, Vector};
use crate::sampling::{
    system_col_probs, system_row_probs_eps, system_row_probs_rk, DiscreteDistribution, SeededStream,
};

/// Tolerance for the range conditions on user-supplied initial iterates.
const INITIAL_RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub z: Vector,
    pub k: usize,
}

impl SolverState {
    /// `x⁰ = 0`, `z⁰ = b`.
    pub fn initial(system: &LinearSystem) -> Self {
        Self {
            x: Vector::zeros(system.cols()),
            z: system.b().clone(),
            k: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.z.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk,
    Rek,
    SapRek { eps: f64 },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rk => write!(f, "rk"),
            Method::Rek => write!(f, "rek"),
            Method::SapRek { eps } => write!(f, "saprek_eps_{eps:e}"),
        }
    }
}

/// Which method to run. `eps` exists only for SAP-REK, so the pairing is enforced by [`Method`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
}

impl MethodConfig {
    pub fn rk() -> Self {
        Self { method: Method::Rk }
    }

    pub fn rek() -> Self {
        Self {
            method: Method::Rek,
        }
    }

    pub fn saprek(eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            method: Method::SapRek { eps },
        })
    }

    pub fn eps(&self) -> Option<f64> {
        match self.method {
            Method::SapRek { eps } => Some(eps),
            _ => None,
        }
    }

    /// Weight of `‖x − x*‖²` in the combined error; zero for RK/REK.
    pub fn combined_weight(&self) -> f64 {
        self.eps().unwrap_or(0.0)
    }
}

/// Per-iteration error samples of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub ks: Vec<usize>,
    /// `‖x^k − x*‖²`
    pub err_x: Vec<f64>,
    /// `‖z^k − z*‖²`
    pub err_z: Vec<f64>,
    /// `‖z^k − z*‖² + ε‖x^k − x*‖²` (ε = 0 for RK/REK)
    pub err_combined: Vec<f64>,
    pub seed: u64,
    pub config: MethodConfig,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }
}

fn check_row(system: &LinearSystem, i: usize) -> Result<f64> {
    if i >= system.rows() {
        return Err(Error::DimensionMismatch {
            expected: system.rows(),
            actual: i,
        });
    }
    let r = system.row_norm_sq(i);
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::ZeroRow(i))
    }
}

fn check_col(system: &LinearSystem, j: usize) -> Result<f64> {
    if j >= system.cols() {
        return Err(Error::DimensionMismatch {
            expected: system.cols(),
            actual: j,
        });
    }
    let c = system.col_norm_sq(j);
    if c > 0.0 {
        Ok(c)
    } else {
        Err(Error::ZeroColumn(j))
    }
}

fn check_state(system: &LinearSystem, state: &SolverState) -> Result<()> {
    crate::linalg::check_dim(system.cols(), state.x.len())?;
    crate::linalg::check_dim(system.rows(), state.z.len())
}

/// Project `x` onto the hyperplane `{y : A_{i:} y = b_i}`.
pub fn rk_step(system: &LinearSystem, x: &Vector, i: usize) -> Result<Vector> {
    crate::linalg::check_dim(system.cols(), x.len())?;
    let mut out = x.clone();
    rk_step_in_place(system, &mut out, i)?;
    Ok(out)
}

pub fn rk_step_in_place(system: &LinearSystem, x: &mut Vector, i: usize) -> Result<()> {
    let row_sq = check_row(system, i)?;
    let row = system.row(i);
    let resid = dot(row, x.as_slice()) - system.b()[i];
    axpy(-resid / row_sq, row, x.as_mut_slice());
    Ok(())
}

/// One REK iteration: RK on `Aᵀz = 0` with column `j`, then RK on `Ax = b − z^{k+1}` with row `i`.
pub fn rek_step(
    system: &LinearSystem,
    state: &SolverState,
    i: usize,
    j: usize,
) -> Result<SolverState> {
    check_state(system, state)?;
    let mut out = state.clone();
    rek_step_in_place(system, &mut out, i, j)?;
    Ok(out)
}

pub fn rek_step_in_place(
    system: &LinearSystem,
    state: &mut SolverState,
    i: usize,
    j: usize,
) -> Result<()> {
    let col_sq = check_col(system, j)?;
    let row_sq = check_row(system, i)?;
    let col = system.col(j);
    let z = state.z.as_mut_slice();
    let coef = dot(col, z) / col_sq;
    axpy(-coef, col, z);

    let row = system.row(i);
    let x = state.x.as_mut_slice();
    let resid = dot(row, x) - system.b()[i] + z[i];
    axpy(-resid / row_sq, row, x);
    state.k += 1;
    Ok(())
}

/// Determinant of the sketched 2×2 Gram matrix,
/// `‖A_{:j}‖²(1 + ‖A_{i:}‖²/ε) − A_ij²`, evaluated without cancellation.
pub fn saprek_determinant(system: &LinearSystem, i: usize, j: usize, eps: f64) -> f64 {
    let col_sq = system.col_norm_sq(j);
    let a_ij = system.col(j)[i];
    let rest = (col_sq - a_ij * a_ij).max(0.0);
    rest + col_sq * system.row_norm_sq(i) / eps
}

/// One SAP-REK(ε) iteration with sketch indices `(i, j)`.
pub fn saprek_step(
    system: &LinearSystem,
    state: &SolverState,
    i: usize,
    j: usize,
    eps: f64,
) -> Result<SolverState> {
    check_state(system, state)?;
    let mut out = state.clone();
    saprek_step_in_place(system, &mut out, i, j, eps)?;
    Ok(out)
}

pub fn saprek_step_in_place(
    system: &LinearSystem,
    state: &mut SolverState,
    i: usize,
    j: usize,
    eps: f64,
) -> Result<()> {
    check_eps(eps)?;
    let col_sq = check_col(system, j)?;
    if i >= system.rows() {
        return Err(Error::DimensionMismatch {
            expected: system.rows(),
            actual: i,
        });
    }
    let row_sq = system.row_norm_sq(i);
    let col = system.col(j);
    let row = system.row(i);
    let a_ij = col[i];

    // Sketched residuals: r1 = A_{:j}ᵀ z, r2 = z_i + A_{i:} x − b_i.
    let r1 = dot(col, state.z.as_slice());
    let r2 = state.z[i] + dot(row, state.x.as_slice()) - system.b()[i];

    // G = [[c, a], [a, 1 + ρ/ε]] with c = ‖A_{:j}‖², ρ = ‖A_{i:}‖². Both rows of G⁻¹
    // are scaled by ε so the expressions stay finite as ε → 0.
    let scaled_det = eps * (col_sq - a_ij * a_ij).max(0.0) + col_sq * row_sq;
    let alpha = ((eps + row_sq) * r1 - eps * a_ij * r2) / scaled_det;
    let beta_over_eps = (col_sq * r2 - a_ij * r1) / scaled_det;
    let beta = eps * beta_over_eps;

    let z = state.z.as_mut_slice();
    axpy(-alpha, col, z);
    z[i] -= beta;
    axpy(-beta_over_eps, row, state.x.as_mut_slice());
    state.k += 1;
    Ok(())
}

/// Options for [`run_solver_with`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub iterations: usize,
    pub record_every: usize,
    /// Defaults to `x⁰ = 0`, `z⁰ = b`.
    pub initial: Option<SolverState>,
}

impl RunOptions {
    pub fn new(iterations: usize, record_every: usize) -> Self {
        Self {
            iterations,
            record_every,
            initial: None,
        }
    }
}

/// Run with default initial iterates, computing the reference solution via SVD.
pub fn run_solver(
    system: &LinearSystem,
    config: MethodConfig,
    iterations: usize,
    stream: &mut SeededStream,
    record_every: usize,
) -> Result<TrialRecord> {
    let factor = svd(system.a())?;
    let reference = LeastSquaresReference::new(&factor, system.b())?;
    run_solver_with(
        system,
        &factor,
        &reference,
        config,
        &RunOptions::new(iterations, record_every),
        stream,
    )
}

struct Samplers {
    rows: DiscreteDistribution,
    cols: Option<DiscreteDistribution>,
}

fn samplers(system: &LinearSystem, config: MethodConfig) -> Result<Samplers> {
    Ok(match config.method {
        Method::Rk => Samplers {
            rows: system_row_probs_rk(system)?,
            cols: None,
        },
        Method::Rek => Samplers {
            rows: system_row_probs_rk(system)?,
            cols: Some(system_col_probs(system)?),
        },
        Method::SapRek { eps } => Samplers {
            rows: system_row_probs_eps(system, eps)?,
            cols: Some(system_col_probs(system)?),
        },
    })
}

fn check_initial(system: &LinearSystem, factor: &SvdResult, state: &SolverState) -> Result<()> {
    check_state(system, state)?;
    let x_off = (&state.x - factor.project_row_space(&state.x)?).norm();
    if x_off > INITIAL_RANGE_TOL * (1.0 + state.x.norm()) {
        return Err(Error::PreconditionViolated(format!(
            "x0 is not in range(A^T): distance {x_off:e}"
        )));
    }
    let shift = &state.z - system.b();
    let z_off = (&shift - factor.project_col_space(&shift)?).norm();
    if z_off > INITIAL_RANGE_TOL * (1.0 + shift.norm()) {
        return Err(Error::PreconditionViolated(format!(
            "z0 is not in b + range(A): distance {z_off:e}"
        )));
    }
    Ok(())
}

/// Seeded run loop recording errors at `k = 0`, every `record_every` steps, and the last step.
pub fn run_solver_with(
    system: &LinearSystem,
    factor: &SvdResult,
    reference: &LeastSquaresReference,
    config: MethodConfig,
    options: &RunOptions,
    stream: &mut SeededStream,
) -> Result<TrialRecord> {
    if options.record_every == 0 {
        return Err(Error::InvalidConfig(
            "record_every must be at least 1".into(),
        ));
    }
    let mut state = match &options.initial {
        Some(s) => {
            check_initial(system, factor, s)?;
            s.clone()
        }
        None => SolverState::initial(system),
    };
    let sampler = samplers(system, config)?;
    let weight = config.combined_weight();
    let mut record = TrialRecord {
        ks: Vec::new(),
        err_x: Vec::new(),
        err_z: Vec::new(),
        err_combined: Vec::new(),
        seed: stream.seed(),
        config,
    };
    let push = |state: &SolverState, record: &mut TrialRecord| {
        let ex = (&state.x - &reference.x_star).norm_squared();
        let ez = (&state.z - &reference.z_star).norm_squared();
        record.ks.push(state.k);
        record.err_x.push(ex);
        record.err_z.push(ez);
        record.err_combined.push(ez + weight * ex);
    };
    push(&state, &mut record);

    for step in 1..=options.iterations {
        let i = sampler.rows.sample(stream);
        match config.method {
            Method::Rk => {
                rk_step_in_place(system, &mut state.x, i)?;
                state.k += 1;
            }
            Method::Rek => {
                let j = sampler
                    .cols
                    .as_ref()
                    .expect("column sampler")
                    .sample(stream);
                rek_step_in_place(system, &mut state, i, j)?;
            }
            Method::SapRek { eps } => {
                let j = sampler
                    .cols
                    .as_ref()
                    .expect("column sampler")
                    .sample(stream);
                saprek_step_in_place(system, &mut state, i, j, eps)?;
            }
        }
        if step % options.record_every == 0 || step == options.iterations {
            if !state.is_finite() {
                return Err(Error::NonFinite("solver state"));
            }
            push(&state, &mut record);
        }
    }
    Ok(record)
}
