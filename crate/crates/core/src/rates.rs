//! Convergence-rate formulas for RK, REK and SAP-REK(ε), each with a brute-force counterpart.
//!
//! SAP-REK(ε) on `A` is the same iteration as SAP-REK(ε/‖A‖_F²) on `A/‖A‖_F` (with `x`
//! rescaled by ‖A‖_F), so the ε-dependent quantities below normalise `A` to unit
//! Frobenius norm and rescale ε accordingly. The returned values therefore describe
//! the method run on the matrix the caller passed in.

use rayon::prelude::*;

use crate::error::{check_eps, Error, Result};
use crate::linalg::{
    frobenius_norm, lambda_min_positive, lambda_min_positive_of, svd, symmetric_eigenvalues,
    DenseMatrix, LeastSquaresReference, LinearSystem, SvdResult, Vector,
};
use crate::sap::spd_inverse_sqrt;

/// `1 − σ²_min(A)/‖A‖_F²`.
pub fn rk_rate(a: &DenseMatrix) -> Result<f64> {
    let f = svd(a)?;
    Ok(rk_rate_from(&f, a.norm_squared()))
}

fn rk_rate_from(factor: &SvdResult, frob_sq: f64) -> f64 {
    let s = factor.sigma_min();
    (1.0 - s * s / frob_sq).max(0.0)
}

/// `max_i |A_{i:}x* − b_i| / ‖A_{i:}‖²` over nonzero rows.
///
/// The numerator is deliberately not squared; some statements of this horizon square it.
pub fn rk_horizon(a: &DenseMatrix, b: &Vector) -> Result<f64> {
    let x_star = svd(a)?.pseudo_solve(b)?;
    let resid = a * &x_star - b;
    Ok(a.row_iter()
        .zip(resid.iter())
        .filter_map(|(row, r)| {
            let norm_sq = row.norm_squared();
            (norm_sq > 0.0).then(|| r.abs() / norm_sq)
        })
        .fold(0.0, f64::max))
}

/// The REK mean-squared-error bound
/// `ρ_k ‖x⁰ − x*‖² + ρ_k(1 − ρ_k)/σ_min · ‖z⁰ − (I − AA†)b‖²`, `ρ_k = (1 − σ²_min/‖A‖_F²)^k`.
#[derive(Debug, Clone)]
pub struct RekBound {
    pub rate: f64,
    pub sigma_min: f64,
    pub initial_x_error: f64,
    pub initial_z_error: f64,
}

const RANGE_TOL: f64 = 1e-9;

impl RekBound {
    pub fn new(system: &LinearSystem, x0: &Vector, z0: &Vector) -> Result<Self> {
        let factor = svd(system.a())?;
        let x_off = (x0 - factor.project_row_space(x0)?).norm();
        if x_off > RANGE_TOL * (1.0 + x0.norm()) {
            return Err(Error::PreconditionViolated(format!(
                "x0 is not in range(A^T): distance {x_off:e}"
            )));
        }
        let shift = z0 - system.b();
        let z_off = (&shift - factor.project_col_space(&shift)?).norm();
        if z_off > RANGE_TOL * (1.0 + shift.norm()) {
            return Err(Error::PreconditionViolated(format!(
                "z0 is not in b + range(A): distance {z_off:e}"
            )));
        }
        let reference = LeastSquaresReference::new(&factor, system.b())?;
        Ok(Self {
            rate: rk_rate_from(&factor, system.frobenius_sq()),
            sigma_min: factor.sigma_min(),
            initial_x_error: (x0 - &reference.x_star).norm_squared(),
            initial_z_error: (z0 - &reference.z_star).norm_squared(),
        })
    }

    pub fn at(&self, k: usize) -> f64 {
        let rho = self.rate.powf(k as f64);
        rho * self.initial_x_error + rho * (1.0 - rho) / self.sigma_min * self.initial_z_error
    }
}

pub fn rek_bound(system: &LinearSystem, x0: &Vector, z0: &Vector, k: usize) -> Result<f64> {
    Ok(RekBound::new(system, x0, z0)?.at(k))
}

/// How the per-sketch denominator `‖A_{:j}‖²(1 + ‖A_{i:}‖²/ε) − A_ij²` is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMode {
    /// Keep the `A_ij²` term: the true expected update matrix.
    ExactZ,
    /// Drop the `A_ij²` term, giving `W′_ε`.
    DroppedTerm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    /// SAP-REK(ε) row/column distribution.
    SapRek { eps: f64, mode: ExpectationMode },
    /// The ε → 0 limit matrix under REK probabilities.
    RekLimit,
    /// Closed-form `W′_ε` rather than an average.
    ClosedForm { eps: f64 },
}

/// `E[B^{-1/2} Z B^{-1/2}]` for the stated distribution.
#[derive(Debug, Clone)]
pub struct ExpectedUpdateMatrix {
    pub matrix: DenseMatrix,
    pub averaging: Averaging,
}

impl ExpectedUpdateMatrix {
    pub fn lambda_min_plus(&self) -> Option<f64> {
        lambda_min_positive(&self.matrix)
    }

    /// `1 − λ⁺_min`.
    pub fn rate(&self) -> f64 {
        1.0 - self.lambda_min_plus().unwrap_or(0.0)
    }
}

/// `B_ε^{-1/2} Z_ε B_ε^{-1/2}` for the sketch `(i, j)`, assembled from the explicit block formula.
pub fn sketch_update_matrix(
    a: &DenseMatrix,
    i: usize,
    j: usize,
    eps: f64,
    mode: ExpectationMode,
) -> Result<DenseMatrix> {
    check_eps(eps)?;
    let (m, n) = a.shape();
    if i >= m || j >= n {
        return Err(Error::DimensionMismatch {
            expected: if i >= m { m } else { n },
            actual: if i >= m { i } else { j },
        });
    }
    let col_sq = a.column(j).norm_squared();
    if col_sq == 0.0 {
        return Err(Error::ZeroColumn(j));
    }
    let mut out = DenseMatrix::zeros(m + n, m + n);
    add_sketch_term(a, i, j, eps, mode, 1.0, &mut out);
    Ok(out)
}

fn add_sketch_term(
    a: &DenseMatrix,
    i: usize,
    j: usize,
    eps: f64,
    mode: ExpectationMode,
    weight: f64,
    out: &mut DenseMatrix,
) {
    let (m, n) = a.shape();
    let col_sq = a.column(j).norm_squared();
    let row_sq = a.row(i).norm_squared();
    let a_ij = a[(i, j)];
    let d = 1.0 + row_sq / eps;
    let denom = match mode {
        ExpectationMode::ExactZ => (col_sq - a_ij * a_ij).max(0.0) + col_sq * row_sq / eps,
        ExpectationMode::DroppedTerm => col_sq * d,
    };
    // u1 = (A_{:j}; 0), u2 = (e_i; A_{i:}ᵀ/√ε)
    let mut u1 = Vector::zeros(m + n);
    u1.rows_mut(0, m).copy_from(&a.column(j));
    let mut u2 = Vector::zeros(m + n);
    u2[i] = 1.0;
    u2.rows_mut(m, n)
        .copy_from(&(a.row(i).transpose() / eps.sqrt()));
    let s = weight / denom;
    out.ger(s * d, &u1, &u1, 1.0);
    out.ger(-s * a_ij, &u1, &u2, 1.0);
    out.ger(-s * a_ij, &u2, &u1, 1.0);
    out.ger(s * col_sq, &u2, &u2, 1.0);
}

/// Brute-force expectation over all `m·n` sketches under the SAP-REK(ε) distribution.
///
/// Summation order is fixed (row blocks in index order) so the result does not
/// depend on the thread count.
pub fn expected_update_matrix(
    a: &DenseMatrix,
    eps: f64,
    mode: ExpectationMode,
) -> Result<ExpectedUpdateMatrix> {
    check_eps(eps)?;
    let (m, n) = a.shape();
    let frob_sq = a.norm_squared();
    if frob_sq == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let row_sq: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let col_sq: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
    let row_denom = m as f64 * eps + frob_sq;

    const ROW_BLOCK: usize = 8;
    let blocks: Vec<(usize, usize)> = (0..m)
        .step_by(ROW_BLOCK)
        .map(|start| (start, (start + ROW_BLOCK).min(m)))
        .collect();
    let partials: Vec<DenseMatrix> = blocks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = DenseMatrix::zeros(m + n, m + n);
            for (i, &r) in row_sq.iter().enumerate().take(hi).skip(lo) {
                let p_row = (eps + r) / row_denom;
                for (j, &c) in col_sq.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    add_sketch_term(a, i, j, eps, mode, p_row * c / frob_sq, &mut acc);
                }
            }
            acc
        })
        .collect();
    let matrix = partials
        .into_iter()
        .fold(DenseMatrix::zeros(m + n, m + n), |acc, p| acc + p);
    Ok(ExpectedUpdateMatrix {
        matrix,
        averaging: Averaging::SapRek { eps, mode },
    })
}

struct Normalized {
    a: DenseMatrix,
    eps: f64,
}

fn normalize(a: &DenseMatrix, eps: f64) -> Result<Normalized> {
    check_eps(eps)?;
    let frob = frobenius_norm(a);
    if frob == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(Normalized {
        a: a / frob,
        eps: eps / (frob * frob),
    })
}

/// `W′_ε` from its block formula on the normalised matrix:
///
/// ```text
/// 1/(m + 1/ε) · [ (m − 2 + 1/ε) AAᵀ + I        (1/√ε) A(I − AᵀA) ]
///               [ (1/√ε)(I − AᵀA)Aᵀ             (1/ε) AᵀA        ]
/// ```
pub fn w_eps_closed_form(a: &DenseMatrix, eps: f64) -> Result<ExpectedUpdateMatrix> {
    let Normalized { a, eps: e } = normalize(a, eps)?;
    let (m, n) = a.shape();
    let d = m as f64 + 1.0 / e;
    let aat = &a * a.transpose();
    let ata = a.transpose() * &a;
    let mut w = DenseMatrix::zeros(m + n, m + n);
    let top_left = (aat * (m as f64 - 2.0 + 1.0 / e) + DenseMatrix::identity(m, m)) / d;
    let top_right = (&a - &a * &ata) / (e.sqrt() * d);
    let bottom_right = ata / (e * d);
    w.view_mut((0, 0), (m, m)).copy_from(&top_left);
    w.view_mut((0, m), (m, n)).copy_from(&top_right);
    w.view_mut((m, 0), (n, m)).copy_from(&top_right.transpose());
    w.view_mut((m, m), (n, n)).copy_from(&bottom_right);
    Ok(ExpectedUpdateMatrix {
        matrix: w,
        averaging: Averaging::ClosedForm { eps },
    })
}

/// `W′_ε` assembled from the SVD of the normalised matrix: 2×2 blocks per singular value
/// and `1/(m + 1/ε)` on the orthogonal complement of range(A).
pub fn w_eps_svd_assembly(a: &DenseMatrix, eps: f64) -> Result<ExpectedUpdateMatrix> {
    let Normalized { a, eps: e } = normalize(a, eps)?;
    let (m, n) = a.shape();
    let f = svd(&a)?;
    let d = m as f64 + 1.0 / e;
    let s = &f.singular_values;
    let diag = |g: &dyn Fn(f64) -> f64| DenseMatrix::from_diagonal(&s.map(g));
    let complement = DenseMatrix::identity(m, m) - &f.u * f.u.transpose();
    let top_left = (&f.u * diag(&|x| (m as f64 - 2.0 + 1.0 / e) * x * x + 1.0) * f.u.transpose()
        + complement)
        / d;
    let top_right = &f.u * diag(&|x| (x - x * x * x) / e.sqrt()) * f.v.transpose() / d;
    let bottom_right = &f.v * diag(&|x| x * x / e) * f.v.transpose() / d;
    let mut w = DenseMatrix::zeros(m + n, m + n);
    w.view_mut((0, 0), (m, m)).copy_from(&top_left);
    w.view_mut((0, m), (m, n)).copy_from(&top_right);
    w.view_mut((m, 0), (n, m)).copy_from(&top_right.transpose());
    w.view_mut((m, m), (n, n)).copy_from(&bottom_right);
    Ok(ExpectedUpdateMatrix {
        matrix: w,
        averaging: Averaging::ClosedForm { eps },
    })
}

/// Eigenvalues `(λ₋, λ₊)` of the block
/// `1/(m + 1/ε) · [[(m − 2 + 1/ε)σ² + 1, (σ − σ³)/√ε], [(σ − σ³)/√ε, σ²/ε]]`
/// for a singular value σ of a unit-Frobenius matrix.
pub fn block_eigenvalues(sigma: f64, m: usize, eps: f64) -> (f64, f64) {
    let m = m as f64;
    let inv = 1.0 / eps;
    let d = m + inv;
    let s2 = sigma * sigma;
    let trace = (m - 2.0 + 2.0 * inv) * s2 + 1.0;
    let det = inv * s2 * s2 * (d - s2);
    let disc = (trace * trace / 4.0 - det).max(0.0);
    let upper = trace / 2.0 + disc.sqrt();
    // λ₋ = det/λ₊ avoids the cancellation in trace/2 − √disc.
    let lower = if upper > 0.0 { det / upper } else { 0.0 };
    (lower / d, upper / d)
}

/// `λ⁺_min(W′_ε) = min(1/(m + 1/ε), λ₋(σ_min))`, evaluated at the smallest singular value only.
pub fn lambda_min_plus_w_eps(a: &DenseMatrix, eps: f64) -> Result<f64> {
    let Normalized { a, eps: e } = normalize(a, eps)?;
    let m = a.nrows();
    let sigma = svd(&a)?.sigma_min();
    Ok((1.0 / (m as f64 + 1.0 / e)).min(block_eigenvalues(sigma, m, e).0))
}

/// λ⁺_min of the assembled matrix by dense symmetric eigensolve.
pub fn lambda_min_plus_oracle(a: &DenseMatrix, eps: f64, mode: ExpectationMode) -> Result<f64> {
    let w = match mode {
        ExpectationMode::DroppedTerm => w_eps_closed_form(a, eps)?,
        ExpectationMode::ExactZ => expected_update_matrix(a, eps, ExpectationMode::ExactZ)?,
    };
    w.lambda_min_plus().ok_or(Error::ZeroMatrix)
}

/// `1 − λ⁺_min(B^{-1/2} E[Z] B^{-1/2})`, clamped to `[0, 1]`.
pub fn sap_rate_from_ez(ez: &DenseMatrix, b: &DenseMatrix) -> Result<f64> {
    let half = spd_inverse_sqrt(b)?;
    let w = &half * ez * &half;
    Ok((1.0 - lambda_min_positive(&w).unwrap_or(0.0)).clamp(0.0, 1.0))
}

/// `E[Z]` of SAP with `B = I` and single-row sketches under RK probabilities: `AᵀA/‖A‖_F²`.
pub fn rk_expected_update(a: &DenseMatrix) -> Result<DenseMatrix> {
    let frob_sq = a.norm_squared();
    if frob_sq == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(a.transpose() * a / frob_sq)
}

/// The ε → 0 limit of `B^{-1/2} Z B^{-1/2}` averaged under REK probabilities:
/// `blockdiag(AAᵀ, AᵀA)/‖A‖_F²`.
pub fn rek_limit_matrix(a: &DenseMatrix) -> Result<ExpectedUpdateMatrix> {
    let (m, n) = a.shape();
    let frob_sq = a.norm_squared();
    if frob_sq == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut w = DenseMatrix::zeros(m + n, m + n);
    w.view_mut((0, 0), (m, m))
        .copy_from(&(a * a.transpose() / frob_sq));
    w.view_mut((m, m), (n, n))
        .copy_from(&(a.transpose() * a / frob_sq));
    Ok(ExpectedUpdateMatrix {
        matrix: w,
        averaging: Averaging::RekLimit,
    })
}

/// All rate quantities for one `(A, ε)`.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub rk_rate: f64,
    /// `1 − λ⁺_min(W′_ε)` from the σ_min expression.
    pub sap_rate: f64,
    /// σ_min-only expression.
    pub lambda_min_plus_w_eps: f64,
    /// Dense eigensolve of the assembled `W′_ε`.
    pub lambda_min_plus_oracle: f64,
    /// `(σ_i, λ₋, λ₊)` for each singular value of the normalised matrix.
    pub block_eigen_pairs: Vec<(f64, f64, f64)>,
    pub eps: f64,
    /// ε after normalising A to unit Frobenius norm.
    pub eps_normalized: f64,
    pub normalized: bool,
}

/// Relative tolerance used to flag disagreement between the two λ⁺_min routes.
pub const LAMBDA_AGREEMENT_TOL: f64 = 1e-9;

impl RateReport {
    pub fn formula_matches_oracle(&self) -> bool {
        (self.lambda_min_plus_w_eps - self.lambda_min_plus_oracle).abs()
            <= LAMBDA_AGREEMENT_TOL * self.lambda_min_plus_oracle.max(1e-300).max(1.0)
    }
}

pub fn rate_report(a: &DenseMatrix, eps: f64) -> Result<RateReport> {
    let norm = normalize(a, eps)?;
    let m = a.nrows();
    let f = svd(&norm.a)?;
    let lambda = lambda_min_plus_w_eps(a, eps)?;
    let eig = symmetric_eigenvalues(&w_eps_closed_form(a, eps)?.matrix);
    let oracle = lambda_min_positive_of(&eig).ok_or(Error::ZeroMatrix)?;
    let block_eigen_pairs = f
        .singular_values
        .iter()
        .map(|&s| {
            let (lo, hi) = block_eigenvalues(s, m, norm.eps);
            (s, lo, hi)
        })
        .collect();
    Ok(RateReport {
        rk_rate: rk_rate(a)?,
        sap_rate: 1.0 - lambda,
        lambda_min_plus_w_eps: lambda,
        lambda_min_plus_oracle: oracle,
        block_eigen_pairs,
        eps,
        eps_normalized: norm.eps,
        normalized: true,
    })
}
