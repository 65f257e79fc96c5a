//! Dense linear-algebra primitives shared by the solvers and the rate theory.
//!
//! Reference solutions (`x* = A†b`, `z* = (I − AA†)b`) are always obtained from a
//! truncated SVD, never iteratively.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Thin SVD `A = U·diag(σ)·Vᵀ` restricted to the numerically nonzero singular values.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m×r, orthonormal columns.
    pub u: DenseMatrix,
    /// r values, strictly positive, non-increasing.
    pub singular_values: Vector,
    /// n×r, orthonormal columns.
    pub v: DenseMatrix,
    pub rank: usize,
}

impl SvdResult {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values[self.rank - 1]
    }

    /// Minimum-norm least-squares solution `V Σ⁻¹ Uᵀ b`.
    pub fn pseudo_solve(&self, b: &Vector) -> Result<Vector> {
        check_dim(self.u.nrows(), b.len())?;
        let mut coeffs = self.u.tr_mul(b);
        for (c, s) in coeffs.iter_mut().zip(self.singular_values.iter()) {
            *c /= s;
        }
        Ok(&self.v * coeffs)
    }

    /// Component of `b` orthogonal to range(A), i.e. `(I − UUᵀ) b`.
    pub fn project_null_transpose(&self, b: &Vector) -> Result<Vector> {
        check_dim(self.u.nrows(), b.len())?;
        Ok(b - &self.u * self.u.tr_mul(b))
    }

    /// Projection of `x` onto the row space of A, `VVᵀx`.
    pub fn project_row_space(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.v.nrows(), x.len())?;
        Ok(&self.v * self.v.tr_mul(x))
    }

    /// Projection of `y` onto the column space of A, `UUᵀy`.
    pub fn project_col_space(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.u.nrows(), y.len())?;
        Ok(&self.u * self.u.tr_mul(y))
    }

    /// `A† = V Σ⁻¹ Uᵀ`.
    pub fn pseudo_inverse(&self) -> DenseMatrix {
        let mut v_scaled = self.v.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            v_scaled.column_mut(k).scale_mut(1.0 / s);
        }
        v_scaled * self.u.transpose()
    }
}

/// Truncated SVD. Singular values `σ ≤ max(m, n)·ε_mach·σ_max` are dropped.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    check_finite_matrix(a, "matrix")?;
    if a.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let (m, n) = a.shape();
    let raw = a.clone().svd(true, true);
    let u_full = raw.u.expect("requested U");
    let vt_full = raw.v_t.expect("requested Vᵀ");

    let mut order: Vec<usize> = (0..raw.singular_values.len()).collect();
    order.sort_by(|&p, &q| raw.singular_values[q].total_cmp(&raw.singular_values[p]));
    let sigma_max = raw.singular_values[order[0]];
    let cutoff = m.max(n) as f64 * f64::EPSILON * sigma_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| raw.singular_values[k] > cutoff)
        .collect();
    let rank = kept.len();

    let mut u = DenseMatrix::zeros(m, rank);
    let mut v = DenseMatrix::zeros(n, rank);
    let mut s = Vector::zeros(rank);
    for (dst, &src) in kept.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        v.set_column(dst, &vt_full.row(src).transpose());
        s[dst] = raw.singular_values[src];
    }
    Ok(SvdResult {
        u,
        singular_values: s,
        v,
        rank,
    })
}

pub fn pseudo_solve(a: &DenseMatrix, b: &Vector) -> Result<Vector> {
    check_dim(a.nrows(), b.len())?;
    svd(a)?.pseudo_solve(b)
}

/// `(I − AA†) b`, the projection of `b` onto ker(Aᵀ).
pub fn project_null_transpose(a: &DenseMatrix, b: &Vector) -> Result<Vector> {
    check_dim(a.nrows(), b.len())?;
    match svd(a) {
        Ok(f) => f.project_null_transpose(b),
        Err(Error::ZeroMatrix) => Ok(b.clone()),
        Err(e) => Err(e),
    }
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.norm()
}

/// Smallest nonzero singular value.
pub fn sigma_min_positive(a: &DenseMatrix) -> Result<f64> {
    Ok(svd(a)?.sigma_min())
}

/// Moore–Penrose pseudoinverse; the zero matrix maps to the zero matrix.
pub fn pseudo_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    match svd(a) {
        Ok(f) => Ok(f.pseudo_inverse()),
        Err(Error::ZeroMatrix) => Ok(DenseMatrix::zeros(a.ncols(), a.nrows())),
        Err(e) => Err(e),
    }
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(w: &DenseMatrix) -> Vec<f64> {
    let sym = (w + w.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Relative cutoff below which an eigenvalue of a PSD matrix counts as zero.
pub const EIGEN_ZERO_THRESHOLD: f64 = 1e-10;

/// Smallest eigenvalue above `EIGEN_ZERO_THRESHOLD · λ_max`, or `None` for the zero matrix.
pub fn lambda_min_positive(w: &DenseMatrix) -> Option<f64> {
    lambda_min_positive_of(&symmetric_eigenvalues(w))
}

pub fn lambda_min_positive_of(eigenvalues: &[f64]) -> Option<f64> {
    let lambda_max = eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    if lambda_max <= 0.0 {
        return None;
    }
    let cutoff = EIGEN_ZERO_THRESHOLD * lambda_max;
    eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > cutoff)
        .reduce(f64::min)
}

/// A validated problem instance `Ax = b` with cached norms and a row-contiguous copy of A.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: DenseMatrix,
    /// Aᵀ, so that row `i` of A is the contiguous column `i` here.
    at: DenseMatrix,
    b: Vector,
    row_norms_sq: Vec<f64>,
    col_norms_sq: Vec<f64>,
    frobenius_sq: f64,
}

impl LinearSystem {
    pub fn new(a: DenseMatrix, b: Vector) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        check_finite_matrix(&a, "matrix")?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidConfig(
                "matrix must have at least one row and column".into(),
            ));
        }
        let at = a.transpose();
        let row_norms_sq: Vec<f64> = at.column_iter().map(|r| r.norm_squared()).collect();
        let col_norms_sq: Vec<f64> = a.column_iter().map(|c| c.norm_squared()).collect();
        let frobenius_sq = col_norms_sq.iter().sum();
        Ok(Self {
            a,
            at,
            b,
            row_norms_sq,
            col_norms_sq,
            frobenius_sq,
        })
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.at.as_slice()[i * n..(i + 1) * n]
    }

    pub fn col(&self, j: usize) -> &[f64] {
        let m = self.rows();
        &self.a.as_slice()[j * m..(j + 1) * m]
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn col_norm_sq(&self, j: usize) -> f64 {
        self.col_norms_sq[j]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    pub fn col_norms_sq(&self) -> &[f64] {
        &self.col_norms_sq
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_sq
    }

    /// Replace the right-hand side, keeping A and its cached norms.
    pub fn with_rhs(&self, b: Vector) -> Result<Self> {
        check_dim(self.rows(), b.len())?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        Ok(Self { b, ..self.clone() })
    }
}

/// Exact least-squares quantities for one right-hand side.
#[derive(Debug, Clone)]
pub struct LeastSquaresReference {
    pub x_star: Vector,
    pub z_star: Vector,
}

impl LeastSquaresReference {
    pub fn new(factor: &SvdResult, b: &Vector) -> Result<Self> {
        Ok(Self {
            x_star: factor.pseudo_solve(b)?,
            z_star: factor.project_null_transpose(b)?,
        })
    }

    pub fn for_system(system: &LinearSystem) -> Result<Self> {
        Self::new(&svd(system.a())?, system.b())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub(crate) fn check_finite_matrix(a: &DenseMatrix, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
