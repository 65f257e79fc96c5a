//! Generic sketch-and-project machinery on the saddle-point embedding
//!
//! ```text
//!     M = [ Aᵀ  0 ]     y = [ z ]     c = [ 0 ]
//!         [ I   A ]         [ x ]         [ b ]
//! ```
//!
//! Everything here works on dense matrices and is meant as a reference for the
//! closed-form updates in [`crate::solvers`], not as a fast path.

use nalgebra::SymmetricEigen;

use crate::error::{check_eps, Error, Result};
use crate::linalg::{check_dim, pseudo_inverse, DenseMatrix, LinearSystem, Vector};

/// `M (z; x) = (0; b)`, with `M` of shape `(n+m) × (m+n)`.
#[derive(Debug, Clone)]
pub struct EmbeddedSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vector,
    /// rows of A (length of z)
    pub m: usize,
    /// columns of A (length of x)
    pub n: usize,
}

pub fn build_embedded_system(a: &DenseMatrix, b: &Vector) -> Result<EmbeddedSystem> {
    let (m, n) = a.shape();
    check_dim(m, b.len())?;
    let mut matrix = DenseMatrix::zeros(n + m, m + n);
    matrix.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    matrix.view_mut((n, 0), (m, m)).fill_with_identity();
    matrix.view_mut((n, m), (m, n)).copy_from(a);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from(b);
    Ok(EmbeddedSystem { matrix, rhs, m, n })
}

/// `S = blockdiag(I_{:j}, I_{:i})`, stored as the index pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSketch {
    pub row: usize,
    pub col: usize,
    pub m: usize,
    pub n: usize,
}

impl BlockSketch {
    pub fn new(row: usize, col: usize, m: usize, n: usize) -> Result<Self> {
        check_index(row, m)?;
        check_index(col, n)?;
        Ok(Self { row, col, m, n })
    }

    /// `(n+m) × 2`: column 0 picks equation `j` of `Aᵀz = 0`, column 1 picks equation `i` of `z + Ax = b`.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.n + self.m, 2);
        s[(self.col, 0)] = 1.0;
        s[(self.n + self.row, 1)] = 1.0;
        s
    }
}

fn check_index(idx: usize, len: usize) -> Result<()> {
    if idx < len {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: len,
            actual: idx,
        })
    }
}

/// `B_ε = blockdiag(I_m, ε I_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMetric {
    pub eps: f64,
    pub m: usize,
    pub n: usize,
}

impl ProjectionMetric {
    pub fn new(eps: f64, m: usize, n: usize) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self { eps, m, n })
    }

    pub fn diagonal(&self) -> Vector {
        Vector::from_fn(
            self.m + self.n,
            |k, _| if k < self.m { 1.0 } else { self.eps },
        )
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_diagonal(&self.diagonal())
    }

    pub fn inverse_sqrt_dense(&self) -> DenseMatrix {
        DenseMatrix::from_diagonal(&self.diagonal().map(|d| 1.0 / d.sqrt()))
    }
}

fn spd_inverse(b: &DenseMatrix) -> Result<DenseMatrix> {
    b.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::PreconditionViolated("metric B is not symmetric positive definite".into())
    })
}

/// `B^{-1/2}` of a symmetric positive definite matrix.
pub fn spd_inverse_sqrt(b: &DenseMatrix) -> Result<DenseMatrix> {
    let eig = SymmetricEigen::new((b + b.transpose()) * 0.5);
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::PreconditionViolated(
            "metric B is not symmetric positive definite".into(),
        ));
    }
    let d = DenseMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

fn check_sap_shapes(m_mat: &DenseMatrix, b: &DenseMatrix, s: &DenseMatrix) -> Result<()> {
    check_dim(m_mat.ncols(), b.nrows())?;
    check_dim(m_mat.ncols(), b.ncols())?;
    check_dim(m_mat.nrows(), s.nrows())
}

/// One SAP update `y − B⁻¹MᵀS (SᵀMB⁻¹MᵀS)† Sᵀ(My − c)`.
pub fn sap_step(
    m_mat: &DenseMatrix,
    c: &Vector,
    b: &DenseMatrix,
    s: &DenseMatrix,
    y: &Vector,
) -> Result<Vector> {
    check_sap_shapes(m_mat, b, s)?;
    check_dim(m_mat.nrows(), c.len())?;
    check_dim(m_mat.ncols(), y.len())?;
    let b_inv = spd_inverse(b)?;
    let st_m = s.transpose() * m_mat;
    let b_inv_mt_s = &b_inv * st_m.transpose();
    let gram = &st_m * &b_inv_mt_s;
    let resid = s.tr_mul(&(m_mat * y - c));
    Ok(y - b_inv_mt_s * (pseudo_inverse(&gram)? * resid))
}

/// The REK update written as one matrix step,
/// `(z;x) − P (Q (z;x) − (0; b_i))` with
/// `P = blockdiag(A_{:j}/‖A_{:j}‖², A_{i:}ᵀ/‖A_{i:}‖²)` and
/// `Q = [[A_{:j}ᵀ, 0], [I_{i:}(I − A_{:j}A_{:j}ᵀ/‖A_{:j}‖²), A_{i:}]]`.
pub fn rek_matrix_step(
    system: &LinearSystem,
    z: &Vector,
    x: &Vector,
    i: usize,
    j: usize,
) -> Result<(Vector, Vector)> {
    let (m, n) = (system.rows(), system.cols());
    check_dim(m, z.len())?;
    check_dim(n, x.len())?;
    check_index(i, m)?;
    check_index(j, n)?;
    let a = system.a();
    let col = a.column(j).into_owned();
    let row = a.row(i).transpose();
    let col_sq = col.norm_squared();
    let row_sq = row.norm_squared();
    if col_sq == 0.0 {
        return Err(Error::ZeroColumn(j));
    }
    if row_sq == 0.0 {
        return Err(Error::ZeroRow(i));
    }

    let mut p = DenseMatrix::zeros(m + n, 2);
    p.view_mut((0, 0), (m, 1)).copy_from(&(&col / col_sq));
    p.view_mut((m, 1), (n, 1)).copy_from(&(&row / row_sq));

    let proj = DenseMatrix::identity(m, m) - &col * col.transpose() / col_sq;
    let mut q = DenseMatrix::zeros(2, m + n);
    q.view_mut((0, 0), (1, m)).copy_from(&col.transpose());
    q.view_mut((1, 0), (1, m)).copy_from(&proj.row(i));
    q.view_mut((1, m), (1, n)).copy_from(&row.transpose());

    let mut y = Vector::zeros(m + n);
    y.rows_mut(0, m).copy_from(z);
    y.rows_mut(m, n).copy_from(x);
    let target = Vector::from_vec(vec![0.0, system.b()[i]]);
    let next = &y - p * (q * &y - target);
    Ok((next.rows(0, m).into_owned(), next.rows(m, n).into_owned()))
}

/// `Z = MᵀS (SᵀMB⁻¹MᵀS)† SᵀM`.
pub fn update_matrix_z(
    m_mat: &DenseMatrix,
    b: &DenseMatrix,
    s: &DenseMatrix,
) -> Result<DenseMatrix> {
    check_sap_shapes(m_mat, b, s)?;
    let b_inv = spd_inverse(b)?;
    let st_m = s.transpose() * m_mat;
    let gram = &st_m * &b_inv * st_m.transpose();
    Ok(st_m.transpose() * pseudo_inverse(&gram)? * st_m)
}

/// Off-diagonal block sizes of `B⁻¹Z` for one sampled update matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    /// `‖(B⁻¹Z)_{z,x}‖_max`: how much the z update depends on x.
    pub top_right_max: f64,
    /// `‖(B⁻¹Z)_{x,z}‖_max`: how much the x update depends on z.
    pub bottom_left_max: f64,
    pub tolerance: f64,
    /// `top_right ≈ 0 ⇔ bottom_left ≈ 0`.
    pub equivalence_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructureReport {
    pub entries: Vec<BlockEntry>,
}

impl BlockStructureReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.equivalence_holds)
    }

    pub fn count_coupled(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.top_right_max > e.tolerance)
            .count()
    }
}

/// Absolute tolerance (scaled by `max(1, ‖B⁻¹Z‖_max)`) for calling a block zero.
pub const BLOCK_ZERO_TOL: f64 = 1e-10;

/// For a block-diagonal `B = blockdiag(B₁, B₂)` with `B₁` of size `z_dim`, check on each
/// `Z` that the z-update is x-independent exactly when the x-update is z-independent.
pub fn block_structure_report(
    z_list: &[DenseMatrix],
    b: &DenseMatrix,
    z_dim: usize,
) -> Result<BlockStructureReport> {
    let b_inv = spd_inverse(b)?;
    let dim = b.nrows();
    let x_dim = dim - z_dim;
    let entries = z_list
        .iter()
        .map(|z| {
            check_dim(dim, z.nrows())?;
            let bz = &b_inv * z;
            let scale = bz.amax().max(1.0);
            let tolerance = BLOCK_ZERO_TOL * scale;
            let top_right_max = bz.view((0, z_dim), (z_dim, x_dim)).amax();
            let bottom_left_max = bz.view((z_dim, 0), (x_dim, z_dim)).amax();
            Ok(BlockEntry {
                top_right_max,
                bottom_left_max,
                tolerance,
                equivalence_holds: (top_right_max <= tolerance) == (bottom_left_max <= tolerance),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockStructureReport { entries })
}
