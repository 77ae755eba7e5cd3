//! Truncated left singular subspaces, subspace distances and a few small
//! dense helpers built on nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{PmtcError, Result};

/// Column-orthonormal `p x r` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis(DMatrix<f64>);

impl OrthonormalBasis {
    /// Wraps `m` after checking `‖mᵀm − I‖_max ≤ 1e-10`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(PmtcError::ShapeMismatch(format!(
                "basis must have 1..={} columns, got {}",
                m.nrows(),
                m.ncols()
            )));
        }
        let gram = m.transpose() * &m;
        let dev = (gram - DMatrix::identity(m.ncols(), m.ncols())).amax();
        if dev > 1e-10 {
            return Err(PmtcError::InvalidArgument(format!("columns are not orthonormal (deviation {dev:e})")));
        }
        Ok(Self(m))
    }

    /// Orthonormal basis for the column space of a full-column-rank matrix.
    pub fn orthonormalize(m: &DMatrix<f64>) -> Result<Self> {
        let r = m.ncols();
        lsvd(m, r)
    }

    pub(crate) fn from_unchecked(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `U Uᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

/// Top-`rank` left singular vectors of `a`.
///
/// Wide matrices go through the eigendecomposition of `A Aᵀ`, everything else
/// through a thin SVD. Each returned column has its largest-magnitude entry
/// made positive (lowest row index on ties).
pub fn lsvd(a: &DMatrix<f64>, rank: usize) -> Result<OrthonormalBasis> {
    let (rows, cols) = a.shape();
    if rank == 0 || rank > rows.min(cols) {
        return Err(PmtcError::RankTooLarge { rank, rows, cols });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(PmtcError::NonFinite("lsvd input"));
    }
    let mut u = if cols > rows {
        top_eigenvectors(gram(a), rank)
    } else {
        let svd = a.clone().svd(true, false);
        let full_u = svd.u.expect("left singular vectors requested");
        let order = descending_order(svd.singular_values.as_slice());
        DMatrix::from_fn(rows, rank, |i, j| full_u[(i, order[j])])
    };
    fix_signs(&mut u);
    Ok(OrthonormalBasis(u))
}

/// Columns per block when accumulating `A Aᵀ`.
const GRAM_BLOCK: usize = 256;

/// `A Aᵀ`, accumulated over column blocks so that only a small transpose is
/// ever materialized.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows();
    let mut out = DMatrix::zeros(rows, rows);
    let mut start = 0;
    while start < a.ncols() {
        let width = GRAM_BLOCK.min(a.ncols() - start);
        let block = a.columns(start, width);
        out.gemm(1.0, &block, &block.transpose(), 1.0);
        start += width;
    }
    out
}

/// Top-`rank` eigenvectors of a symmetric matrix, sign-normalized.
pub fn top_symmetric_eigenvectors(sym: DMatrix<f64>, rank: usize) -> Result<(OrthonormalBasis, Vec<f64>)> {
    let n = sym.nrows();
    if sym.ncols() != n {
        return Err(PmtcError::ShapeMismatch("matrix is not square".into()));
    }
    if rank == 0 || rank > n {
        return Err(PmtcError::RankTooLarge { rank, rows: n, cols: n });
    }
    if sym.iter().any(|x| !x.is_finite()) {
        return Err(PmtcError::NonFinite("eigen input"));
    }
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(eig.eigenvalues.as_slice());
    let mut u = DMatrix::from_fn(n, rank, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_signs(&mut u);
    let values = order[..rank].iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok((OrthonormalBasis(u), values))
}

fn top_eigenvectors(sym: DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let order = descending_order(eig.eigenvalues.as_slice());
    DMatrix::from_fn(n, rank, |i, j| eig.eigenvectors[(i, order[j])])
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn fix_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Singular values of `a` in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = if a.ncols() > a.nrows() {
        a.transpose().singular_values().iter().copied().collect()
    } else {
        a.singular_values().iter().copied().collect()
    };
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let small = if a.ncols() <= a.nrows() { a.transpose() * a } else { a * a.transpose() };
    SymmetricEigen::new(small).eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v)).max(0.0).sqrt()
}

/// Sine of the largest principal angle between the column spaces of `u` and
/// `v`, i.e. `‖UUᵀ − VVᵀ‖₂`.
///
/// Computed as `‖(I − UUᵀ)V‖₂`, which stays accurate for nearly identical
/// subspaces.
pub fn subspace_distance(u: &OrthonormalBasis, v: &OrthonormalBasis) -> Result<f64> {
    if u.rows() != v.rows() || u.cols() != v.cols() {
        return Err(PmtcError::ShapeMismatch(format!(
            "bases are {}x{} and {}x{}",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols()
        )));
    }
    let (um, vm) = (u.matrix(), v.matrix());
    let resid = vm - um * (um.transpose() * vm);
    Ok(spectral_norm(&resid).clamp(0.0, 1.0))
}

/// `a⁻¹` for a symmetric positive definite matrix, failing when its condition
/// number exceeds `max_cond`.
pub fn spd_inverse(a: &DMatrix<f64>, max_cond: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 0.0) || max / min > max_cond {
        return Err(PmtcError::Singular(format!("condition number {:e} exceeds {max_cond:e}", max / min)));
    }
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| PmtcError::Singular("cholesky failed".into()))
}
