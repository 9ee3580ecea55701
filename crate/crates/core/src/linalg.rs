//! Small dense helpers shared by the risk and estimation code.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let (values, _) = sym_eigen(m);
    match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// Symmetric square root of a PSD matrix; rounding-level negative eigenvalues are clamped to 0.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    let roots = nalgebra::DVector::from_iterator(values.len(), values.iter().map(|v| v.max(0.0).sqrt()));
    &vectors * DMatrix::from_diagonal(&roots) * vectors.transpose()
}

/// `tr(M^{1/2})` for PSD `M`.
pub fn trace_sqrt(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.iter().map(|v| v.max(0.0).sqrt()).sum()
}

pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values_desc(m).first().copied().unwrap_or(0.0)
}

/// Block-diagonal matrix `I_count ⊗ block`.
pub fn kron_identity(count: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(count * r, count * c);
    for i in 0..count {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    nalgebra::Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(eig_extremes(m).0))
}

/// Solves `X · S = B` for symmetric positive definite `S`, i.e. `X = B S⁻¹`.
pub fn solve_right_spd(b: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(symmetrize(s))
        .ok_or_else(|| Error::Numerical("right-hand factor is not positive definite".into()))?;
    // X S = B  <=>  S X^T = B^T
    Ok(chol.solve(&b.transpose()).transpose())
}

pub fn relative_frobenius_error(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    let scale = exact.norm();
    let diff = (approx - exact).norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalues_come_back_ascending() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert_relative_eq!(vals[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 3.0, epsilon = 1e-12);
        let recon = &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        assert!(relative_frobenius_error(&recon, &m) < 1e-12);
    }

    #[test]
    fn kron_and_block_diag_agree() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(kron_identity(3, &b), block_diag(&[&b, &b, &b]));
    }

    #[test]
    fn right_solve_inverts() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = solve_right_spd(&b, &s).unwrap();
        assert!((x * &s - b).norm() < 1e-14);
    }
}
