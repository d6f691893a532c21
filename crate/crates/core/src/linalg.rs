//! Dense symmetric solves used by regression and the Nyström baseline.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudo-inversion.
pub const PINV_RTOL: f64 = 1e-12;

/// Which path [`solve_spd`] ended up taking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Cholesky,
    Qr,
    PseudoInverse,
}

/// Solves `a * x = b` for symmetric positive (semi)definite `a`.
///
/// Tries Cholesky first and falls back to a truncated eigen pseudo-inverse
/// (cutoff `PINV_RTOL * λ_max`), which yields the minimum-norm solution
/// when `a` is singular.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(DMatrix<f64>, SolveMethod)> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (a.nrows(), a.nrows()),
            found: a.shape(),
        });
    }
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("system matrix"));
    }
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok((x, SolveMethod::Cholesky));
        }
    }
    let pinv = pinv_symmetric(a, PINV_RTOL)?;
    Ok((pinv * b, SolveMethod::PseudoInverse))
}

/// Moore-Penrose inverse of a symmetric matrix via eigendecomposition.
///
/// Eigenvalues at or below `rtol * λ_max` are treated as zero. Errors when
/// the matrix has no positive eigenvalue at all.
pub fn pinv_symmetric(a: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lmax.is_finite() || lmax <= 0.0 {
        return Err(Error::SingularSystem(
            "matrix has no positive eigenvalue; use a regularization parameter gamma > 0".into(),
        ));
    }
    let cutoff = rtol * lmax;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lam;
        }
    }
    Ok(out)
}

/// Minimizes `‖A X − B‖_F² + γ ‖X‖_F²` for a tall `A` (`m × n`, `m ≥ n`).
///
/// Solved as the stacked least-squares problem `[A; √γ I] X ≈ [B; 0]` with a
/// Householder QR, which avoids forming `AᵀA`. When the triangular factor is
/// numerically rank deficient, falls back to a truncated SVD
/// (cutoff `PINV_RTOL * σ_max`) and returns the minimum-norm solution.
pub fn lstsq_ridge(a: &DMatrix<f64>, b: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, SolveMethod)> {
    let (m, n) = a.shape();
    if b.nrows() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: b.nrows(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares system"));
    }
    let rows = if gamma > 0.0 { m + n } else { m };
    if rows < n {
        return Err(Error::SingularSystem(format!(
            "{m} equations cannot determine {n} unknowns without regularization"
        )));
    }
    let mut aa = DMatrix::zeros(rows, n);
    aa.rows_mut(0, m).copy_from(a);
    let mut bb = DMatrix::zeros(rows, b.ncols());
    bb.rows_mut(0, m).copy_from(b);
    if gamma > 0.0 {
        let s = gamma.sqrt();
        for i in 0..n {
            aa[(m + i, i)] = s;
        }
    }

    let qr = aa.clone().qr();
    let r = qr.r();
    let dmax = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let dmin = r.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if dmax > 0.0 && dmin > RANK_RTOL * dmax {
        let mut qtb = bb.clone();
        qr.q_tr_mul(&mut qtb);
        let top = qtb.rows(0, n).into_owned();
        if let Some(x) = r.solve_upper_triangular(&top) {
            if x.iter().all(|v| v.is_finite()) {
                return Ok((x, SolveMethod::Qr));
            }
        }
    }

    let svd = aa.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax.is_nan() || smax <= 0.0 {
        return Err(Error::SingularSystem(
            "system matrix is zero; use a regularization parameter gamma > 0".into(),
        ));
    }
    let x = svd
        .solve(&bb, PINV_RTOL * smax)
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    Ok((x, SolveMethod::PseudoInverse))
}

// Smallest |R_ii| / max |R_ii| accepted before switching to the SVD path.
const RANK_RTOL: f64 = 1e-13;

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_norm_symmetric(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_path_on_spd() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let (x, how) = solve_spd(&a, &b).unwrap();
        assert_eq!(how, SolveMethod::Cholesky);
        let r = &a * &x - &b;
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn pinv_fallback_gives_min_norm() {
        // rank one: [[1,1],[1,1]] x = [2,2] has min-norm solution [1,1]
        let a = DMatrix::from_element(2, 2, 1.0);
        let b = DMatrix::from_row_slice(2, 1, &[2.0, 2.0]);
        let (x, how) = solve_spd(&a, &b).unwrap();
        assert_eq!(how, SolveMethod::PseudoInverse);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = DMatrix::from_fn(7, 3, |i, j| (0.3 * i as f64 - 0.8).powi(j as i32));
        let b = DMatrix::from_fn(7, 2, |i, j| (i as f64 - j as f64).cos());
        for gamma in [0.0, 0.3] {
            let (x, how) = lstsq_ridge(&a, &b, gamma).unwrap();
            assert_eq!(how, SolveMethod::Qr);
            let n = a.transpose() * &a + DMatrix::identity(3, 3) * gamma;
            let direct = n.try_inverse().unwrap() * a.transpose() * &b;
            assert!((x - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn lstsq_rank_deficient_is_min_norm() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_element(3, 1, 2.0);
        let (x, how) = lstsq_ridge(&a, &b, 0.0).unwrap();
        assert_eq!(how, SolveMethod::PseudoInverse);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!(matches!(
            lstsq_ridge(&DMatrix::zeros(3, 2), &b, 0.0),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = DMatrix::zeros(3, 3);
        let b = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(solve_spd(&a, &b), Err(Error::SingularSystem(_))));
    }
}
