//! Thin wrappers over LAPACK for the small dense problems.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Eigh, EigValsh, JobSvd, SVDDC, SVD, UPLO};

use crate::error::{Error, Result};

fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    (a + &a.t()) * 0.5
}

/// Checks once per process that the linked LAPACK returns correct results
/// on a pencil with known spectrum. Some OpenBLAS builds select broken
/// kernels on newer CPUs; `OPENBLAS_CORETYPE=Haswell` works around that.
pub fn lapack_self_check() -> Result<()> {
    static OK: OnceLock<bool> = OnceLock::new();
    let ok = *OK.get_or_init(|| {
        let n = 96;
        let mut a = Array2::<f64>::zeros((n, n));
        let mut b = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            a[[i, i]] = 2.0;
            b[[i, i]] = 2.0;
            if i + 1 < n {
                a[[i, i + 1]] = -1.0;
                a[[i + 1, i]] = -1.0;
            }
        }
        match (a.clone(), b).eigh(UPLO::Lower) {
            Ok((vals, _)) => (0..n).all(|k| {
                let want = (1.0 - (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos()).abs();
                (vals[k] - want).abs() < 1e-12
            }),
            Err(_) => false,
        }
    });
    if ok {
        Ok(())
    } else {
        Err(Error::Lapack(
            "LAPACK self-check failed; with OpenBLAS set OPENBLAS_CORETYPE=Haswell (or another kernel family)".into(),
        ))
    }
}

/// Eigenpairs of a symmetric matrix, ascending.
pub fn sym_eigh(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    lapack_self_check()?;
    let (vals, vecs) = symmetrize(a).eigh(UPLO::Lower)?;
    Ok((vals.to_vec(), vecs))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigvals(a: &Array2<f64>) -> Result<Vec<f64>> {
    lapack_self_check()?;
    Ok(symmetrize(a).eigvalsh(UPLO::Lower)?.to_vec())
}

/// Generalized pencil `A x = λ B x` with `B` positive definite. Eigenvalues
/// ascending; eigenvectors are `B`-orthonormal.
pub fn gen_eigh(a: &Array2<f64>, b: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    lapack_self_check()?;
    let (vals, (vecs, _)) = (symmetrize(a), symmetrize(b)).eigh(UPLO::Lower)?;
    Ok((vals.to_vec(), vecs))
}

/// Singular values and the thin set of left singular vectors.
pub fn left_singular(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    lapack_self_check()?;
    let (u, s, _) = a.svddc(JobSvd::Some)?;
    Ok((s.to_vec(), u.expect("requested U")))
}

pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    lapack_self_check()?;
    let (_, s, _) = a.svd(false, false)?;
    Ok(s.to_vec())
}

/// Numerical rank with singular values below `rel_tol * σ_max` discarded.
pub fn numerical_rank(a: &Array2<f64>, rel_tol: f64) -> Result<usize> {
    if a.is_empty() {
        return Ok(0);
    }
    let s = singular_values(a)?;
    let top = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&v| v > rel_tol * top && v > 0.0).count())
}

pub fn column(a: &Array2<f64>, j: usize) -> Vec<f64> {
    a.column(j).to_vec()
}

pub fn from_columns(n: usize, cols: &[Vec<f64>]) -> Array2<f64> {
    let mut out = Array2::zeros((n, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(&Array1::from(c.clone()));
    }
    out
}

/// Horizontal concatenation.
pub fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("row counts agree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn generalized_pencil() {
        let a = array![[2.0, 0.0], [0.0, 6.0]];
        let b = array![[1.0, 0.0], [0.0, 2.0]];
        let (vals, vecs) = gen_eigh(&a, &b).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let g = vecs.t().dot(&b).dot(&vecs);
        assert!((g[[0, 0]] - 1.0).abs() < 1e-14 && g[[0, 1]].abs() < 1e-14);
        let r = a.dot(&vecs.column(1)) - b.dot(&vecs.column(1)) * vals[1];
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }
}
