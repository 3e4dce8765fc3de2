//! Dense symmetric matrix helpers shared by the field model and the
//! transport code.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter levels tried, in order, when a factorization fails.
pub const JITTER_STEPS: [f64; 2] = [1e-10, 1e-8];

/// Eigenvalues below `-SQRTM_CLAMP * max_eigenvalue` make a matrix non-PSD.
pub const SQRTM_CLAMP: f64 = 1e-12;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    symmetrize_in_place(&mut s);
    s
}

pub fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(())
}

/// Eigendecomposition with eigenvalues in `[-floor, 0)` clamped to zero.
pub(crate) fn clamped_eigen(a: &DMatrix<f64>, floor: f64) -> Result<SymmetricEigen<f64, Dyn>> {
    let mut eig = symmetrize(a).symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            if *v < -floor {
                return Err(Error::NotPsd {
                    eigenvalue: *v,
                    threshold: -floor,
                });
            }
            *v = 0.0;
        }
    }
    Ok(eig)
}

pub(crate) fn recompose(eig: &SymmetricEigen<f64, Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = f(lambda);
        scaled.column_mut(j).scale_mut(s);
    }
    let mut out = scaled * q.transpose();
    symmetrize_in_place(&mut out);
    out
}

/// Principal square root of a symmetric positive semi-definite matrix.
///
/// Negative eigenvalues down to `-1e-12 * max_eigenvalue` are treated as
/// roundoff and clamped to zero; anything more negative is an error.
pub fn sqrtm_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a)?;
    if relative_asymmetry(a) > 1e-8 {
        return Err(Error::InvalidInput(
            "matrix square root needs a symmetric input".into(),
        ));
    }
    let eig = symmetrize(a).symmetric_eigen();
    let max = eig.eigenvalues.max().max(0.0);
    let floor = SQRTM_CLAMP * max;
    let eig = clamped_eigen(a, floor)?;
    Ok(recompose(&eig, f64::sqrt))
}

/// Square root tolerant of the roundoff-level negative eigenvalues found in
/// large, rank-deficient predictive covariances.
pub(crate) fn sqrtm_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = clamped_eigen(a, psd_floor(a))?;
    Ok(recompose(&eig, f64::sqrt))
}

/// Sum of the square roots of the (clamped) eigenvalues, `tr(A^{1/2})`.
pub(crate) fn trace_sqrt_psd(a: &DMatrix<f64>) -> Result<f64> {
    let eig = clamped_eigen(a, psd_floor(a))?;
    Ok(eig.eigenvalues.iter().map(|v| v.sqrt()).sum())
}

/// Eigenvalues below this fraction of the largest are dropped from factors.
const FACTOR_TRUNCATION: f64 = 1e-11;

/// Thin factor `L` (n × r) with `L Lᵀ = A` up to dropping eigenvalues below
/// `1e-11 * λ_max`, which are roundoff in rank-deficient covariances.
pub(crate) fn psd_factor(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = clamped_eigen(a, psd_floor(a))?;
    let max = eig.eigenvalues.max().max(0.0);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > FACTOR_TRUNCATION * max)
        .collect();
    let mut l = DMatrix::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        l.set_column(c, &(eig.eigenvectors.column(i) * eig.eigenvalues[i].sqrt()));
    }
    Ok(l)
}

/// `(M Mᵀ)^{1/2}` from the singular value decomposition of `M`, which avoids
/// squaring the condition number.
pub(crate) fn sqrt_of_outer(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(n, n);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut scaled = u.clone();
    for (j, &s) in svd.singular_values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(s);
    }
    let mut out = scaled * u.transpose();
    symmetrize_in_place(&mut out);
    out
}

/// Negative-eigenvalue tolerance for a covariance-like matrix: the larger of
/// the sqrtm clamp and the `1e-10 * trace / N` allowed for field covariances.
pub(crate) fn psd_floor(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows().max(1) as f64;
    let diag_max = a.diagonal().max().max(0.0);
    (SQRTM_CLAMP * diag_max * n).max(1e-10 * a.trace().abs() / n)
}

/// Square root and inverse square root of a strictly positive definite
/// matrix, adding relative jitter when the smallest eigenvalue is not
/// comfortably positive.
pub(crate) fn sqrt_and_inv_sqrt(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square(a)?;
    let n = a.nrows() as f64;
    let trace = a.trace();
    let base = symmetrize(a);
    let mut eig = base.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::NotPositiveDefinite {
            matrix: "source covariance".into(),
        });
    }
    let mut jitter_idx = 0;
    while eig.eigenvalues.min() <= 1e-14 * max {
        let Some(&rel) = JITTER_STEPS.get(jitter_idx) else {
            return Err(Error::NotPositiveDefinite {
                matrix: "source covariance".into(),
            });
        };
        let jittered = &base + DMatrix::identity(a.nrows(), a.nrows()) * (rel * trace / n);
        eig = jittered.symmetric_eigen();
        jitter_idx += 1;
    }
    Ok((
        recompose(&eig, f64::sqrt),
        recompose(&eig, |v| 1.0 / v.sqrt()),
    ))
}

/// Cholesky factorization with the jitter ladder `1e-10`, `1e-8` (relative to
/// `trace / N`) applied only when the plain factorization fails.
pub(crate) fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    name: &str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let n = a.nrows();
    let mean_diag = a.trace() / n as f64;
    for rel in JITTER_STEPS {
        let jitter = rel * mean_diag.abs();
        let jittered = a + DMatrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(jittered) {
            return Ok((c, jitter));
        }
    }
    Err(Error::NotPositiveDefinite {
        matrix: name.to_string(),
    })
}

pub(crate) fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}
