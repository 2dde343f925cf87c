//! Dense helpers: sorted symmetric eigendecomposition, Gram-route SVD,
//! singular-value soft thresholding and projectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("eigendecomposition needs a square matrix".into()));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::SvdFailure("non-finite entries".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::SvdFailure("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = eig.eigenvectors.select_columns(order.iter());
    Ok((values, vectors))
}

/// Economy SVD `a = U diag(s) V'` through the eigendecomposition of the smaller Gram matrix.
/// Singular values are sorted in decreasing order; only `min(rows, cols)` are returned.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let (rows, cols) = a.shape();
    let k = rows.min(cols);
    if cols <= rows {
        let (vals, v) = sym_eigen_desc(&a.tr_mul(a))?;
        let s = vals.map(|x| x.max(0.0).sqrt());
        let mut u = a * &v;
        for j in 0..k {
            if s[j] > 0.0 {
                u.column_mut(j).scale_mut(1.0 / s[j]);
            }
        }
        Ok(ThinSvd {
            u,
            singular_values: s,
            v,
        })
    } else {
        let (vals, u) = sym_eigen_desc(&(a * a.transpose()))?;
        let s = vals.map(|x| x.max(0.0).sqrt());
        let mut v = a.tr_mul(&u);
        for j in 0..k {
            if s[j] > 0.0 {
                v.column_mut(j).scale_mut(1.0 / s[j]);
            }
        }
        Ok(ThinSvd {
            u,
            singular_values: s,
            v,
        })
    }
}

/// Proximal operator of `tau * |.|_*`: shrinks every singular value by `tau`.
pub fn singular_value_threshold(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(svt_factors(a, tau)?.compose(a.nrows(), a.ncols()))
}

/// Singular-value soft thresholding returned in factored form; only the
/// components that survive are kept, with their shrunk singular values.
pub fn svt_factors(a: &DMatrix<f64>, tau: f64) -> Result<ThinSvd> {
    let svd = thin_svd(a)?;
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > tau)
        .collect();
    Ok(ThinSvd {
        u: svd.u.select_columns(kept.iter()),
        singular_values: DVector::from_iterator(
            kept.len(),
            kept.iter().map(|&j| svd.singular_values[j] - tau),
        ),
        v: svd.v.select_columns(kept.iter()),
    })
}

impl ThinSvd {
    /// `U diag(s) V'`, or the zero matrix when no components are kept.
    pub fn compose(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        if self.singular_values.is_empty() {
            return DMatrix::zeros(rows, cols);
        }
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(thin_svd(a)?.singular_values.sum())
}

/// Orthogonal projector onto the column space of `l` (full column rank assumed).
pub fn projector(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if l.ncols() == 0 {
        return Ok(DMatrix::zeros(l.nrows(), l.nrows()));
    }
    let inv = (l.tr_mul(l))
        .try_inverse()
        .ok_or_else(|| Error::SvdFailure("projector basis is rank deficient".into()))?;
    Ok(l * inv * l.transpose())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Ratio of the largest to the smallest eigenvalue magnitude of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    let (vals, _) = sym_eigen_desc(m)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in vals.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svt_shrinks_singular_values() {
        // diag(3, 1) rotated on both sides
        let (c, s) = (0.6, 0.8);
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a = &r * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])) * r.transpose();
        let out = singular_value_threshold(&a, 1.0).unwrap();
        let sv = thin_svd(&out).unwrap().singular_values;
        assert!((sv[0] - 2.0).abs() < 1e-10);
        assert!(sv[1].abs() < 1e-6);
    }

    #[test]
    fn thin_svd_reconstructs_wide_and_tall() {
        let tall = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        for a in [tall.clone(), tall.transpose()] {
            let svd = thin_svd(&a).unwrap();
            let rec = &svd.u * DMatrix::from_diagonal(&svd.singular_values) * svd.v.transpose();
            assert!((rec - &a).amax() < 1e-9);
            assert!(svd.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn projector_is_idempotent() {
        let l = DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 + if i == j { 1.0 } else { 0.0 });
        let p = projector(&l).unwrap();
        assert!((&p * &p - &p).amax() < 1e-10);
        assert!((&p * &l - &l).amax() < 1e-10);
    }
}
