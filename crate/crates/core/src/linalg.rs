//! Dense linear algebra used by the decomposition: truncated SVD, general
//! eigendecomposition, minimum-norm least squares and RMS normalization.
//!
//! Factorizations are delegated to `nalgebra`; this module fixes the
//! truncation rule, ordering and error behaviour on top of it.

use alloc::vec::Vec;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fmath;

/// Rank-truncated singular value decomposition `a ~ u * diag(s) * vt`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd<T: ComplexField> {
    /// `m x rank`, orthonormal columns.
    pub u: DMatrix<T>,
    /// Retained singular values, descending and strictly positive.
    pub s: Vec<f64>,
    /// `rank x n`, orthonormal rows.
    pub vt: DMatrix<T>,
    pub rank: usize,
}

impl<T: ComplexField<RealField = f64>> TruncatedSvd<T> {
    /// `diag(s) * vt`, the coordinates of the columns of `a` in the basis `u`.
    pub fn reduced_coordinates(&self) -> DMatrix<T> {
        let mut out = self.vt.clone();
        for (r, &s) in self.s.iter().enumerate() {
            out.row_mut(r).scale_mut(s);
        }
        out
    }

    pub fn recompose(&self) -> DMatrix<T> {
        &self.u * self.reduced_coordinates()
    }
}

fn ensure_finite<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.clone().modulus().is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation(alloc::format!("{what} contains non-finite entries")))
    }
}

/// Full thin SVD with singular values sorted in descending order.
fn sorted_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> (DMatrix<T>, Vec<f64>, DMatrix<T>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]).then(x.cmp(&y)));
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return (u, s, vt);
    }
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])].clone());
    let vt = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)].clone());
    let s = order.iter().map(|&o| s[o]).collect();
    (u, s, vt)
}

/// Smallest `n` with `s[n] / s[0] <= tol`, or `s.len()` if none qualifies.
pub fn truncation_rank(s: &[f64], tol: f64) -> usize {
    match s.first() {
        None => 0,
        Some(&s0) if s0 <= 0.0 => 0,
        Some(&s0) => s.iter().position(|&x| x / s0 <= tol).unwrap_or(s.len()),
    }
}

/// SVD truncated at the first singular value whose ratio to the largest is
/// at most `tol`. An all-zero matrix yields rank 0.
pub fn truncated_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, tol: f64) -> Result<TruncatedSvd<T>> {
    if a.is_empty() {
        return Err(invalid!("cannot decompose an empty matrix"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid!("truncation tolerance must lie in (0, 1), got {tol}"));
    }
    ensure_finite(a, "matrix")?;
    let (u, s, vt) = sorted_svd(a);
    let rank = truncation_rank(&s, tol);
    Ok(TruncatedSvd {
        u: u.columns(0, rank).into_owned(),
        s: s[..rank].to_vec(),
        vt: vt.rows(0, rank).into_owned(),
        rank,
    })
}

/// Eigenvalues with matching eigenvector columns (unit 2-norm).
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
}

/// Eigendecomposition of a general square matrix via the complex Schur form.
///
/// Eigenvectors are recovered by back substitution on the triangular factor
/// and rotated back with the Schur vectors.
pub fn eig_dense<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<EigenPairs> {
    if !a.is_square() {
        return Err(invalid!("eigendecomposition needs a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    ensure_finite(a, "matrix")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenPairs { values: Vec::new(), vectors: DMatrix::zeros(0, 0) });
    }
    let c: DMatrix<Complex64> = DMatrix::from_fn(n, n, |r, col| to_complex(a[(r, col)].clone()));
    let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let schur = nalgebra::linalg::Schur::try_new(c, f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericOverflow("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    let values: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut denom = t[(i, i)] - lambda;
            if denom.norm() < tiny {
                denom = Complex64::new(tiny, 0.0);
            }
            y[(i, k)] = -acc / denom;
        }
    }
    let mut vectors = q * y;
    for mut col in vectors.column_iter_mut() {
        let norm = fmath::sqrt(col.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
    }
    Ok(EigenPairs { values, vectors })
}

fn to_complex<T: ComplexField<RealField = f64>>(x: T) -> Complex64 {
    Complex64::new(x.clone().real(), x.imaginary())
}

/// Minimum-norm least-squares solution of `a * x = b` via the SVD
/// pseudo-inverse. Singular values below `max(m, n) * eps * s_max` are
/// treated as zero.
pub fn lstsq<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != b.nrows() {
        return Err(invalid!("row mismatch: a has {} rows, b has {}", a.nrows(), b.nrows()));
    }
    if a.is_empty() {
        return Err(invalid!("empty system"));
    }
    ensure_finite(a, "coefficient matrix")?;
    ensure_finite(b, "right-hand side")?;
    let (u, s, vt) = sorted_svd(a);
    let cutoff = a.nrows().max(a.ncols()) as f64 * f64::EPSILON * s.first().copied().unwrap_or(0.0);
    let rank = s.iter().take_while(|&&x| x > cutoff).count();
    let mut coeffs = u.columns(0, rank).adjoint() * b;
    for (r, &sv) in s[..rank].iter().enumerate() {
        coeffs.row_mut(r).unscale_mut(sv);
    }
    Ok(vt.rows(0, rank).adjoint() * coeffs)
}

/// Root mean square `sqrt(mean |u_i|^2)`.
pub fn rms(u: &[Complex64]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    fmath::sqrt(u.iter().map(|z| z.norm_sqr()).sum::<f64>() / u.len() as f64)
}

/// Rescales `u` to unit RMS, returning the rescaled vector and the removed
/// factor, so that `scale * result == u`.
pub fn rms_normalize(u: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let scale = rms(u);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid!("cannot normalize a zero or non-finite vector"));
    }
    Ok((u.iter().map(|z| z / scale).collect(), scale))
}

/// Column `c` of a complex matrix as an owned vector.
pub fn column_vec(m: &DMatrix<Complex64>, c: usize) -> Vec<Complex64> {
    m.column(c).iter().copied().collect()
}

pub fn dvector(values: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(values)
}
