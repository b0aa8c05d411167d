//! Dense complex linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on `DMatrix<Complex64>`. Hermitian routines
//! symmetrize their input before factorizing so that round-off in products
//! such as `A X Aᴴ` never trips a Cholesky or eigen solver.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

/// `(M + Mᴴ) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * real(0.5)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    hermitian_defect(m) <= tol
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `Tr(X Jᵀ) = Σ X_ab J_ab`, the transmit-side trace in the Kronecker identities.
pub fn trace_with_transpose(x: &CMat, j: &CMat) -> Complex64 {
    debug_assert_eq!(x.shape(), j.shape());
    x.iter().zip(j.iter()).map(|(a, b)| a * b).sum()
}

/// `M · diag(d)`: scales column `i` of `m` by `d[i]`.
pub fn scale_cols(m: &CMat, d: &CVec) -> CMat {
    debug_assert_eq!(m.ncols(), d.len());
    let mut out = m.clone();
    for (i, mut col) in out.column_iter_mut().enumerate() {
        col *= d[i];
    }
    out
}

/// `diag(d) · M`: scales row `i` of `m` by `d[i]`.
pub fn scale_rows(d: &CVec, m: &CMat) -> CMat {
    debug_assert_eq!(m.nrows(), d.len());
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// `diag(d) · M · diag(d)ᴴ`, i.e. `(d dᴴ) ⊙ M`.
pub fn conjugate_by_diag(d: &CVec, m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)] * d[j].conj())
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
pub fn hermitian_eig(m: &CMat) -> (DVector<f64>, CMat) {
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eig(m).0[0]
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = hermitian_eig(m);
    vals[vals.len() - 1]
}

/// Tolerance used for "numerically PSD" checks: absolute `tol`, scaled up
/// for matrices whose spectrum is far above unit scale.
fn psd_floor(tol: f64, vals: &DVector<f64>) -> f64 {
    let scale = vals.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    -tol * scale
}

/// Checks that `m` is Hermitian and has no eigenvalue below `-tol` (relative
/// to its spectral radius when that exceeds one).
pub fn check_psd(m: &CMat, tol: f64, context: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotPsd {
            context: format!("{context} (non-square {}x{})", m.nrows(), m.ncols()),
            min_eig: f64::NAN,
        });
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.norm()));
    if hermitian_defect(m) > tol * scale {
        return Err(Error::NotPsd {
            context: format!("{context} (not Hermitian)"),
            min_eig: f64::NAN,
        });
    }
    if m.nrows() == 0 {
        return Ok(());
    }
    let (vals, _) = hermitian_eig(m);
    let min = vals[vals.len() - 1];
    if min < psd_floor(tol, &vals) {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eig: min,
        });
    }
    Ok(())
}

/// Principal square root of a Hermitian PSD matrix; eigenvalues in
/// `[-tol, 0)` are clamped to zero, anything lower is rejected.
pub fn psd_sqrt(m: &CMat, tol: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eig(m);
    if let Some(&min) = vals.as_slice().last() {
        if min < psd_floor(tol, &vals) {
            return Err(Error::NotPsd {
                context: "matrix square root".into(),
                min_eig: min,
            });
        }
    }
    let roots = CVec::from_iterator(vals.len(), vals.iter().map(|v| real(v.max(0.0).sqrt())));
    Ok(scale_cols(&vecs, &roots) * vecs.adjoint())
}

fn cholesky(m: &CMat, context: &'static str) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    Cholesky::new(hermitian_part(m)).ok_or(Error::NotPositiveDefinite { context })
}

/// Solves `M X = B` for Hermitian positive-definite `M`.
pub fn hpd_solve(m: &CMat, rhs: &CMat, context: &'static str) -> Result<CMat> {
    Ok(cholesky(m, context)?.solve(rhs))
}

pub fn hpd_inverse(m: &CMat, context: &'static str) -> Result<CMat> {
    Ok(cholesky(m, context)?.inverse())
}

/// `ln det M` for Hermitian positive-definite `M`, via Cholesky.
pub fn log_det_hpd(m: &CMat, context: &'static str) -> Result<f64> {
    let chol = cholesky(m, context)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc)
}

/// Frobenius norm of `a - b` divided by the Frobenius norm of `b`.
pub fn rel_frobenius(a: &CMat, b: &CMat) -> f64 {
    let denom = b.norm();
    let diff = (a - b).norm();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// `Tr(U Uᴴ)`, the transmit power of a precoder.
pub fn power(u: &CMat) -> f64 {
    u.norm_squared()
}
