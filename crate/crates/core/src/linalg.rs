//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ici::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Solves `A x = b` for Hermitian positive definite `A`.
pub fn hermitian_solve(a: &CMatrix, b: &CVector) -> Result<CVector> {
    let chol = Cholesky::new(hermitize(a)).ok_or_else(|| {
        Error::Numerical(format!(
            "matrix of size {} is not positive definite",
            a.nrows()
        ))
    })?;
    Ok(chol.solve(b))
}

/// Real part of `v^H A v`.
pub fn quad_form(v: &CVector, a: &CMatrix) -> f64 {
    v.dotc(&(a * v)).re
}

/// Adds `w * x x^H` to `acc` in place.
pub fn add_outer(acc: &mut CMatrix, x: &CVector, w: f64) {
    let n = x.len();
    for c in 0..n {
        let xc = x[c].conj() * w;
        for r in 0..n {
            acc[(r, c)] += x[r] * xc;
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix (after symmetrization).
pub fn hermitian_eigen(a: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(a));
    (eig.eigenvalues, eig.eigenvectors)
}

/// `V diag(f(lambda)) V^H`.
pub fn spectral_map(values: &DVector<f64>, vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = values.len();
    let mut scaled = vectors.clone();
    for c in 0..n {
        let w = f(values[c]);
        scaled.column_mut(c).scale_mut(w);
    }
    &scaled * vectors.adjoint()
}

/// Principal square root of a PSD matrix; negative eigenvalues clip to zero.
pub fn psd_sqrt(a: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(a);
    spectral_map(&values, &vectors, |x| x.max(0.0).sqrt())
}

/// Real trace.
pub fn trace_re(a: &CMatrix) -> f64 {
    a.trace().re
}

/// Draws a `CN(0, I_n)` vector.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

/// Ratio of largest to smallest eigenvalue of a Hermitian matrix.
pub fn condition_number(a: &CMatrix) -> f64 {
    let (values, _) = hermitian_eigen(a);
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
