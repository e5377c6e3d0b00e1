//! Thin helpers over nalgebra's dense factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Reciprocal condition threshold below which a factorized matrix is
/// treated as numerically singular.
pub const RCOND_FLOOR: f64 = 1e-13;

pub type Chol = Cholesky<f64, Dyn>;

/// Spectral condition number of a symmetric matrix (inf when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factorization that also rejects numerically singular input.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Chol> {
    let chol = Cholesky::new(m.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        context: context.to_string(),
        condition: condition_number(m),
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0) || (lo / hi).powi(2) < RCOND_FLOOR {
        return Err(Error::NotPositiveDefinite {
            context: context.to_string(),
            condition: condition_number(m),
        });
    }
    Ok(chol)
}

/// Quadratic form `x' A^{-1} x` given the Cholesky factor of `A`.
pub fn inv_quad_form(chol: &Chol, x: &DVector<f64>) -> f64 {
    let y = chol
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("cholesky factor has a positive diagonal");
    y.norm_squared()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    Ok(cholesky(a, context)?.solve(b))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Pack the upper triangle (row-major) of a symmetric matrix.
pub fn pack_upper(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn unpack_upper(packed: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = packed[k];
            m[(j, i)] = packed[k];
            k += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(cholesky(&m, "test"), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn pack_round_trip() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 3.0, 0.2, 0.1, 0.2, 4.0]);
        assert_eq!(unpack_upper(&pack_upper(&m), 3), m);
    }

    #[test]
    fn inverse_quadratic_form() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let chol = cholesky(&a, "test").unwrap();
        let direct = (x.transpose() * a.try_inverse().unwrap() * &x)[(0, 0)];
        assert!((inv_quad_form(&chol, &x) - direct).abs() < 1e-14);
    }
}
