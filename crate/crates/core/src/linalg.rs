//! Symmetric positive-definite factorization and solves.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

const BLOCK: usize = 64;
const UPDATE_ROWS: usize = 128;

/// Lower Cholesky factor `L` with `A = L Lᵀ`, stored row-major.
///
/// Only the lower triangle of the backing buffer is meaningful.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factor a symmetric matrix. Only its lower triangle is read.
    pub fn new(a: Matrix<T>) -> Result<Self> {
        let (n, m) = a.shape();
        if n != m {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of a {n}x{m} matrix"
            )));
        }
        let mut l = a.into_vec();
        factor_in_place(&mut l, n)?;
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.n + j]
    }

    /// Solve `A X = B` in place; `B` is `n x r` row-major.
    ///
    /// Each right-hand-side column goes through the same arithmetic
    /// regardless of how many columns are solved together.
    pub fn solve_in_place(&self, b: &mut Matrix<T>) -> Result<()> {
        let n = self.n;
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, system has {n}",
                b.nrows()
            )));
        }
        let r = b.ncols();
        if r == 0 {
            return Ok(());
        }
        let x = b.as_mut_slice();
        // L y = b
        for i in 0..n {
            let (done, rest) = x.split_at_mut(i * r);
            let xi = &mut rest[..r];
            let li = &self.l[i * n..i * n + i];
            for (k, &lik) in li.iter().enumerate() {
                let xk = &done[k * r..(k + 1) * r];
                for (a, &b) in xi.iter_mut().zip(xk) {
                    *a = *a - lik * b;
                }
            }
            let d = self.at(i, i);
            for a in xi.iter_mut() {
                *a = *a / d;
            }
        }
        // Lᵀ x = y, sweeping rows of L
        for i in (0..n).rev() {
            let (head, rest) = x.split_at_mut(i * r);
            let xi = &mut rest[..r];
            let d = self.at(i, i);
            for a in xi.iter_mut() {
                *a = *a / d;
            }
            let li = &self.l[i * n..i * n + i];
            for (k, &lik) in li.iter().enumerate() {
                let xk = &mut head[k * r..(k + 1) * r];
                for (a, &b) in xk.iter_mut().zip(xi.iter()) {
                    *a = *a - lik * b;
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let mut x = b.clone();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix<T>> {
        self.solve(&Matrix::identity(self.n))
    }

    /// `log det A`.
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        (0..self.n).map(|i| two * self.at(i, i).ln()).sum()
    }

    pub fn lower(&self) -> Matrix<T> {
        Matrix::from_fn(self.n, self.n, |i, j| {
            if j <= i {
                self.at(i, j)
            } else {
                T::zero()
            }
        })
    }
}

/// Blocked right-looking factorization; trailing updates go through GEMM.
fn factor_in_place<T: Real>(a: &mut [T], n: usize) -> Result<()> {
    let mut k0 = 0;
    while k0 < n {
        let kb = BLOCK.min(n - k0);
        let kend = k0 + kb;

        // diagonal block
        for i in k0..kend {
            for j in k0..=i {
                let mut s = a[i * n + j];
                for c in k0..j {
                    s = s - a[i * n + c] * a[j * n + c];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::SingularSystem { pivot: i });
                    }
                    a[i * n + i] = s.sqrt();
                } else {
                    a[i * n + j] = s / a[j * n + j];
                }
            }
        }

        // panel below the diagonal block
        for i in kend..n {
            for j in k0..kend {
                let mut s = a[i * n + j];
                let (ri, rj) = (i * n, j * n);
                for c in k0..j {
                    s = s - a[ri + c] * a[rj + c];
                }
                a[ri + j] = s / a[rj + j];
            }
        }

        // trailing lower-trapezoidal update, one row block at a time
        let base = a.as_mut_ptr();
        let mut ib = kend;
        while ib < n {
            let ie = (ib + UPDATE_ROWS).min(n);
            // SAFETY: A and B read columns k0..kend, C writes columns
            // kend..ie of rows ib..ie; the element sets are disjoint and all
            // inside the n*n buffer.
            unsafe {
                T::gemm(
                    ie - ib,
                    kb,
                    ie - kend,
                    -T::one(),
                    base.add(ib * n + k0),
                    n as isize,
                    1,
                    base.add(kend * n + k0),
                    1,
                    n as isize,
                    T::one(),
                    base.add(ib * n + kend),
                    n as isize,
                    1,
                );
            }
            ib = ie;
        }
        k0 = kend;
    }
    Ok(())
}
