//! Minimal dense matrix support: LU determinants, Gauss-Jordan inverses and
//! Jacobi eigenvalues, over real or complex scalars.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Clone> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { data, rows, cols }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    /// Submatrix keeping the given row and column indices, in order.
    pub fn select(&self, row_idx: &[usize], col_idx: &[usize]) -> Self {
        Matrix::from_fn(row_idx.len(), col_idx.len(), |i, j| {
            self[(row_idx[i], col_idx[j])].clone()
        })
    }
}

impl<T: Clone + Zero + One> Matrix<T> {
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Determinant by LU with partial pivoting, parameterized by a pivot
/// magnitude; singular matrices give zero. The empty determinant is one.
fn lu_det_by<T, M>(m: &Matrix<T>, mag: impl Fn(&T) -> M) -> T
where
    T: Copy + Zero + One + std::ops::Sub<Output = T> + std::ops::Div<Output = T> + std::ops::Neg<Output = T>,
    M: PartialOrd + Zero,
{
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    let mut det = T::one();
    for k in 0..n {
        let mut pivot = k;
        for i in k + 1..n {
            if mag(&a[(i, k)]) > mag(&a[(pivot, k)]) {
                pivot = i;
            }
        }
        if !(mag(&a[(pivot, k)]) > M::zero()) {
            return T::zero();
        }
        if pivot != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pivot, j)];
                a[(pivot, j)] = tmp;
            }
            det = -det;
        }
        det = det * a[(k, k)];
        for i in k + 1..n {
            let factor = a[(i, k)] / a[(k, k)];
            for j in k..n {
                let delta = factor * a[(k, j)];
                a[(i, j)] = a[(i, j)] - delta;
            }
        }
    }
    det
}

pub fn lu_det<R: Real>(m: &Matrix<R>) -> R {
    lu_det_by(m, |x| x.abs())
}

pub fn lu_det_complex<R: Real>(m: &Matrix<Complex<R>>) -> Complex<R> {
    lu_det_by(m, |x| x.norm_sqr())
}

/// Gauss-Jordan inverse; `None` if (numerically) singular.
fn invert_by<T, M>(m: &Matrix<T>, mag: impl Fn(&T) -> M) -> Option<Matrix<T>>
where
    T: Copy + Zero + One + std::ops::Sub<Output = T> + std::ops::Div<Output = T>,
    M: PartialOrd + Zero,
{
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = Matrix::<T>::identity(n);
    for k in 0..n {
        let mut pivot = k;
        for i in k + 1..n {
            if mag(&a[(i, k)]) > mag(&a[(pivot, k)]) {
                pivot = i;
            }
        }
        if !(mag(&a[(pivot, k)]) > M::zero()) {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(pivot, j)];
                a[(pivot, j)] = t;
                let t = inv[(k, j)];
                inv[(k, j)] = inv[(pivot, j)];
                inv[(pivot, j)] = t;
            }
        }
        let p = a[(k, k)];
        for j in 0..n {
            a[(k, j)] = a[(k, j)] / p;
            inv[(k, j)] = inv[(k, j)] / p;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = a[(i, k)];
            if !(mag(&f) > M::zero()) {
                continue;
            }
            for j in 0..n {
                a[(i, j)] = a[(i, j)] - f * a[(k, j)];
                inv[(i, j)] = inv[(i, j)] - f * inv[(k, j)];
            }
        }
    }
    Some(inv)
}

pub fn invert<R: Real>(m: &Matrix<R>) -> Option<Matrix<R>> {
    invert_by(m, |x| x.abs())
}

pub fn invert_complex<R: Real>(m: &Matrix<Complex<R>>) -> Option<Matrix<Complex<R>>> {
    invert_by(m, |x| x.norm_sqr())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<R: Real>(m: &Matrix<R>) -> Vec<R> {
    assert!(m.is_square());
    let n = m.rows();
    let mut a = m.clone();
    let eps = R::epsilon() * R::lit(16.0);
    for _sweep in 0..100 {
        let mut off = R::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        let scale: R = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum::<R>() + off + R::one();
        if off <= eps * eps * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() <= R::epsilon() * scale.sqrt() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (R::lit(2.0) * a[(p, q)]);
                let t = {
                    let s = if theta >= R::zero() { R::one() } else { -R::one() };
                    s / (theta.abs() + (theta * theta + R::one()).sqrt())
                };
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<R> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// C = A * B for real matrices.
pub fn matmul<R: Real>(a: &Matrix<R>, b: &Matrix<R>) -> Matrix<R> {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn det_identity_and_diag() {
        let i3 = Matrix::<f64>::identity(3);
        assert_abs_diff_eq!(lu_det(&i3), 1.0);
        let d = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 4.0]);
        assert_abs_diff_eq!(lu_det(&d), 4.0);
        let empty = Matrix::<f64>::from_vec(0, 0, vec![]);
        assert_abs_diff_eq!(lu_det(&empty), 1.0);
    }

    #[test]
    fn det_singular_is_zero() {
        let s = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert_abs_diff_eq!(lu_det(&s), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let m = Matrix::from_vec(3, 3, vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let inv = invert(&m).unwrap();
        let prod = matmul(&m, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], want, epsilon = 1e-12);
            }
        }
        let singular = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(invert(&singular).is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let m = Matrix::from_vec(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let e = symmetric_eigenvalues(&m);
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(e[1], 3.0, epsilon = 1e-10);
    }
}
