//! Fixed-size dense and sparse complex matrices over the truncated basis.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

/// Dimension of the truncated Hilbert space.
pub const DIM: usize = 9;

/// Dense `DIM x DIM` complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat<T: Real> {
    data: [[Complex<T>; DIM]; DIM],
}

impl<T: Real> Default for CMat<T> {
    fn default() -> Self {
        Self::zeros()
    }
}

impl<T: Real> CMat<T> {
    pub fn zeros() -> Self {
        Self {
            data: [[Complex::zero(); DIM]; DIM],
        }
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { Complex::one() } else { Complex::zero() })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = Self::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m.data[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> &[[Complex<T>; DIM]; DIM] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.data[j][i].conj())
    }

    pub fn trace(&self) -> Complex<T> {
        (0..DIM).fold(Complex::zero(), |acc, i| acc + self.data[i][i])
    }

    /// Real part of the diagonal.
    pub fn diagonal(&self) -> [T; DIM] {
        std::array::from_fn(|i| self.data[i][i].re)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.data[i][j] * s)
    }

    pub fn scale_c(&self, s: Complex<T>) -> Self {
        Self::from_fn(|i, j| self.data[i][j] * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: T, other: &Self) {
        for i in 0..DIM {
            for j in 0..DIM {
                self.data[i][j] += other.data[i][j] * s;
            }
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..DIM {
            for k in 0..DIM {
                let a = self.data[i][k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..DIM {
                    out.data[i][j] += a * rhs.data[k][j];
                }
            }
        }
        out
    }

    /// `(M + M^dagger) / 2`
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(|i, j| (self.data[i][j] + self.data[j][i].conj()) * half)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.data[i][j] - other.data[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Returns true when `self + shift * I` admits a Cholesky factorization,
    /// i.e. the smallest eigenvalue of the Hermitian matrix exceeds `-shift`.
    pub fn is_positive_with_shift(&self, shift: T) -> bool {
        let mut l = [[Complex::<T>::zero(); DIM]; DIM];
        for j in 0..DIM {
            let mut d = self.data[j][j].re + shift;
            for k in 0..j {
                d -= l[j][k].norm_sqr();
            }
            if !(d > T::zero()) {
                return false;
            }
            let djj = d.sqrt();
            l[j][j] = Complex::new(djj, T::zero());
            for i in (j + 1)..DIM {
                let mut s = self.data[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k].conj();
                }
                l[i][j] = s / djj;
            }
        }
        true
    }
}

impl<T: Real> Index<(usize, usize)> for CMat<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i][j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for CMat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i][j]
    }
}

impl<T: Real> Add for CMat<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.data[i][j] + rhs.data[i][j])
    }
}

impl<T: Real> Sub for CMat<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.data[i][j] - rhs.data[i][j])
    }
}

impl<T: Real> AddAssign<&CMat<T>> for CMat<T> {
    fn add_assign(&mut self, rhs: &CMat<T>) {
        for i in 0..DIM {
            for j in 0..DIM {
                self.data[i][j] += rhs.data[i][j];
            }
        }
    }
}

impl<T: Real> Mul for &CMat<T> {
    type Output = CMat<T>;
    fn mul(self, rhs: Self) -> CMat<T> {
        self.matmul(rhs)
    }
}

/// Nonzero entries `(row, col, value)` of a sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMat<T: Real> {
    entries: Vec<(usize, usize, Complex<T>)>,
}

impl<T: Real> SparseMat<T> {
    pub fn from_dense(m: &CMat<T>) -> Self {
        let mut entries = Vec::new();
        for i in 0..DIM {
            for j in 0..DIM {
                if !m[(i, j)].is_zero() {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, usize, Complex<T>)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `out += c * (A * rho)`
    pub fn acc_left(&self, rho: &CMat<T>, c: Complex<T>, out: &mut CMat<T>) {
        for &(i, k, a) in &self.entries {
            let ca = c * a;
            for j in 0..DIM {
                out[(i, j)] += ca * rho[(k, j)];
            }
        }
    }

    /// `out += c * (rho * A)`
    pub fn acc_right(&self, rho: &CMat<T>, c: Complex<T>, out: &mut CMat<T>) {
        for &(k, j, a) in &self.entries {
            let ca = c * a;
            for i in 0..DIM {
                out[(i, j)] += ca * rho[(i, k)];
            }
        }
    }

    /// `out += c * (A rho A^dagger)`
    pub fn acc_sandwich(&self, rho: &CMat<T>, c: Complex<T>, out: &mut CMat<T>) {
        for &(i, k, a) in &self.entries {
            for &(j, l, b) in &self.entries {
                out[(i, j)] += c * a * rho[(k, l)] * b.conj();
            }
        }
    }

    /// `out += c * (A^dagger O A)`
    pub fn acc_sandwich_adjoint(&self, obs: &CMat<T>, c: Complex<T>, out: &mut CMat<T>) {
        for &(k, i, a) in &self.entries {
            for &(l, j, b) in &self.entries {
                out[(i, j)] += c * a.conj() * obs[(k, l)] * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn sample() -> CMat<f64> {
        CMat::from_fn(|i, j| c((i * 3 + j) as f64 * 0.1, (i as f64 - j as f64) * 0.05))
    }

    #[test]
    fn sparse_products_match_dense() {
        let mut a = CMat::<f64>::zeros();
        a[(0, 3)] = c(1.0, 0.0);
        a[(4, 5)] = c(0.0, 2.0_f64.sqrt());
        a[(7, 8)] = c(0.5, -0.25);
        let sp = SparseMat::from_dense(&a);
        let rho = sample();
        let one = c(1.0, 0.0);

        let mut left = CMat::zeros();
        sp.acc_left(&rho, one, &mut left);
        assert!(left.max_abs_diff(&(&a * &rho)) < 1e-14);

        let mut right = CMat::zeros();
        sp.acc_right(&rho, one, &mut right);
        assert!(right.max_abs_diff(&(&rho * &a)) < 1e-14);

        let mut sw = CMat::zeros();
        sp.acc_sandwich(&rho, one, &mut sw);
        assert!(sw.max_abs_diff(&(&(&a * &rho) * &a.adjoint())) < 1e-14);

        let mut swa = CMat::zeros();
        sp.acc_sandwich_adjoint(&rho, one, &mut swa);
        assert!(swa.max_abs_diff(&(&(&a.adjoint() * &rho) * &a)) < 1e-14);
    }

    #[test]
    fn cholesky_positivity_test() {
        let mut m = CMat::<f64>::identity().scale(1.0 / DIM as f64);
        assert!(m.is_positive_with_shift(0.0));
        m[(2, 2)] = c(-1e-3, 0.0);
        assert!(!m.is_positive_with_shift(1e-5));
        assert!(m.is_positive_with_shift(2e-3));
    }

    #[test]
    fn hermitian_part_is_hermitian() {
        let h = sample().hermitian_part();
        assert!(h.is_hermitian(0.0));
    }
}
