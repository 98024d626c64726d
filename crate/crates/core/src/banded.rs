//! Banded matrices and an LU factorization without pivoting.
//!
//! Every matrix factorized here is a nonsingular M-matrix (or a positive shift
//! of one), for which Gaussian elimination without row exchanges is stable and
//! keeps the band. A nonpositive pivot is reported as an error: it means the
//! matrix was not an M-matrix, typically because a shift overshot the
//! principal eigenvalue.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Zero `n x n` matrix with `kl` sub- and `ku` super-diagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Entry `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.offset(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `value` to entry `(i, j)`.
    ///
    /// # Panics
    /// If `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.offset(i, j);
        self.data[k] += value;
    }

    /// Adds `s` to every diagonal entry.
    pub fn shift_diagonal(&mut self, s: f64) {
        for i in 0..self.n {
            let k = self.offset(i, i);
            self.data[k] += s;
        }
    }

    /// Iterates over stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).map(move |j| (j, self.data[self.offset(i, j)]))
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let w = self.kl + self.ku + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let base = i * w + self.kl - i;
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.data[base + j] * x[j];
            }
            y[i] = s;
        }
    }

    /// Nonzero entries as `(row, col, value)` triplets, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    /// LU factorization without pivoting.
    pub fn factor(&self) -> Result<BandedLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let w = kl + ku + 1;
        let mut a = self.data.clone();
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        for k in 0..n {
            let pivot = a[idx(k, k)];
            if !(pivot > 0.0 && pivot.is_finite()) {
                return Err(Error::Pivot { row: k, pivot });
            }
            let jmax = (k + ku).min(n - 1);
            let imax = (k + kl).min(n - 1);
            for i in k + 1..=imax {
                let ik = idx(i, k);
                let l = a[ik] / pivot;
                a[ik] = l;
                if l != 0.0 {
                    let ri = i * w + kl - i;
                    let rk = k * w + kl - k;
                    for j in k + 1..=jmax {
                        a[ri + j] -= l * a[rk + j];
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, data: a })
    }
}

/// Packed `L U` factors of a [`BandedMatrix`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with `A^{-1} b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (kl, ku, n) = (self.kl, self.ku, self.n);
        let w = kl + ku + 1;
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let base = i * w + kl - i;
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[base + j] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let base = i * w + kl - i;
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.data[base + j] * b[j];
            }
            b[i] = s / self.data[base + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize, shift: f64) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 2.0 + shift);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = laplacian(50, 0.1);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.mul_vec(&x, &mut b);
        let y = a.factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_band_roundtrip() {
        let n = 40;
        let mut a = BandedMatrix::zeros(n, 5, 3);
        for i in 0..n {
            a.add(i, i, 20.0);
            for j in i.saturating_sub(5)..=(i + 3).min(n - 1) {
                if j != i {
                    a.add(i, j, -1.0 - 0.1 * ((i + 2 * j) % 3) as f64);
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&x, &mut b);
        let y = a.factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_m_matrix_is_positive() {
        let a = laplacian(30, 0.0);
        let mut e = vec![0.0; 30];
        e[0] = 1.0;
        let y = a.factor().unwrap().solve(&e);
        assert!(y.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn singular_shift_is_reported() {
        let mut a = laplacian(10, 0.0);
        a.shift_diagonal(-4.0);
        assert!(matches!(a.factor(), Err(Error::Pivot { row: 0, .. })));
    }

    #[test]
    #[should_panic]
    fn out_of_band_write_panics() {
        let mut a = BandedMatrix::zeros(5, 1, 1);
        a.add(0, 3, 1.0);
    }
}
