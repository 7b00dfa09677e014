//! Symmetric banded matrices and their Cholesky factorization. B-spline
//! normal equations couple only basis functions with overlapping support,
//! so every system the solver sees has half-bandwidth `p`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Upper band of a symmetric matrix: `data[i * (bw + 1) + d]` holds the
/// entry `(i, i + d)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub(crate) fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    /// Band of `m`; entries outside the band must be zero.
    pub(crate) fn from_dense(m: &DMatrix<f64>, bw: usize) -> Self {
        let mut band = Self::zeros(m.nrows(), bw);
        for i in 0..band.n {
            for d in 0..=band.bw.min(band.n - 1 - i) {
                band.data[i * (band.bw + 1) + d] = m[(i, i + d)];
            }
        }
        band
    }

    /// Smallest half-bandwidth that holds every nonzero of `m`.
    pub(crate) fn bandwidth_of(m: &DMatrix<f64>) -> usize {
        let mut bw = 0;
        for j in 0..m.ncols() {
            for i in 0..j {
                if m[(i, j)] != 0.0 {
                    bw = bw.max(j - i);
                    break;
                }
            }
        }
        bw
    }

    pub(crate) fn bandwidth(&self) -> usize {
        self.bw
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[cfg(test)]
    /// Adds `v` to entry `(i, j)` with `i <= j <= i + bw`.
    #[inline]
    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j && j - i <= self.bw);
        self.data[i * (self.bw + 1) + (j - i)] += v;
    }

    pub(crate) fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub(crate) fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * (self.bw + 1)] += v;
        }
    }

    pub(crate) fn copy_from(&mut self, other: &SymBand) {
        self.data.copy_from_slice(&other.data);
    }

    #[cfg(test)]
    pub(crate) fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for d in 0..=self.bw.min(self.n - 1 - i) {
                let v = self.data[i * (self.bw + 1) + d];
                m[(i, i + d)] = v;
                m[(i + d, i)] = v;
            }
        }
        m
    }

    /// Factors `A = UᵀU` in place. Fails when a pivot is not positive or
    /// the squared pivot ratio suggests a condition number beyond 1e15.
    pub(crate) fn factor(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let a = &mut self.data;
        for i in 0..n {
            let mut pivot = a[i * w];
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                let u = a[k * w + (i - k)];
                pivot -= u * u;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::SingularSystem);
            }
            let pivot = pivot.sqrt();
            a[i * w] = pivot;
            for j in i + 1..=(i + bw).min(n - 1) {
                let mut s = a[i * w + (j - i)];
                let lo = j.saturating_sub(bw);
                for k in lo..i {
                    s -= a[k * w + (i - k)] * a[k * w + (j - k)];
                }
                a[i * w + (j - i)] = s / pivot;
            }
        }
        let (lo, hi) = (0..n)
            .map(|i| a[i * w])
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        if (lo / hi).powi(2) < 1e-15 {
            return Err(Error::SingularSystem);
        }
        Ok(BandCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BandCholesky {
    factor: SymBand,
}

impl BandCholesky {
    /// Solves `A x = b` in place.
    pub(crate) fn solve_in_place(&self, b: &mut [f64]) {
        let SymBand { n, bw, ref data } = self.factor;
        let w = bw + 1;
        // Uᵀ z = b
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= data[k * w + (i - k)] * b[k];
            }
            b[i] = s / data[i * w];
        }
        // U x = z
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + bw).min(n - 1) {
                s -= data[i * w + (j - i)] * b[j];
            }
            b[i] = s / data[i * w];
        }
    }
}
