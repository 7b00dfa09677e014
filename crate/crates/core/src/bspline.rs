//! Clamped B-spline bases on equally spaced knots, together with the
//! derivative (difference) operator, Gram matrices and the integrated
//! squared-derivative penalty built from them.
//!
//! Basis functions are indexed `0..dim()` where `dim() = K + p`. The full
//! knot vector has `K + 2p + 1` entries: the boundary knots `a` and `b` each
//! appear `p + 1` times and the `K - 1` interior knots are equally spaced.
//! Basis function `i` is supported on `[t[i], t[i + p + 1]]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::banded::SymBand;
use crate::error::{Error, Result};

/// Degree, knots and derived dimensions of a clamped B-spline space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    degree: usize,
    segments: usize,
    lower: f64,
    upper: f64,
    knots: Vec<f64>,
}

impl BasisSpec {
    /// Builds the degree-`degree` basis on `[lower, upper]` split into
    /// `segments` equal knot spans.
    ///
    /// ```
    /// use exquant::BasisSpec;
    /// let spec = BasisSpec::uniform(0.0, 1.0, 2, 1).unwrap();
    /// assert_eq!(spec.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
    /// assert_eq!(spec.dim(), 3);
    /// ```
    pub fn uniform(lower: f64, upper: f64, segments: usize, degree: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidDomain { a: lower, b: upper });
        }
        if segments < 1 {
            return Err(Error::InvalidSize {
                what: "interior knot count K",
                min: 1,
                got: segments,
            });
        }
        let width = upper - lower;
        let mut knots = Vec::with_capacity(segments + 2 * degree + 1);
        knots.extend(std::iter::repeat(lower).take(degree + 1));
        for j in 1..segments {
            knots.push(lower + width * j as f64 / segments as f64);
        }
        knots.extend(std::iter::repeat(upper).take(degree + 1));
        Ok(Self {
            degree,
            segments,
            lower,
            upper,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of knot spans `K` (the interior knots are `κ_1..κ_{K-1}`).
    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Full knot vector including the repeated boundary knots.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `κ_0 < κ_1 < ... < κ_K`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.knots[self.degree..=self.degree + self.segments]
    }

    /// Number of basis functions, `K + p`.
    pub fn dim(&self) -> usize {
        self.segments + self.degree
    }

    /// The basis of degree `p - by` on the same breakpoints. Derivatives of
    /// order `by` of splines in `self` live in this space.
    pub fn lowered(&self, by: usize) -> Result<Self> {
        if by > self.degree {
            return Err(Error::InvalidOrder {
                order: by,
                degree: self.degree,
            });
        }
        Self::uniform(self.lower, self.upper, self.segments, self.degree - by)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                x,
                a: self.lower,
                b: self.upper,
            })
        }
    }

    /// Index `mu` of the knot span with `t[mu] <= x < t[mu + 1]`; the right
    /// end of the domain belongs to the last span.
    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let k = self.segments;
        let rel = (x - self.lower) / (self.upper - self.lower) * k as f64;
        let mut j = (rel.floor().max(0.0) as usize).min(k - 1);
        while j > 0 && x < self.knots[p + j] {
            j -= 1;
        }
        while j + 1 < k && x >= self.knots[p + j + 1] {
            j += 1;
        }
        p + j
    }

    /// Evaluates the `p + 1` possibly nonzero basis functions at `x` into
    /// `out` and returns the index of the first one. Cox-de Boor recursion in
    /// the triangular form that avoids 0/0 terms.
    ///
    /// `x` must already be inside the domain.
    pub(crate) fn eval_local(&self, x: f64, out: &mut [f64]) -> usize {
        let p = self.degree;
        let t = &self.knots;
        let mu = self.span(x);
        debug_assert!(out.len() > p);
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        assert!(p < 16, "degree too large");
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        mu - p
    }

    /// All `K + p` basis values at `x`.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        self.check_domain(x)?;
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_local(x, &mut local);
        let mut row = vec![0.0; self.dim()];
        row[first..first + local.len()].copy_from_slice(&local);
        Ok(row)
    }

    /// Dense `n x (K + p)` design matrix whose rows are the basis vectors.
    pub fn design_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        let design = SparseDesign::new(self, xs)?;
        Ok(design.to_dense())
    }

    /// Value of the spline with coefficients `coef` at `x`.
    pub fn evaluate(&self, coef: &[f64], x: f64) -> Result<f64> {
        if coef.len() != self.dim() {
            return Err(Error::LengthMismatch {
                what: "coefficients",
                expected: self.dim(),
                got: coef.len(),
            });
        }
        self.check_domain(x)?;
        let mut local = vec![0.0; self.degree + 1];
        let first = self.eval_local(x, &mut local);
        Ok(local
            .iter()
            .zip(&coef[first..])
            .map(|(b, c)| b * c)
            .sum())
    }

    /// `m`-th derivative of the spline with coefficients `coef`, computed as
    /// the degree `p - m` spline with coefficients `D_m coef`.
    pub fn derivative(&self, coef: &[f64], m: usize, x: f64) -> Result<f64> {
        if m == 0 {
            return self.evaluate(coef, x);
        }
        let d = self.difference_operator(m)?;
        let reduced = d * DVector::from_column_slice(coef);
        self.lowered(m)?.evaluate(reduced.as_slice(), x)
    }

    /// First-order difference operator mapping coefficients of this basis to
    /// coefficients of the derivative in the degree `p - 1` basis:
    /// `b'_j = p (b_{j+1} - b_j) / (t[j + 1 + p] - t[j + 1])`.
    fn first_difference(&self) -> DMatrix<f64> {
        let p = self.degree;
        let dim = self.dim();
        let t = &self.knots;
        let mut d = DMatrix::zeros(dim - 1, dim);
        for j in 0..dim - 1 {
            let scale = p as f64 / (t[j + 1 + p] - t[j + 1]);
            d[(j, j)] = -scale;
            d[(j, j + 1)] = scale;
        }
        d
    }

    /// The `(K + p - m) x (K + p)` matrix `D_m` such that the `m`-th
    /// derivative of `sum_k B_k(x) b_k` has coefficients `D_m b` in the
    /// degree `p - m` basis on the same breakpoints.
    pub fn difference_operator(&self, m: usize) -> Result<DMatrix<f64>> {
        if m < 1 || m > self.degree {
            return Err(Error::InvalidOrder {
                order: m,
                degree: self.degree,
            });
        }
        let mut d = self.first_difference();
        for step in 1..m {
            d = self.lowered(step)?.first_difference() * d;
        }
        Ok(d)
    }

    /// Exact Gram matrix `R_ij = ∫ B_i B_j` by Gauss-Legendre quadrature
    /// with `p + 1` nodes on every knot span.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let p = self.degree;
        let dim = self.dim();
        let (nodes, weights) = gauss_legendre(p + 1);
        let mut gram = DMatrix::zeros(dim, dim);
        let mut local = vec![0.0; p + 1];
        for pair in self.breakpoints().windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (node, weight) in nodes.iter().zip(&weights) {
                let x = mid + half * node;
                let first = self.eval_local(x, &mut local);
                let w = weight * half;
                for (r, br) in local.iter().enumerate() {
                    for (c, bc) in local.iter().enumerate() {
                        gram[(first + r, first + c)] += w * br * bc;
                    }
                }
            }
        }
        gram
    }

    /// Integrated squared `m`-th derivative penalty for this basis.
    pub fn penalty(&self, m: usize) -> Result<PenaltyOperator> {
        PenaltyOperator::new(self, m)
    }
}

/// `∫ {s^(m)}^2 = bᵀ D_mᵀ R D_m b`, where `R` is the Gram matrix of the
/// degree `p - m` basis that the derivative lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyOperator {
    order: usize,
    difference: DMatrix<f64>,
    reduced_gram: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl PenaltyOperator {
    pub fn new(spec: &BasisSpec, order: usize) -> Result<Self> {
        let difference = spec.difference_operator(order)?;
        let reduced_gram = spec.lowered(order)?.gram_matrix();
        let mut matrix = difference.transpose() * &reduced_gram * &difference;
        // symmetrize away rounding so downstream Cholesky sees an exact
        // symmetric matrix
        let sym = 0.5 * (&matrix + matrix.transpose());
        matrix = sym;
        Ok(Self {
            order,
            difference,
            reduced_gram,
            matrix,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn difference(&self) -> &DMatrix<f64> {
        &self.difference
    }

    pub fn reduced_gram(&self) -> &DMatrix<f64> {
        &self.reduced_gram
    }

    /// The assembled `(K + p)`-square penalty matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `bᵀ P b`.
    pub fn quadratic_form(&self, coef: &[f64]) -> f64 {
        let b = DVector::from_column_slice(coef);
        (b.transpose() * &self.matrix * &b)[(0, 0)]
    }
}

/// Row-compressed design matrix: each row has `p + 1` consecutive nonzeros.
#[derive(Debug, Clone)]
pub(crate) struct SparseDesign {
    cols: usize,
    width: usize,
    first: Vec<usize>,
    values: Vec<f64>,
}

impl SparseDesign {
    pub(crate) fn new(spec: &BasisSpec, xs: &[f64]) -> Result<Self> {
        let width = spec.degree() + 1;
        let mut first = Vec::with_capacity(xs.len());
        let mut values = vec![0.0; xs.len() * width];
        for (i, &x) in xs.iter().enumerate() {
            spec.check_domain(x)?;
            first.push(spec.eval_local(x, &mut values[i * width..(i + 1) * width]));
        }
        Ok(Self {
            cols: spec.dim(),
            width,
            first,
            values,
        })
    }

    /// Wraps a dense matrix, treating every row as fully populated.
    pub(crate) fn from_dense(z: &DMatrix<f64>) -> Self {
        let cols = z.ncols();
        let mut values = Vec::with_capacity(z.nrows() * cols);
        for i in 0..z.nrows() {
            values.extend(z.row(i).iter());
        }
        Self {
            cols,
            width: cols,
            first: vec![0; z.nrows()],
            values,
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.first.len()
    }

    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    pub(crate) fn row(&self, i: usize) -> (usize, &[f64]) {
        (
            self.first[i],
            &self.values[i * self.width..(i + 1) * self.width],
        )
    }

    pub(crate) fn row_dot(&self, i: usize, coef: &[f64]) -> f64 {
        let (first, vals) = self.row(i);
        vals.iter().zip(&coef[first..]).map(|(v, c)| v * c).sum()
    }

    /// `Zᵀ W Z` and `Zᵀ W y` for diagonal weights `w`.
    pub(crate) fn weighted_normal(&self, w: &[f64], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let mut gram = DMatrix::zeros(self.cols, self.cols);
        let mut rhs = DVector::zeros(self.cols);
        for i in 0..self.rows() {
            let (first, vals) = self.row(i);
            let wi = w[i];
            for (r, vr) in vals.iter().enumerate() {
                let wv = wi * vr;
                rhs[first + r] += wv * y[i];
                for (c, vc) in vals.iter().enumerate().skip(r) {
                    gram[(first + r, first + c)] += wv * vc;
                }
            }
        }
        for r in 0..self.cols {
            for c in 0..r {
                gram[(r, c)] = gram[(c, r)];
            }
        }
        (gram, rhs)
    }

    /// Number of consecutive nonzeros per row.
    pub(crate) fn row_width(&self) -> usize {
        self.width
    }

    /// Adds `Zᵀ W Z` to `band` and writes `Zᵀ W y` into `rhs`. The band must
    /// be at least `row_width() - 1` wide.
    pub(crate) fn accumulate_normal(&self, w: &[f64], y: &[f64], band: &mut SymBand, rhs: &mut [f64]) {
        rhs.iter_mut().for_each(|r| *r = 0.0);
        match self.width {
            1 => self.accumulate_fixed::<1>(w, y, band, rhs),
            2 => self.accumulate_fixed::<2>(w, y, band, rhs),
            3 => self.accumulate_fixed::<3>(w, y, band, rhs),
            4 => self.accumulate_fixed::<4>(w, y, band, rhs),
            5 => self.accumulate_fixed::<5>(w, y, band, rhs),
            6 => self.accumulate_fixed::<6>(w, y, band, rhs),
            _ => self.accumulate_any(w, y, band, rhs),
        }
    }

    // Row width known at compile time lets the inner loops unroll.
    fn accumulate_fixed<const W: usize>(&self, w: &[f64], y: &[f64], band: &mut SymBand, rhs: &mut [f64]) {
        let stride = band.bandwidth() + 1;
        let data = band.data_mut();
        for ((vals, &first), (&wi, &yi)) in self
            .values
            .chunks_exact(W)
            .zip(&self.first)
            .zip(w.iter().zip(y))
        {
            let vals: &[f64; W] = vals.try_into().unwrap();
            let rhs: &mut [f64; W] = (&mut rhs[first..first + W]).try_into().unwrap();
            let wy = wi * yi;
            for r in 0..W {
                let wv = wi * vals[r];
                rhs[r] += vals[r] * wy;
                let base = (first + r) * stride;
                let dest = &mut data[base..base + W - r];
                for c in r..W {
                    dest[c - r] += wv * vals[c];
                }
            }
        }
    }

    fn accumulate_any(&self, w: &[f64], y: &[f64], band: &mut SymBand, rhs: &mut [f64]) {
        let width = self.width;
        let stride = band.bandwidth() + 1;
        let data = band.data_mut();
        for (i, vals) in self.values.chunks_exact(width).enumerate() {
            let first = self.first[i];
            let wi = w[i];
            let wy = wi * y[i];
            for (r, vr) in vals.iter().enumerate() {
                let wv = wi * vr;
                rhs[first + r] += vr * wy;
                let base = (first + r) * stride;
                let dest = &mut data[base..base + width - r];
                for (d, vc) in dest.iter_mut().zip(&vals[r..]) {
                    *d += wv * vc;
                }
            }
        }
    }

    pub(crate) fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.rows(), self.cols);
        for i in 0..self.rows() {
            let (first, vals) = self.row(i);
            for (c, v) in vals.iter().enumerate() {
                z[(i, first + c)] = *v;
            }
        }
        z
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n(z) and P_{n-1}(z)
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            deriv = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let step = p0 / deriv;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
