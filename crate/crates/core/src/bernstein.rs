//! Bernstein basis evaluation and the sampling operator on uniform
//! grids.
//!
//! The univariate basis of degree `n` is `p_{n,k}(x) = C(n,k) x^k
//! (1-x)^(n-k)` for `k = 0..=n`; indices outside that range evaluate
//! to zero, which keeps the finite-difference sums in
//! [`basis_variation`] free of edge cases. Rows of the basis are
//! produced by an in-place Pascal-style recurrence rather than
//! explicit binomials, so degrees well past the overflow point of
//! `C(n,k)` in integer arithmetic are fine.

use crate::error::{Error, Result};
use crate::tensor::{compensated_sum, DenseMatrix, NdTensor};

/// Evaluates all of `p_{n,0}(x), ..., p_{n,n}(x)` into `row`.
///
/// The recurrence raises the degree one step at a time, updating the
/// row in place from the top index downward. Every entry stays in
/// `[0, 1]` throughout, so the computation is unconditionally stable.
pub fn basis_row(n: usize, x: f64, row: &mut Vec<f64>) {
    row.clear();
    row.resize(n + 1, 0.0);
    row[0] = 1.0;
    let y = 1.0 - x;
    for m in 1..=n {
        row[m] = x * row[m - 1];
        for k in (1..m).rev() {
            row[k] = x * row[k - 1] + y * row[k];
        }
        row[0] *= y;
    }
}

/// Single basis value `p_{n,k}(x)`, zero when `k` is outside `0..=n`.
pub fn eval_basis_1d(n: usize, k: i64, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    if k < 0 || k > n as i64 {
        return Ok(0.0);
    }
    let mut row = Vec::new();
    basis_row(n, x, &mut row);
    Ok(row[k as usize])
}

fn check_unit_interval(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!(
            "coordinate {x} is outside [0, 1]"
        )));
    }
    Ok(())
}

/// Point in the unit cube. Construction rejects coordinates outside
/// `[0, 1]` and NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    coords: Vec<f64>,
}

impl EvalPoint {
    pub fn new(coords: &[f64]) -> Result<Self> {
        for &x in coords {
            check_unit_interval(x)?;
        }
        Ok(EvalPoint {
            coords: coords.to_vec(),
        })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Multi-index `(k_1, ..., k_d)` for a tensor-product basis of degree
/// `n` per axis. Entries are signed so that out-of-range indices are
/// representable (their basis functions are identically zero).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex {
    pub entries: Vec<i64>,
    pub n: usize,
}

impl MultiIndex {
    pub fn new(entries: Vec<i64>, n: usize) -> Self {
        MultiIndex { entries, n }
    }

    pub fn in_range(&self) -> bool {
        self.entries.iter().all(|&k| 0 <= k && k <= self.n as i64)
    }
}

/// Tensor-product basis value `prod_l p_{n,k_l}(x_l)`.
pub fn eval_basis_md(idx: &MultiIndex, point: &EvalPoint) -> Result<f64> {
    if idx.entries.len() != point.dim() {
        return Err(Error::shape(format!(
            "multi-index has {} axes but point has {}",
            idx.entries.len(),
            point.dim()
        )));
    }
    if !idx.in_range() {
        return Ok(0.0);
    }
    let mut row = Vec::new();
    let mut prod = 1.0;
    for (&k, &x) in idx.entries.iter().zip(point.coords()) {
        check_unit_interval(x)?;
        basis_row(idx.n, x, &mut row);
        prod *= row[k as usize];
    }
    Ok(prod)
}

/// Function samples on the uniform grid `{0, 1/n, ..., 1}^d`, stored
/// as a `(n+1)^d` tensor indexed by the grid multi-index.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSamples {
    pub n: usize,
    values: NdTensor,
}

impl GridSamples {
    pub fn sample(f: impl Fn(&[f64]) -> f64, n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::precondition("grid degree n must be at least 1"));
        }
        if d == 0 {
            return Err(Error::precondition("dimension d must be at least 1"));
        }
        let shape = vec![n + 1; d];
        let mut coords = vec![0.0; d];
        let values = NdTensor::from_fn(&shape, |idx| {
            for (c, &k) in coords.iter_mut().zip(idx) {
                *c = k as f64 / n as f64;
            }
            f(&coords)
        });
        Ok(GridSamples { n, values })
    }

    pub fn from_tensor(n: usize, values: NdTensor) -> Result<Self> {
        if values.ndim() == 0 {
            return Err(Error::shape("sample tensor must have rank at least 1"));
        }
        if values.shape().iter().any(|&s| s != n + 1) {
            return Err(Error::shape(format!(
                "sample tensor shape {:?} does not match degree {} (need {} per axis)",
                values.shape(),
                n,
                n + 1
            )));
        }
        Ok(GridSamples { n, values })
    }

    pub fn dim(&self) -> usize {
        self.values.ndim()
    }

    pub fn values(&self) -> &NdTensor {
        &self.values
    }

    pub fn into_tensor(self) -> NdTensor {
        self.values
    }
}

/// Central moment `T_{n,s}(x) = sum_k (k - n x)^s p_{n,k}(x)`.
///
/// Summed with compensation because the terms alternate in sign scaled
/// by powers of `n`, and downstream checks compare against closed
/// forms at tolerances near machine precision.
pub fn central_moment(n: usize, s: u32, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    let mut row = Vec::new();
    basis_row(n, x, &mut row);
    let nx = n as f64 * x;
    Ok(compensated_sum(
        row.iter()
            .enumerate()
            .map(|(k, &p)| (k as f64 - nx).powi(s as i32) * p),
    ))
}

/// The square matrix `M[j, k] = p_{n,k}(j/n)` that applies the
/// sampling operator along one axis of a grid tensor.
pub fn grid_operator_matrix(n: usize) -> DenseMatrix {
    let mut row = Vec::new();
    let mut rows = Vec::with_capacity(n + 1);
    for j in 0..=n {
        basis_row(n, j as f64 / n as f64, &mut row);
        rows.push(row.clone());
    }
    DenseMatrix::from_rows(n + 1, rows).expect("rows are uniform by construction")
}

/// Applies the sampling operator to grid samples: the output at grid
/// point `j/n` is the Bernstein polynomial of the input evaluated
/// there. Degree 1 reproduces the samples exactly.
pub fn grid_operator_apply(samples: &NdTensor, n: usize) -> Result<NdTensor> {
    if samples.shape().iter().any(|&s| s != n + 1) {
        return Err(Error::shape(format!(
            "grid tensor shape {:?} does not match degree {}",
            samples.shape(),
            n
        )));
    }
    let m = grid_operator_matrix(n);
    let mut out = samples.clone();
    for axis in 0..samples.ndim() {
        out = out.apply_matrix_axis(&m, axis)?;
    }
    Ok(out)
}

/// Rectangular evaluation matrix `E[j, k] = p_{n,k}(g_j)` for an
/// arbitrary list of evaluation abscissas. Applying it along every
/// axis evaluates a coefficient tensor on the product grid in one
/// pass, which is far cheaper than per-point contraction.
pub fn eval_matrix(n: usize, points: &[f64]) -> Result<DenseMatrix> {
    let mut row = Vec::new();
    let mut rows = Vec::with_capacity(points.len());
    for &x in points {
        check_unit_interval(x)?;
        basis_row(n, x, &mut row);
        rows.push(row.clone());
    }
    DenseMatrix::from_rows(n + 1, rows)
}

/// Evaluates `sum_k a_k prod_l p_{n,k_l}(x_l)` for a coefficient
/// tensor `a` of shape `(n+1)^d` at a single point.
pub fn eval_coeff_combination(coeffs: &NdTensor, n: usize, point: &[f64]) -> Result<f64> {
    if point.len() != coeffs.ndim() {
        return Err(Error::shape(format!(
            "point has {} coordinates but coefficients have rank {}",
            point.len(),
            coeffs.ndim()
        )));
    }
    if coeffs.shape().iter().any(|&s| s != n + 1) {
        return Err(Error::shape(format!(
            "coefficient shape {:?} does not match degree {}",
            coeffs.shape(),
            n
        )));
    }
    let mut row = Vec::new();
    let mut acc = coeffs.clone();
    for &x in point.iter().rev() {
        check_unit_interval(x)?;
        basis_row(n, x, &mut row);
        acc = acc.contract_last(&row)?;
    }
    Ok(acc.data()[0])
}

/// Evaluates a coefficient tensor on the product grid `points x ...
/// x points` in one pass, returning a tensor indexed by the grid
/// multi-index. Equivalent to calling [`eval_coeff_combination`] per
/// point but cheaper by a factor of about `(n+1)^(d-1)`.
pub fn eval_coeff_on_grid(coeffs: &NdTensor, n: usize, points: &[f64]) -> Result<NdTensor> {
    if coeffs.shape().iter().any(|&s| s != n + 1) {
        return Err(Error::shape(format!(
            "coefficient shape {:?} does not match degree {}",
            coeffs.shape(),
            n
        )));
    }
    let e = eval_matrix(n, points)?;
    let mut out = coeffs.clone();
    for axis in 0..coeffs.ndim() {
        out = out.apply_matrix_axis(&e, axis)?;
    }
    Ok(out)
}

/// Basis variation of order `r` along one axis:
/// `V_{n,r}(x) = sum_k |sum_i (-1)^i C(r,i) p_{n,k+i}(x)|`
/// with `k` running over `-r ..= n + r` so every nonzero difference is
/// covered. This is the amplification factor that converts a bound on
/// the quantizer's internal state into a bound on the reconstruction
/// error.
pub fn basis_variation(n: usize, r: usize, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    let mut row = Vec::new();
    basis_row(n, x, &mut row);
    let p = |k: i64| -> f64 {
        if k < 0 || k > n as i64 {
            0.0
        } else {
            row[k as usize]
        }
    };
    let signed_binom = binomial_signs(r);
    let mut total = 0.0;
    for k in -(r as i64)..=(n as i64 + r as i64) {
        let mut term = 0.0;
        for (i, &c) in signed_binom.iter().enumerate() {
            term += c * p(k + i as i64);
        }
        total += term.abs();
    }
    Ok(total)
}

/// Coefficients `(-1)^i C(r,i)` for `i = 0..=r`, built by the Pascal
/// recurrence on the absolute values.
pub fn binomial_signs(r: usize) -> Vec<f64> {
    let mut c = vec![1.0f64];
    for _ in 0..r {
        let mut next = vec![1.0; c.len() + 1];
        for i in 1..c.len() {
            next[i] = c[i - 1] + c[i];
        }
        c = next;
    }
    c.iter_mut()
        .enumerate()
        .for_each(|(i, v)| *v *= if i % 2 == 0 { 1.0 } else { -1.0 });
    c
}
