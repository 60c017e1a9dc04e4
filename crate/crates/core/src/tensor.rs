//! Dense row-major tensors and the small amount of multilinear
//! machinery the rest of the crate needs: per-axis application of a
//! rectangular matrix, fiber access along an axis, and contraction of
//! the last axis against a weight vector.
//!
//! Axes are indexed from 0 and the last axis varies fastest, so flat
//! offsets follow the usual row-major rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `f64` tensor with runtime-determined rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NdTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NdTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        NdTensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor by calling `f` on every multi-index in
    /// row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        if t.data.is_empty() {
            return t;
        }
        let mut idx = vec![0usize; shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            increment_index(&mut idx, shape);
        }
        t
    }

    pub fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::shape("tensor axes must be nonempty"));
        }
        if data.len() != expect {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expect
            )));
        }
        Ok(NdTensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when every axis has the same length.
    pub fn is_square(&self) -> bool {
        self.shape.windows(2).all(|w| w[0] == w[1])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset_of(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, (&k, &s)) in idx.iter().zip(&self.shape).enumerate() {
            debug_assert!(k < s, "index {k} out of range on axis {i}");
            let _ = i;
            off = off * s + k;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset_of(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset_of(idx);
        self.data[off] = v;
    }

    pub fn inf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> NdTensor {
        NdTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, other: &NdTensor, c: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "add_scaled shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &NdTensor, f: impl Fn(f64, f64) -> f64) -> Result<NdTensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "zip_map shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(NdTensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Applies `m` along `axis`: `out[.., r, ..] = sum_c m[r, c] * in[.., c, ..]`.
    /// The axis length must equal `m.cols`; the output axis has length
    /// `m.rows` (the matrix may be rectangular).
    pub fn apply_matrix_axis(&self, m: &DenseMatrix, axis: usize) -> Result<NdTensor> {
        if axis >= self.ndim() {
            return Err(Error::shape(format!(
                "axis {} out of range for rank {}",
                axis,
                self.ndim()
            )));
        }
        let c_len = self.shape[axis];
        if m.cols != c_len {
            return Err(Error::shape(format!(
                "matrix has {} columns but axis {} has length {}",
                m.cols, axis, c_len
            )));
        }
        let inner: usize = self.shape[axis + 1..].iter().product();
        let outer: usize = self.shape[..axis].iter().product();
        let r_len = m.rows;

        let mut out_shape = self.shape.clone();
        out_shape[axis] = r_len;
        let mut out = NdTensor::zeros(&out_shape);

        for o in 0..outer {
            let in_base = o * c_len * inner;
            let out_base = o * r_len * inner;
            for r in 0..r_len {
                let row = m.row(r);
                let dst = &mut out.data[out_base + r * inner..out_base + (r + 1) * inner];
                for (c, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let src = &self.data[in_base + c * inner..in_base + (c + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Contracts the last axis against `w`, reducing the rank by one.
    pub fn contract_last(&self, w: &[f64]) -> Result<NdTensor> {
        let last = *self
            .shape
            .last()
            .ok_or_else(|| Error::shape("cannot contract a rank-0 tensor"))?;
        if w.len() != last {
            return Err(Error::shape(format!(
                "weight vector length {} does not match last axis {}",
                w.len(),
                last
            )));
        }
        let out_shape = &self.shape[..self.ndim() - 1];
        let mut out = NdTensor::zeros(out_shape);
        for (i, slot) in out.data.iter_mut().enumerate() {
            let base = i * last;
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                acc += self.data[base + j] * wj;
            }
            *slot = acc;
        }
        Ok(out)
    }

    /// Number of fibers along `axis` (the tensor restricted to a fixed
    /// choice of all other indices).
    pub fn fiber_count(&self, axis: usize) -> usize {
        self.len() / self.shape[axis]
    }

    /// Base offset and stride of fiber `fiber` along `axis`. Fibers
    /// are ordered lexicographically by the remaining indices.
    pub fn fiber_layout(&self, axis: usize, fiber: usize) -> (usize, usize) {
        let inner: usize = self.shape[axis + 1..].iter().product();
        let o = fiber / inner;
        let i = fiber % inner;
        (o * self.shape[axis] * inner + i, inner)
    }

    /// Decodes fiber `fiber` along `axis` into the remaining indices,
    /// in axis order (the quantizer reports these on overflow).
    pub fn fiber_index(&self, axis: usize, fiber: usize) -> Vec<usize> {
        let inner_shape = &self.shape[axis + 1..];
        let outer_shape = &self.shape[..axis];
        let inner: usize = inner_shape.iter().product();
        let mut o = fiber / inner;
        let mut i = fiber % inner;
        let mut idx = vec![0usize; outer_shape.len() + inner_shape.len()];
        for (slot, &s) in idx[..outer_shape.len()]
            .iter_mut()
            .rev()
            .zip(outer_shape.iter().rev())
        {
            *slot = o % s;
            o /= s;
        }
        for (slot, &s) in idx[outer_shape.len()..]
            .iter_mut()
            .rev()
            .zip(inner_shape.iter().rev())
        {
            *slot = i % s;
            i /= s;
        }
        idx
    }

    pub fn read_fiber(&self, axis: usize, fiber: usize, buf: &mut Vec<f64>) {
        let (base, stride) = self.fiber_layout(axis, fiber);
        let len = self.shape[axis];
        buf.clear();
        buf.extend((0..len).map(|t| self.data[base + t * stride]));
    }

    pub fn write_fiber(&mut self, axis: usize, fiber: usize, vals: &[f64]) {
        let (base, stride) = self.fiber_layout(axis, fiber);
        debug_assert_eq!(vals.len(), self.shape[axis]);
        for (t, &v) in vals.iter().enumerate() {
            self.data[base + t * stride] = v;
        }
    }

    /// Iterates all multi-indices in row-major order.
    pub fn index_iter(&self) -> IndexIter<'_> {
        IndexIter {
            shape: &self.shape,
            next: Some(vec![0; self.shape.len()]),
        }
    }
}

pub struct IndexIter<'a> {
    shape: &'a [usize],
    next: Option<Vec<usize>>,
}

impl Iterator for IndexIter<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        if increment_index(&mut succ, self.shape) {
            self.next = Some(succ);
        }
        Some(cur)
    }
}

/// Advances `idx` to the next multi-index in row-major order. Returns
/// false after wrapping past the last index.
pub fn increment_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..idx.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return true;
        }
        idx[axis] = 0;
    }
    false
}

/// Row-major dense matrix, possibly rectangular.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Builds a matrix whose rows are produced whole by `f`.
    pub fn from_rows(cols: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows in matrix construction"));
        }
        let n_rows = rows.len();
        Ok(DenseMatrix {
            rows: n_rows,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Neumaier-compensated sum. Used where tolerances sit close to the
/// accumulation error of a naive sum (large partitions of unity,
/// high-order moment sums).
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
