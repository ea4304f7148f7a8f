//! Dense vector primitives: normalization, inner products, softmax and
//! log-sum-exp, plus a row-major key matrix used by the routing code.
//!
//! Everything here is a pure function of its inputs.

use crate::error::{Error, Result};

/// Norms below this floor cannot be projected onto the sphere.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

/// Tolerance on `|‖v‖ − 1|` accepted when adopting an existing unit vector.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_finite(&components)?;
        Ok(Vector(components))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Multiplies every component by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * alpha).collect())
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<UnitVector> for Vector {
    fn from(u: UnitVector) -> Self {
        Vector(u.0)
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A point on the unit hypersphere.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Adopts `components` as-is if they already have unit norm (within
    /// [`UNIT_TOLERANCE`]); use [`normalize`] to project arbitrary vectors.
    pub fn from_unit(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput);
        }
        check_finite(&components)?;
        let n = norm(&components);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "expected a unit vector, norm is {n}"
            )));
        }
        Ok(UnitVector(components))
    }

    /// Standard basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn to_vector(&self) -> Vector {
        Vector(self.0.clone())
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Projects `v` onto the unit hypersphere.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_finite(v)?;
    let n = norm(v);
    if n < ZERO_NORM_FLOOR {
        return Err(Error::ZeroNorm { norm: n });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Inner product with a dimension check.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(dot_unchecked(a, b))
}

/// Inner product of equal-length slices. Four independent accumulators let
/// the compiler vectorize the loop.
#[inline]
pub(crate) fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(v: &[f64]) -> f64 {
    dot_unchecked(v, v).sqrt()
}

/// Euclidean distance `‖a − b‖₂`.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(distance_unchecked(a, b))
}

#[inline]
pub(crate) fn distance_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_scores(z: &[f64], beta: f64) -> Result<()> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
    }
    check_finite(z)
}

/// `softmax(β·z)`, computed with max-subtraction so large `β` cannot overflow.
pub fn softmax(z: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_scores(z, beta)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, beta, &mut out);
    Ok(out)
}

/// Writes `softmax(β·z)` into `out` and returns `lse_β(z)`. Inputs are
/// assumed valid.
pub(crate) fn softmax_into(z: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        let e = (beta * (x - max)).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    max + total.ln() / beta
}

/// Softmax without the max shift. Overflows for large `β·z`; kept only so the
/// verification harness can demonstrate that its finiteness checks fire.
pub fn softmax_unshifted(z: &[f64], beta: f64) -> Vec<f64> {
    let exps: Vec<f64> = z.iter().map(|x| (beta * x).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Scaled log-sum-exp `(1/β)·log Σ exp(β·zᵢ)`, overflow-safe.
pub fn lse(z: &[f64], beta: f64) -> Result<f64> {
    check_scores(z, beta)?;
    Ok(lse_unchecked(z, beta))
}

pub(crate) fn lse_unchecked(z: &[f64], beta: f64) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = z.iter().map(|x| (beta * (x - max)).exp()).sum();
    max + total.ln() / beta
}

/// Row-major `C × d` matrix of stored keys. Rows are not required to be unit
/// norm; the normalized codebook guarantees that separately.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl KeyMatrix {
    pub fn new(dim: usize) -> Self {
        KeyMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        KeyMatrix {
            dim,
            data: Vec::with_capacity(dim * rows),
        }
    }

    /// Builds a matrix from rows, checking that they share one dimension.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::EmptyInput)?;
        let mut m = KeyMatrix::with_capacity(dim, rows.len());
        for r in rows {
            m.push(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        check_finite(row)?;
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Keeps only the first `rows` rows.
    pub fn truncate(&mut self, rows: usize) {
        self.data.truncate(rows * self.dim);
    }

    /// Scores `a = qKᵀ`.
    pub fn scores(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_query(q)?;
        let mut out = vec![0.0; self.rows()];
        self.scores_into(q, &mut out);
        Ok(out)
    }

    pub(crate) fn scores_into(&self, q: &[f64], out: &mut [f64]) {
        for (o, k) in out.iter_mut().zip(self.iter_rows()) {
            *o = dot_unchecked(q, k);
        }
    }

    /// `wK`: weighted combination of rows.
    pub(crate) fn combine_into(&self, weights: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (&w, k) in weights.iter().zip(self.iter_rows()) {
            for (o, x) in out.iter_mut().zip(k) {
                *o += w * x;
            }
        }
    }

    pub(crate) fn check_query(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Number of stored floats.
    pub fn len_floats(&self) -> usize {
        self.data.len()
    }
}
