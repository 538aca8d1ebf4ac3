//! Vector primitives shared by every other module: the [`Embedding`]
//! newtype, Euclidean distances, and numerically stable scalar helpers.
//!
//! Distances are always the plain (non-squared) Euclidean norm. Nothing in
//! here normalizes vectors implicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, fixed-length feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps `values`, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Checks the stored length against an expected dimension.
    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        check_dims(dim, self.dim())
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Dense `rows x cols` matrix of distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.cols)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `||a - b||_2`.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
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

/// Distances from every query to every reference vector.
pub fn pairwise_distances<Q, R>(queries: &[Q], refs: &[R]) -> Result<DistanceMatrix>
where
    Q: AsRef<[f64]>,
    R: AsRef<[f64]>,
{
    if queries.is_empty() {
        return Err(Error::Empty("queries"));
    }
    if refs.is_empty() {
        return Err(Error::Empty("references"));
    }
    let dim = queries[0].as_ref().len();
    for v in queries
        .iter()
        .map(AsRef::as_ref)
        .chain(refs.iter().map(AsRef::as_ref))
    {
        check_dims(dim, v.len())?;
    }
    let mut entries = Vec::with_capacity(queries.len() * refs.len());
    for q in queries {
        for r in refs {
            entries.push(distance_unchecked(q.as_ref(), r.as_ref()));
        }
    }
    Ok(DistanceMatrix {
        rows: queries.len(),
        cols: refs.len(),
        entries,
    })
}

/// `ln(1 + e^x)` evaluated as `max(x, 0) + ln(1 + e^{-|x|})`.
#[inline]
pub fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function, written to avoid overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length in place and returns the original norm.
/// Zero vectors are left untouched.
pub fn l2_normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
