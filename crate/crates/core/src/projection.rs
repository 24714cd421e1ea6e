//! Random orthogonal projections between the ambient box and the low
//! dimensional search domain, plus the space-filling initial design.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::orthonormal_columns;
use crate::rng::{self, streams};
use crate::scalar::Real;

/// The ambient domain is always the centered unit box `[-1, 1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    dim: usize,
}

impl SearchSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidDimension("search space of dimension 0".into()));
        }
        Ok(SearchSpace { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains<T: Real>(&self, x: ArrayView1<T>) -> bool {
        x.len() == self.dim && x.iter().all(|&v| v >= -T::one() && v <= T::one())
    }

    pub fn clip<T: Real>(&self, x: ArrayView1<T>) -> Array1<T> {
        x.mapv(|v| v.max(-T::one()).min(T::one()))
    }
}

/// Row-orthonormal matrix `A` with `rows <= cols`, drawn uniformly over such
/// matrices. `project` applies `A`, `back_project` applies `Aᵀ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection<T: Real> {
    matrix: Array2<T>,
    seed: u64,
}

impl<T: Real> Projection<T> {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.matrix
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidDimension("identity projection of dimension 0".into()));
        }
        Ok(Projection { matrix: Array2::eye(dim), seed: 0 })
    }
}

/// Draw `A ∈ R^{rows×ambient}` uniformly from the row-orthonormal matrices:
/// QR of a standard Gaussian with the R-diagonal sign fixed, transposed.
/// `rows == ambient` yields a square orthogonal matrix.
pub fn sample_orthogonal<T: Real>(rows: usize, ambient: usize, seed: u64) -> Result<Projection<T>> {
    if rows == 0 || ambient == 0 {
        return Err(CoreError::InvalidDimension("projection with a zero dimension".into()));
    }
    if rows > ambient {
        return Err(CoreError::InvalidDimension(format!(
            "projection rows {rows} exceed ambient dimension {ambient}"
        )));
    }
    let mut rng = rng::stream(seed, streams::PROJECTION);
    let gauss = Array2::from_shape_fn((ambient, rows), |_| rng::standard_normal::<T, _>(&mut rng));
    let q = orthonormal_columns(gauss.view())?;
    Ok(Projection { matrix: q.t().to_owned(), seed })
}

/// `A x`, the low-dimensional image of an ambient point.
pub fn project<T: Real>(p: &Projection<T>, x: ArrayView1<T>) -> Result<Array1<T>> {
    if x.len() != p.ambient_dim() {
        return Err(CoreError::DimensionMismatch(format!(
            "point has length {}, projection expects {}",
            x.len(),
            p.ambient_dim()
        )));
    }
    Ok(p.matrix.dot(&x))
}

/// `Aᵀ z`, the ambient pre-image used for evaluation. `A (Aᵀ z) = z` because
/// the rows of `A` are orthonormal.
pub fn back_project<T: Real>(p: &Projection<T>, z: ArrayView1<T>) -> Result<Array1<T>> {
    if z.len() != p.rows() {
        return Err(CoreError::DimensionMismatch(format!(
            "point has length {}, projection expects {}",
            z.len(),
            p.rows()
        )));
    }
    Ok(p.matrix.t().dot(&z))
}

/// Latin hypercube design of `n` points in the search space: along every
/// dimension exactly one point falls in each of the `n` equal-width strata.
pub fn latin_hypercube<T: Real>(n: usize, space: &SearchSpace, seed: u64) -> Result<Vec<Array1<T>>> {
    if n == 0 {
        return Err(CoreError::EmptyDesign);
    }
    let mut rng = rng::stream(seed, streams::INITIAL_DESIGN);
    let dim = space.dim();
    let mut points = vec![Array1::zeros(dim); n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(&mut rng);
        for (i, point) in points.iter_mut().enumerate() {
            let u: T = rng::uniform(&mut rng, T::zero(), T::one());
            let frac = (T::of(strata[i] as f64) + u) / T::of(n as f64);
            point[d] = -T::one() + T::of(2.0) * frac;
        }
    }
    Ok(points)
}
