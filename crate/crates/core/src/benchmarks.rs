//! Synthetic test functions and their composition with low-dimensional
//! structures embedded in a high-dimensional cube.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::feature_map::FeatureMap;
use crate::manifold::{LinearMap, MixedOracle, SphereMap};
use crate::projection::sample_orthogonal;
use crate::rng::{self, streams};
use crate::scalar::Real;

/// Anything a runner can evaluate. Implementations are noiseless; observation
/// noise is applied by the caller.
pub trait Objective<T: Real>: Sync {
    fn ambient_dim(&self) -> usize;
    fn evaluate(&self, x: ArrayView1<T>) -> Result<T>;
}

/// Objective wrapping a plain function, for tests and toy problems.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnObjective { dim, f }
    }
}

impl<T: Real, F: Fn(ArrayView1<T>) -> T + Sync> Objective<T> for FnObjective<F> {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: ArrayView1<T>) -> Result<T> {
        if x.len() != self.dim {
            return Err(CoreError::DimensionMismatch(format!(
                "objective expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok((self.f)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Ackley,
    RotatedHyperEllipsoid,
    Levy,
}

/// A low-dimensional function with a known global minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseFunction {
    kind: BaseKind,
    dim: usize,
}

impl BaseFunction {
    pub fn new(kind: BaseKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::InvalidDimension("base function needs dimension >= 1".into()));
        }
        Ok(BaseFunction { kind, dim })
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Known global minimizer (zero vector; all-ones for Levy).
    pub fn minimizer<T: Real>(&self) -> Array1<T> {
        match self.kind {
            BaseKind::Levy => Array1::from_elem(self.dim, T::one()),
            _ => Array1::zeros(self.dim),
        }
    }

    pub fn eval<T: Real>(&self, z: ArrayView1<T>) -> Result<T> {
        if z.len() != self.dim {
            return Err(CoreError::DimensionMismatch(format!(
                "base function of dimension {} applied to a length-{} vector",
                self.dim,
                z.len()
            )));
        }
        let d = T::of(self.dim as f64);
        Ok(match self.kind {
            BaseKind::Ackley => {
                let sq = z.iter().map(|&v| v * v).fold(T::zero(), |a, v| a + v);
                let two_pi = T::of(2.0 * std::f64::consts::PI);
                let cs = z.iter().map(|&v| (two_pi * v).cos()).fold(T::zero(), |a, v| a + v);
                let e = T::of(std::f64::consts::E);
                -T::of(20.0) * (-T::of(0.2) * (sq / d).sqrt()).exp() - (cs / d).exp()
                    + T::of(20.0)
                    + e
            }
            BaseKind::RotatedHyperEllipsoid => {
                // Coordinate j appears in every partial sum from j onward.
                z.iter()
                    .enumerate()
                    .map(|(j, &v)| T::of((self.dim - j) as f64) * v * v)
                    .fold(T::zero(), |a, v| a + v)
            }
            BaseKind::Levy => {
                let pi = T::of(std::f64::consts::PI);
                let w = |v: T| T::one() + (v - T::one()) / T::of(4.0);
                let w1 = w(z[0]);
                let mut total = (pi * w1).sin().powi(2);
                for i in 0..self.dim - 1 {
                    let wi = w(z[i]);
                    let s = (pi * wi + T::one()).sin();
                    total = total
                        + (wi - T::one()).powi(2) * (T::one() + T::of(10.0) * s * s);
                }
                let wd = w(z[self.dim - 1]);
                let s = (T::of(2.0) * pi * wd).sin();
                total + (wd - T::one()).powi(2) * (T::one() + s * s)
            }
        })
    }
}

/// How the low-dimensional structure sits inside the ambient cube. The
/// `latent_dim` of each variant is the dimension the base function sees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "structure", rename_all = "kebab-case")]
pub enum Structure<T: Real> {
    /// Unit-normalized block of d+1 active coordinates.
    Sphere { d: usize },
    /// d1 unit-normalized coordinate pairs followed by d2 free coordinates.
    Mixed { d1: usize, d2: usize },
    /// Row-orthonormal rotation applied to the full vector.
    Linear { rotation: Array2<T> },
}

impl<T: Real> Structure<T> {
    pub fn latent_dim(&self) -> usize {
        match self {
            Structure::Sphere { d } => d + 1,
            Structure::Mixed { d1, d2 } => 2 * d1 + d2,
            Structure::Linear { rotation } => rotation.nrows(),
        }
    }

    /// Ambient coordinates the value can depend on. Linear structures touch
    /// everything.
    fn active_count(&self) -> Option<usize> {
        match self {
            Structure::Sphere { d } => Some(d + 1),
            Structure::Mixed { d1, d2 } => Some(2 * d1 + d2),
            Structure::Linear { .. } => None,
        }
    }
}

/// High-dimensional objective `x ↦ base(latent(x)) (+ noise)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComposedObjective<T: Real> {
    base: BaseFunction,
    structure: Structure<T>,
    ambient: usize,
    /// Axes carrying the active coordinates, in latent order. Unused for
    /// linear structures.
    axes: Vec<usize>,
    noise_sd: T,
    /// Optional affine stretch of the latent point before the base function.
    latent_scale: Option<T>,
}

impl<T: Real> ComposedObjective<T> {
    pub fn new(base: BaseFunction, structure: Structure<T>, ambient: usize) -> Result<Self> {
        if base.dim() != structure.latent_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "base dimension {} vs structure latent dimension {}",
                base.dim(),
                structure.latent_dim()
            )));
        }
        let axes = match structure.active_count() {
            Some(k) => {
                if k > ambient {
                    return Err(CoreError::InvalidDimension(format!(
                        "{k} active coordinates do not fit in ambient dimension {ambient}"
                    )));
                }
                (0..k).collect()
            }
            None => {
                let rotation = match &structure {
                    Structure::Linear { rotation } => rotation,
                    _ => unreachable!(),
                };
                if rotation.ncols() != ambient {
                    return Err(CoreError::DimensionMismatch(format!(
                        "rotation has {} columns, ambient dimension is {ambient}",
                        rotation.ncols()
                    )));
                }
                if rotation.nrows() > ambient {
                    return Err(CoreError::InvalidDimension(
                        "rotation has more rows than columns".into(),
                    ));
                }
                for i in 0..rotation.nrows() {
                    for j in 0..=i {
                        let dot = rotation
                            .row(i)
                            .iter()
                            .zip(rotation.row(j).iter())
                            .map(|(&a, &b)| a * b)
                            .fold(T::zero(), |acc, v| acc + v);
                        let want = if i == j { T::one() } else { T::zero() };
                        if (dot - want).abs() > T::of(1e-8) {
                            return Err(CoreError::InvalidArgument(
                                "rotation rows are not orthonormal".into(),
                            ));
                        }
                    }
                }
                Vec::new()
            }
        };
        Ok(ComposedObjective { base, structure, ambient, axes, noise_sd: T::zero(), latent_scale: None })
    }

    pub fn with_noise(mut self, sd: T) -> Result<Self> {
        if sd < T::zero() {
            return Err(CoreError::InvalidArgument("negative noise level".into()));
        }
        self.noise_sd = sd;
        Ok(self)
    }

    pub fn with_latent_scale(mut self, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(CoreError::InvalidArgument("latent scale must be positive".into()));
        }
        self.latent_scale = Some(scale);
        Ok(self)
    }

    /// Scatter the active coordinates over random axes instead of the leading
    /// block. Linear structures have no axes and are rejected.
    pub fn with_permuted_axes(mut self, seed: u64) -> Result<Self> {
        let k = self.axes.len();
        if k == 0 {
            return Err(CoreError::InvalidArgument(
                "linear structures have no active axes to permute".into(),
            ));
        }
        let mut all: Vec<usize> = (0..self.ambient).collect();
        all.shuffle(&mut rng::stream(seed, streams::BENCH_AXES));
        all.truncate(k);
        self.axes = all;
        Ok(self)
    }

    pub fn base(&self) -> &BaseFunction {
        &self.base
    }

    pub fn structure(&self) -> &Structure<T> {
        &self.structure
    }

    pub fn noise_sd(&self) -> T {
        self.noise_sd
    }

    pub fn active_axes(&self) -> &[usize] {
        &self.axes
    }

    /// Latent coordinates the base function is applied to.
    pub fn latent(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        if x.len() != self.ambient {
            return Err(CoreError::DimensionMismatch(format!(
                "objective expects dimension {}, got {}",
                self.ambient,
                x.len()
            )));
        }
        let tiny = T::of(1e-12);
        match &self.structure {
            Structure::Sphere { d } => {
                let mut w = Array1::zeros(d + 1);
                for (i, &ax) in self.axes.iter().enumerate() {
                    w[i] = x[ax];
                }
                let n = w.iter().map(|&v| v * v).fold(T::zero(), |a, v| a + v).sqrt();
                if n <= tiny {
                    return Err(CoreError::SingularProjection(
                        "sphere coordinates undefined at the center".into(),
                    ));
                }
                Ok(w.mapv(|v| v / n))
            }
            Structure::Mixed { d1, d2 } => {
                let mut z = Array1::zeros(2 * d1 + d2);
                for p in 0..*d1 {
                    let a = x[self.axes[2 * p]];
                    let b = x[self.axes[2 * p + 1]];
                    let rho = (a * a + b * b).sqrt();
                    if rho <= tiny {
                        return Err(CoreError::SingularProjection(format!(
                            "circle pair {p} undefined at the origin"
                        )));
                    }
                    z[2 * p] = a / rho;
                    z[2 * p + 1] = b / rho;
                }
                for j in 0..*d2 {
                    z[2 * d1 + j] = x[self.axes[2 * d1 + j]];
                }
                Ok(z)
            }
            Structure::Linear { rotation } => Ok(rotation.dot(&x)),
        }
    }

    pub fn eval_noiseless(&self, x: ArrayView1<T>) -> Result<T> {
        let mut z = self.latent(x)?;
        if let Some(s) = self.latent_scale {
            z.mapv_inplace(|v| v * s);
        }
        self.base.eval(z.view())
    }

    /// Noisy observation. A zero noise level consumes nothing from `rng`.
    pub fn eval_observed<R: Rng>(&self, x: ArrayView1<T>, rng: &mut R) -> Result<T> {
        let f = self.eval_noiseless(x)?;
        if self.noise_sd > T::zero() {
            Ok(f + self.noise_sd * rng::standard_normal(rng))
        } else {
            Ok(f)
        }
    }

    /// Exact projection onto the structure's manifold, as a feature map. This
    /// is the ground-truth counterpart of the trained maps.
    pub fn oracle_map(&self) -> Result<FeatureMap<T>> {
        match &self.structure {
            Structure::Sphere { d } => {
                let mut basis = Array2::zeros((self.ambient, d + 1));
                for (i, &ax) in self.axes.iter().enumerate() {
                    basis[(ax, i)] = T::one();
                }
                Ok(FeatureMap::Sphere(SphereMap::new(basis, T::one(), Array1::zeros(d + 1))?))
            }
            Structure::Mixed { d1, d2 } => Ok(FeatureMap::Mixed(MixedOracle::with_axes(
                *d1,
                *d2,
                self.ambient,
                self.axes.clone(),
            )?)),
            Structure::Linear { rotation } => {
                Ok(FeatureMap::Linear(LinearMap::new(rotation.t().to_owned())?))
            }
        }
    }
}

impl<T: Real> Objective<T> for ComposedObjective<T> {
    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn evaluate(&self, x: ArrayView1<T>) -> Result<T> {
        self.eval_noiseless(x)
    }
}

/// Objective `g(Rx)` with a seeded row-orthonormal rotation.
pub fn make_linear_objective<T: Real>(
    kind: BaseKind,
    ambient: usize,
    d: usize,
    seed: u64,
) -> Result<ComposedObjective<T>> {
    let rotation = sample_orthogonal::<T>(d, ambient, seed)?.matrix().to_owned();
    ComposedObjective::new(BaseFunction::new(kind, d)?, Structure::Linear { rotation }, ambient)
}

/// Parse an instance id like `ackley-sphere-D500-d10`. Bases: `ackley`,
/// `rhe`, `levy`. Structures: `sphere`, `mixed` (d split as d1 = d/3,
/// d2 = d - d1), `linear`. Linear rotations are fixed per (D, d).
pub fn parse_objective<T: Real>(id: &str) -> Result<ComposedObjective<T>> {
    let bad = || CoreError::UnknownObjective(id.to_string());
    let parts: Vec<&str> = id.split('-').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let kind = match parts[0] {
        "ackley" => BaseKind::Ackley,
        "rhe" => BaseKind::RotatedHyperEllipsoid,
        "levy" => BaseKind::Levy,
        _ => return Err(bad()),
    };
    let ambient: usize = parts[2].strip_prefix('D').and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let d: usize = parts[3].strip_prefix('d').and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if ambient == 0 || d == 0 {
        return Err(bad());
    }
    match parts[1] {
        "sphere" => ComposedObjective::new(
            BaseFunction::new(kind, d + 1)?,
            Structure::Sphere { d },
            ambient,
        ),
        "mixed" => {
            let d1 = d / 3;
            let d2 = d - d1;
            if d1 == 0 {
                return Err(bad());
            }
            ComposedObjective::new(
                BaseFunction::new(kind, 2 * d1 + d2)?,
                Structure::Mixed { d1, d2 },
                ambient,
            )
        }
        "linear" => {
            let seed = (100_000 * ambient + d) as u64;
            make_linear_objective(kind, ambient, d, seed)
        }
        _ => Err(bad()),
    }
}
