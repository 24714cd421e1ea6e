//! Closed-form feature maps onto low-dimensional structures embedded in the
//! ambient box: linear subspaces, spheres, and products of circles with free
//! coordinates. Each map is an exact projection, so re-applying it (or
//! applying it anywhere on a segment between a point and its image) changes
//! nothing; tests lean on that identity.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::orthonormal_columns;
use crate::rng::{self, streams};
use crate::scalar::Real;

/// Gradients of `upstreamᵀ h(x)`: flattened parameter gradient plus the
/// gradient with respect to the input point.
#[derive(Debug, Clone)]
pub struct MapBackward<T: Real> {
    pub param_grad: Vec<T>,
    pub input_grad: Array1<T>,
}

fn check_orthonormal<T: Real>(basis: &Array2<T>, tol: f64) -> Result<()> {
    let gram = basis.t().dot(basis);
    let k = gram.nrows();
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { T::one() } else { T::zero() };
            if (gram[(i, j)] - want).abs() > T::of(tol) {
                return Err(CoreError::InvalidArgument(
                    "basis columns are not orthonormal".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Orthogonal projection onto the span of `basis`: `x ↦ B Bᵀ x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearMap<T: Real> {
    basis: Array2<T>,
}

impl<T: Real> LinearMap<T> {
    pub fn new(basis: Array2<T>) -> Result<Self> {
        if basis.ncols() == 0 || basis.ncols() > basis.nrows() {
            return Err(CoreError::InvalidDimension(format!(
                "basis of shape {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        check_orthonormal(&basis, 1e-8)?;
        Ok(LinearMap { basis })
    }

    pub fn from_seed(ambient: usize, latent: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, streams::MAP_INIT);
        let gauss =
            Array2::from_shape_fn((ambient, latent), |_| rng::standard_normal::<T, _>(&mut rng));
        Ok(LinearMap { basis: orthonormal_columns(gauss.view())? })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Array2<T> {
        &self.basis
    }

    pub fn apply(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_point(x)?;
        Ok(self.basis.dot(&self.basis.t().dot(&x)))
    }

    pub fn backward(&self, x: ArrayView1<T>, upstream: ArrayView1<T>) -> Result<MapBackward<T>> {
        self.check_point(x)?;
        let bt_x = self.basis.t().dot(&x);
        let bt_g = self.basis.t().dot(&upstream);
        let (d, k) = self.basis.dim();
        let mut grad = vec![T::zero(); d * k];
        for i in 0..d {
            for j in 0..k {
                grad[i * k + j] = upstream[i] * bt_x[j] + x[i] * bt_g[j];
            }
        }
        let input_grad = self.basis.dot(&bt_g);
        Ok(MapBackward { param_grad: grad, input_grad })
    }

    pub fn param_count(&self) -> usize {
        self.basis.len()
    }

    pub fn params(&self) -> Vec<T> {
        self.basis.iter().copied().collect()
    }

    /// Writes parameters verbatim; call `re_orthonormalize` afterwards to
    /// restore the basis invariant (the optimizer does this once per step).
    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.basis.len() {
            return Err(CoreError::DimensionMismatch("parameter count".into()));
        }
        for (slot, &v) in self.basis.iter_mut().zip(p) {
            *slot = v;
        }
        Ok(())
    }

    pub fn re_orthonormalize(&mut self) -> Result<()> {
        self.basis = orthonormal_columns(self.basis.view())?;
        Ok(())
    }

    fn check_point(&self, x: ArrayView1<T>) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "point length {} vs ambient {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        Ok(())
    }
}

/// Radial projection onto a sphere of radius `r` centered at `B c`, living in
/// the span of `basis` (`d + 1` columns for a d-sphere):
/// `x ↦ B (r·(Bᵀx − c)/‖Bᵀx − c‖ + c)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereMap<T: Real> {
    basis: Array2<T>,
    radius: T,
    center: Array1<T>,
}

impl<T: Real> SphereMap<T> {
    pub fn new(basis: Array2<T>, radius: T, center: Array1<T>) -> Result<Self> {
        if basis.ncols() < 2 || basis.ncols() > basis.nrows() {
            return Err(CoreError::InvalidDimension(format!(
                "sphere basis of shape {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if center.len() != basis.ncols() {
            return Err(CoreError::DimensionMismatch("center length".into()));
        }
        if !(radius > T::zero()) {
            return Err(CoreError::InvalidArgument("sphere radius must be positive".into()));
        }
        check_orthonormal(&basis, 1e-8)?;
        Ok(SphereMap { basis, radius, center })
    }

    /// Unit sphere through a random orthonormal basis: radius 1, center 0.
    pub fn from_seed(ambient: usize, sphere_dim: usize, seed: u64) -> Result<Self> {
        let cols = sphere_dim + 1;
        let mut rng = rng::stream(seed, streams::MAP_INIT);
        let gauss =
            Array2::from_shape_fn((ambient, cols), |_| rng::standard_normal::<T, _>(&mut rng));
        let basis = orthonormal_columns(gauss.view())?;
        Ok(SphereMap { basis, radius: T::one(), center: Array1::zeros(cols) })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Dimension of the sphere itself (columns minus one).
    pub fn sphere_dim(&self) -> usize {
        self.basis.ncols() - 1
    }

    pub fn basis(&self) -> &Array2<T> {
        &self.basis
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn center(&self) -> &Array1<T> {
        &self.center
    }

    pub fn apply(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        let w = self.latent_offset(x)?;
        let norm = w.dot(&w).sqrt();
        if !(norm > T::of(1e-12)) {
            return Err(CoreError::SingularProjection(
                "point projects onto the sphere center".into(),
            ));
        }
        let y = w.mapv(|v| v * self.radius / norm) + &self.center;
        Ok(self.basis.dot(&y))
    }

    pub fn backward(&self, x: ArrayView1<T>, upstream: ArrayView1<T>) -> Result<MapBackward<T>> {
        let w = self.latent_offset(x)?;
        let norm = w.dot(&w).sqrt();
        if !(norm > T::of(1e-12)) {
            return Err(CoreError::SingularProjection(
                "point projects onto the sphere center".into(),
            ));
        }
        let w_hat = w.mapv(|v| v / norm);
        let y = w_hat.mapv(|v| v * self.radius) + &self.center;
        let gl = self.basis.t().dot(&upstream);
        let gl_dot_what = gl.dot(&w_hat);
        // d/dw of r·w/‖w‖ applied to gl: (r/‖w‖)(gl − ŵ(ŵᵀgl)).
        let dw = Array1::from_shape_fn(w.len(), |i| {
            self.radius / norm * (gl[i] - w_hat[i] * gl_dot_what)
        });
        let grad_radius = gl_dot_what;
        let grad_center = &gl - &dw;
        let (d, k) = self.basis.dim();
        // Layout: basis row-major, radius, center.
        let mut grad = vec![T::zero(); d * k + 1 + k];
        for i in 0..d {
            for j in 0..k {
                grad[i * k + j] = upstream[i] * y[j] + x[i] * dw[j];
            }
        }
        grad[d * k] = grad_radius;
        for j in 0..k {
            grad[d * k + 1 + j] = grad_center[j];
        }
        let input_grad = self.basis.dot(&dw);
        Ok(MapBackward { param_grad: grad, input_grad })
    }

    pub fn param_count(&self) -> usize {
        self.basis.len() + 1 + self.center.len()
    }

    pub fn params(&self) -> Vec<T> {
        let mut p: Vec<T> = self.basis.iter().copied().collect();
        p.push(self.radius);
        p.extend(self.center.iter().copied());
        p
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(CoreError::DimensionMismatch("parameter count".into()));
        }
        let nb = self.basis.len();
        for (slot, &v) in self.basis.iter_mut().zip(&p[..nb]) {
            *slot = v;
        }
        // The radius invariant is a clamp, not an error: gradient steps may
        // briefly push it nonpositive.
        self.radius = p[nb].max(T::of(1e-6));
        for (slot, &v) in self.center.iter_mut().zip(&p[nb + 1..]) {
            *slot = v;
        }
        Ok(())
    }

    pub fn re_orthonormalize(&mut self) -> Result<()> {
        self.basis = orthonormal_columns(self.basis.view())?;
        Ok(())
    }

    fn latent_offset(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        if x.len() != self.ambient_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "point length {} vs ambient {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        Ok(self.basis.t().dot(&x) - &self.center)
    }
}

/// Exact projection for a product structure on named coordinates: pairs of
/// coordinates are normalized onto unit circles, `free` coordinates pass
/// through, all remaining coordinates are zeroed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedOracle {
    circle_pairs: usize,
    free_coords: usize,
    ambient: usize,
    /// The `2·circle_pairs + free_coords` active axes: pair coordinates first
    /// (consecutive entries form a pair), then the free ones.
    active: Vec<usize>,
}

impl MixedOracle {
    pub fn new(circle_pairs: usize, free_coords: usize, ambient: usize) -> Result<Self> {
        let active: Vec<usize> = (0..2 * circle_pairs + free_coords).collect();
        Self::with_axes(circle_pairs, free_coords, ambient, active)
    }

    pub fn with_axes(
        circle_pairs: usize,
        free_coords: usize,
        ambient: usize,
        active: Vec<usize>,
    ) -> Result<Self> {
        let needed = 2 * circle_pairs + free_coords;
        if active.len() != needed {
            return Err(CoreError::InvalidArgument(format!(
                "{} active axes listed, {needed} required",
                active.len()
            )));
        }
        if needed > ambient {
            return Err(CoreError::InvalidDimension(format!(
                "{needed} active coordinates in ambient dimension {ambient}"
            )));
        }
        let mut seen = vec![false; ambient];
        for &a in &active {
            if a >= ambient {
                return Err(CoreError::InvalidArgument(format!("axis {a} out of range")));
            }
            if seen[a] {
                return Err(CoreError::InvalidArgument(format!("axis {a} listed twice")));
            }
            seen[a] = true;
        }
        Ok(MixedOracle { circle_pairs, free_coords, ambient, active })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn circle_pairs(&self) -> usize {
        self.circle_pairs
    }

    pub fn free_coords(&self) -> usize {
        self.free_coords
    }

    pub fn latent_dim(&self) -> usize {
        2 * self.circle_pairs + self.free_coords
    }

    pub fn active_axes(&self) -> &[usize] {
        &self.active
    }

    /// Latent coordinates: normalized circle pairs followed by the free
    /// coordinates.
    pub fn latent<T: Real>(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_point(x.len())?;
        let mut out = Array1::zeros(self.latent_dim());
        for p in 0..self.circle_pairs {
            let (u, v) = (x[self.active[2 * p]], x[self.active[2 * p + 1]]);
            let rho = (u * u + v * v).sqrt();
            if !(rho > T::of(1e-12)) {
                return Err(CoreError::SingularProjection(format!(
                    "circle pair {p} is at the origin"
                )));
            }
            out[2 * p] = u / rho;
            out[2 * p + 1] = v / rho;
        }
        for f in 0..self.free_coords {
            out[2 * self.circle_pairs + f] = x[self.active[2 * self.circle_pairs + f]];
        }
        Ok(out)
    }

    /// Ambient image: latent values written back to their axes, inactive
    /// coordinates zeroed.
    pub fn apply<T: Real>(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        let latent = self.latent(x)?;
        let mut out = Array1::zeros(self.ambient);
        for (slot, &axis) in self.active.iter().enumerate() {
            out[axis] = latent[slot];
        }
        Ok(out)
    }

    pub fn backward<T: Real>(
        &self,
        x: ArrayView1<T>,
        upstream: ArrayView1<T>,
    ) -> Result<MapBackward<T>> {
        self.check_point(x.len())?;
        let mut input_grad = Array1::zeros(self.ambient);
        for p in 0..self.circle_pairs {
            let (ai, bi) = (self.active[2 * p], self.active[2 * p + 1]);
            let (u, v) = (x[ai], x[bi]);
            let rho2 = u * u + v * v;
            let rho = rho2.sqrt();
            if !(rho > T::of(1e-12)) {
                return Err(CoreError::SingularProjection(format!(
                    "circle pair {p} is at the origin"
                )));
            }
            let (gu, gv) = (upstream[ai], upstream[bi]);
            let dot = (gu * u + gv * v) / rho2;
            input_grad[ai] = (gu - u * dot) / rho;
            input_grad[bi] = (gv - v * dot) / rho;
        }
        for f in 0..self.free_coords {
            let axis = self.active[2 * self.circle_pairs + f];
            input_grad[axis] = upstream[axis];
        }
        Ok(MapBackward { param_grad: Vec::new(), input_grad })
    }

    fn check_point(&self, len: usize) -> Result<()> {
        if len != self.ambient {
            return Err(CoreError::DimensionMismatch(format!(
                "point length {len} vs ambient {}",
                self.ambient
            )));
        }
        Ok(())
    }
}
