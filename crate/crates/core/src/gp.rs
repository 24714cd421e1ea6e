//! Gaussian process regression with the squared-exponential kernel
//! `k(z, z') = s·exp(−a²‖z−z'‖²)`, Cholesky-factorized, with MAP
//! hyperparameter selection under a gamma prior on the inverse lengthscale
//! `a`. Targets are centered on their mean and the signal variance absorbs
//! their scale, so predictions come back in natural units.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{cholesky_lower, sq_dist, solve_lower, solve_lower_transpose};
use crate::rng::{self, streams};
use crate::scalar::Real;
use crate::stats::gamma_log_density;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Kernel<T: Real> {
    /// Inverse lengthscale `a`; larger means faster decay.
    pub lengthscale: T,
    pub signal: T,
}

impl<T: Real> Kernel<T> {
    pub fn new(lengthscale: T, signal: T) -> Result<Self> {
        if !(lengthscale > T::zero()) || !(signal > T::zero()) {
            return Err(CoreError::InvalidArgument(
                "kernel parameters must be positive".into(),
            ));
        }
        Ok(Kernel { lengthscale, signal })
    }

    pub fn eval(&self, a: ArrayView1<T>, b: ArrayView1<T>) -> T {
        let a2 = self.lengthscale * self.lengthscale;
        self.signal * (-a2 * sq_dist(a, b)).exp()
    }
}

/// Shape-rate gamma prior on the inverse lengthscale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaPrior<T: Real> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> Default for GammaPrior<T> {
    fn default() -> Self {
        GammaPrior { shape: T::one(), rate: T::of(0.15) }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
pub struct FitOptions {
    /// Pin the signal variance at 1 instead of learning it.
    pub pin_signal: bool,
}

const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Cholesky with escalating relative jitter on the diagonal.
fn cholesky_with_jitter<T: Real>(k: &Array2<T>) -> Result<Array2<T>> {
    let n = k.nrows();
    let mean_diag = (0..n).map(|i| k[(i, i)]).fold(T::zero(), |a, v| a + v) / T::of(n as f64);
    let base = mean_diag.max(T::of(1e-12));
    let mut attempts = 0;
    for &jit in &JITTER_LADDER {
        let mut kj = k.clone();
        if jit > 0.0 {
            let add = base * T::of(jit);
            for i in 0..n {
                kj[(i, i)] = kj[(i, i)] + add;
            }
        }
        match cholesky_lower(kj.view()) {
            Ok(l) => return Ok(l),
            Err(_) => attempts += 1,
        }
    }
    Err(CoreError::FactorizationFailure { attempts })
}

#[derive(Debug, Clone)]
pub struct GpModel<T: Real> {
    inputs: Array2<T>,
    targets: Array1<T>,
    kernel: Kernel<T>,
    noise: T,
    prior_mean: T,
    chol: Option<Array2<T>>,
    alpha: Option<Array1<T>>,
}

impl<T: Real> GpModel<T> {
    /// Build and factorize. `inputs` is n×dim; n = 0 gives the prior.
    pub fn new(
        inputs: Array2<T>,
        targets: Array1<T>,
        kernel: Kernel<T>,
        noise: T,
        prior_mean: T,
    ) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} inputs vs {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if noise < T::zero() {
            return Err(CoreError::InvalidArgument("negative noise variance".into()));
        }
        let mut model = GpModel { inputs, targets, kernel, noise, prior_mean, chol: None, alpha: None };
        if model.len() > 0 {
            let k = model.train_covariance();
            let l = cholesky_with_jitter(&k)?;
            let resid = model.targets.mapv(|y| y - model.prior_mean);
            let alpha = solve_lower_transpose(l.view(), solve_lower(l.view(), resid.view()).view());
            model.chol = Some(l);
            model.alpha = Some(alpha);
        }
        Ok(model)
    }

    /// Same as `new` with the prior mean set to the target average.
    pub fn with_centered_mean(
        inputs: Array2<T>,
        targets: Array1<T>,
        kernel: Kernel<T>,
        noise: T,
    ) -> Result<Self> {
        let mean = if targets.is_empty() {
            T::zero()
        } else {
            targets.sum() / T::of(targets.len() as f64)
        };
        Self::new(inputs, targets, kernel, noise, mean)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> ArrayView2<'_, T> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView1<'_, T> {
        self.targets.view()
    }

    pub fn kernel(&self) -> Kernel<T> {
        self.kernel
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    pub fn prior_mean(&self) -> T {
        self.prior_mean
    }

    fn train_covariance(&self) -> Array2<T> {
        let n = self.len();
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            k[(i, i)] = self.kernel.signal + self.noise;
            for j in 0..i {
                let v = self.kernel.eval(self.inputs.row(i), self.inputs.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    fn cross_covariance(&self, z: ArrayView1<T>) -> Array1<T> {
        Array1::from_shape_fn(self.len(), |i| self.kernel.eval(self.inputs.row(i), z))
    }

    /// Posterior mean and (noise-free) variance at a query point. Variance is
    /// clamped to zero from below; round-off can push it slightly negative.
    pub fn posterior(&self, z: ArrayView1<T>) -> Result<(T, T)> {
        if self.len() == 0 {
            return Ok((self.prior_mean, self.kernel.signal));
        }
        if z.len() != self.dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "query length {} vs input dim {}",
                z.len(),
                self.dim()
            )));
        }
        let k_star = self.cross_covariance(z);
        let alpha = self.alpha.as_ref().expect("factorized");
        let l = self.chol.as_ref().expect("factorized");
        let mean = self.prior_mean + k_star.dot(alpha);
        let v = solve_lower(l.view(), k_star.view());
        let var = self.kernel.signal - v.dot(&v);
        Ok((mean, var.max(T::zero())))
    }

    /// Negative log marginal likelihood of the residuals `y − μ₀`:
    /// `½ rᵀ(K+σ²I)⁻¹r + ½ log det(K+σ²I) + (n/2) log 2π`.
    pub fn neg_log_marginal_likelihood(&self) -> Result<T> {
        if self.len() == 0 {
            return Err(CoreError::InvalidArgument("likelihood of an empty model".into()));
        }
        let l = self.chol.as_ref().expect("factorized");
        let alpha = self.alpha.as_ref().expect("factorized");
        let resid = self.targets.mapv(|y| y - self.prior_mean);
        let data_fit = resid.dot(alpha) / T::of(2.0);
        let mut log_det_half = T::zero();
        for i in 0..self.len() {
            log_det_half = log_det_half + l[(i, i)].ln();
        }
        let tau = T::of((2.0 * std::f64::consts::PI).ln() / 2.0);
        Ok(data_fit + log_det_half + tau * T::of(self.len() as f64))
    }

    /// Posterior mean vector and covariance factor at several points, for
    /// repeated joint sampling.
    pub fn posterior_factor(&self, points: ArrayView2<T>) -> Result<PosteriorFactor<T>> {
        let k = points.nrows();
        if points.ncols() != self.dim() && self.len() > 0 {
            return Err(CoreError::DimensionMismatch("query dimension".into()));
        }
        let mut mean = Array1::zeros(k);
        let mut cov = Array2::zeros((k, k));
        if self.len() == 0 {
            mean.fill(self.prior_mean);
            for i in 0..k {
                cov[(i, i)] = self.kernel.signal;
                for j in 0..i {
                    let v = self.kernel.eval(points.row(i), points.row(j));
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
        } else {
            let l = self.chol.as_ref().expect("factorized");
            let alpha = self.alpha.as_ref().expect("factorized");
            // V column p solves L v = k*(p); cov = K(P,P) − VᵀV.
            let mut vs = Array2::zeros((self.len(), k));
            for p in 0..k {
                let k_star = self.cross_covariance(points.row(p));
                mean[p] = self.prior_mean + k_star.dot(alpha);
                let v = solve_lower(l.view(), k_star.view());
                vs.column_mut(p).assign(&v);
            }
            for i in 0..k {
                for j in 0..=i {
                    let prior = if i == j {
                        self.kernel.signal
                    } else {
                        self.kernel.eval(points.row(i), points.row(j))
                    };
                    let v = prior - vs.column(i).dot(&vs.column(j));
                    cov[(i, j)] = v;
                    cov[(j, i)] = v;
                }
            }
        }
        let chol = cholesky_with_jitter(&cov)?;
        Ok(PosteriorFactor { mean, chol })
    }

    /// One joint posterior draw at `points`.
    pub fn posterior_sample(&self, points: ArrayView2<T>, seed: u64) -> Result<Array1<T>> {
        let factor = self.posterior_factor(points)?;
        let mut rng = rng::stream(seed, streams::POSTERIOR);
        Ok(factor.draw(&mut rng))
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorFactor<T: Real> {
    mean: Array1<T>,
    chol: Array2<T>,
}

impl<T: Real> PosteriorFactor<T> {
    pub fn mean(&self) -> ArrayView1<'_, T> {
        self.mean.view()
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Array1<T> {
        let k = self.mean.len();
        let xi = Array1::from_shape_fn(k, |_| rng::standard_normal::<T, _>(rng));
        &self.mean + &self.chol.dot(&xi)
    }
}

const NOISE_FLOOR: f64 = 1e-6;
// Exponential prior rate on the noise-to-signal ratio. Without it the MAP fit
// on clustered observations can collapse to a nugget model (short lengthscale,
// everything explained as noise), which flattens the posterior mean through
// the data and zeroes the acquisition. The penalty is constant in n, so
// strongly noisy data still overrides it.
const NOISE_PRIOR_RATE: f64 = 30.0;

/// MAP refit of the kernel on the model's own data: multi-start log-spaced
/// scan of the inverse lengthscale over [1e-3, 1e3] crossed with a
/// noise-ratio grid, golden-section refinement of both, signal variance
/// concentrated out in closed form (or pinned at 1). Deterministic.
pub fn fit_map<T: Real>(
    model: &GpModel<T>,
    prior: &GammaPrior<T>,
    options: &FitOptions,
) -> Result<GpModel<T>> {
    fit_data(model.inputs.clone(), model.targets.clone(), prior, options)
}

/// `fit_map` without an existing model.
pub fn fit_data<T: Real>(
    inputs: Array2<T>,
    targets: Array1<T>,
    prior: &GammaPrior<T>,
    options: &FitOptions,
) -> Result<GpModel<T>> {
    let n = inputs.nrows();
    if n < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "hyperparameter fit needs at least 2 observations, got {n}"
        )));
    }
    if targets.len() != n {
        return Err(CoreError::DimensionMismatch("targets".into()));
    }

    let mean = targets.sum() / T::of(n as f64);
    let resid = targets.mapv(|y| y - mean);
    let var_y = (resid.dot(&resid) / T::of((n - 1) as f64)).max(T::of(1e-12));
    // Standardized residuals; their scale re-enters through the signal.
    let r_std = if options.pin_signal { resid.clone() } else { resid.mapv(|v| v / var_y.sqrt()) };

    let mut dist2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let d = sq_dist(inputs.row(i), inputs.row(j));
            dist2[(i, j)] = d;
            dist2[(j, i)] = d;
        }
    }

    let score = |log_a: f64, log_ratio: f64| -> Option<(f64, f64)> {
        let a = T::of(log_a.exp());
        let ratio = T::of(log_ratio.exp());
        let a2 = a * a;
        let mut m = dist2.mapv(|d| (-a2 * d).exp());
        for i in 0..n {
            m[(i, i)] = T::one() + ratio;
        }
        let l = cholesky_with_jitter(&m).ok()?;
        let u = solve_lower(l.view(), r_std.view());
        let quad = u.dot(&u).as_f64();
        let mut log_det_half = 0.0;
        for i in 0..n {
            log_det_half += l[(i, i)].as_f64().ln();
        }
        let nf = n as f64;
        let tau = (2.0 * std::f64::consts::PI).ln();
        let (nlml, s_hat) = if options.pin_signal {
            (0.5 * quad + log_det_half + 0.5 * nf * tau, 1.0)
        } else {
            let s_hat = (quad / nf).max(1e-8);
            (0.5 * nf * s_hat.ln() + log_det_half + 0.5 * nf + 0.5 * nf * tau, s_hat)
        };
        let log_prior = gamma_log_density(a, prior.shape, prior.rate).as_f64();
        let noise_prior = -NOISE_PRIOR_RATE * ratio.as_f64();
        Some((-nlml + log_prior + noise_prior, s_hat))
    };

    const A_POINTS: usize = 25;
    const R_POINTS: usize = 9;
    let a_lo = (1e-3f64).ln();
    let a_hi = (1e3f64).ln();
    let a_step = (a_hi - a_lo) / (A_POINTS - 1) as f64;
    // Ratio floor 1e-4: razor-thin noise on clustered inputs makes the
    // interpolation weights blow up and the posterior mean overshoot wildly
    // between observations, which the acquisition then chases.
    let r_lo = (1e-4f64).ln();
    let r_hi = 0.0f64;
    let r_step = (r_hi - r_lo) / (R_POINTS - 1) as f64;

    let mut best: Option<(f64, f64, f64, f64)> = None; // (score, log_a, log_ratio, s_hat)
    for ia in 0..A_POINTS {
        let log_a = a_lo + a_step * ia as f64;
        for ir in 0..R_POINTS {
            let log_ratio = r_lo + r_step * ir as f64;
            if let Some((s, s_hat)) = score(log_a, log_ratio) {
                if best.map_or(true, |(bs, ..)| s > bs) {
                    best = Some((s, log_a, log_ratio, s_hat));
                }
            }
        }
    }
    let (_, mut log_a, mut log_ratio, _) =
        best.ok_or(CoreError::FactorizationFailure { attempts: A_POINTS * R_POINTS })?;

    // Golden-section refinement, one pass per coordinate.
    let golden = |lo: f64, hi: f64, eval: &dyn Fn(f64) -> f64| -> f64 {
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (lo, hi);
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let mut f1 = eval(x1);
        let mut f2 = eval(x2);
        for _ in 0..28 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1);
            }
        }
        0.5 * (lo + hi)
    };

    let lr = log_ratio;
    log_a = golden((log_a - a_step).max(a_lo), (log_a + a_step).min(a_hi), &|la| {
        score(la, lr).map_or(f64::NEG_INFINITY, |(s, _)| s)
    });
    let la = log_a;
    log_ratio = golden((log_ratio - r_step).max(r_lo), (log_ratio + r_step).min(r_hi), &|lrr| {
        score(la, lrr).map_or(f64::NEG_INFINITY, |(s, _)| s)
    });

    let (_, s_hat) = score(log_a, log_ratio)
        .ok_or(CoreError::FactorizationFailure { attempts: JITTER_LADDER.len() })?;

    let (signal, noise) = if options.pin_signal {
        (T::one(), T::of(log_ratio.exp()).max(T::of(NOISE_FLOOR)))
    } else {
        let signal = T::of(s_hat) * var_y;
        let noise = (T::of(log_ratio.exp()) * signal).max(T::of(NOISE_FLOOR));
        (signal, noise)
    };
    let kernel = Kernel::new(T::of(log_a.exp()), signal)?;
    GpModel::new(inputs, targets, kernel, noise, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn unit_kernel() -> Kernel<f64> {
        Kernel::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_model_returns_the_prior() {
        let model = GpModel::new(
            Array2::zeros((0, 2)),
            Array1::zeros(0),
            unit_kernel(),
            0.0,
            0.0,
        )
        .unwrap();
        let (m, v) = model.posterior(array![0.3, -0.2].view()).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn single_noiseless_point_is_interpolated() {
        let model = GpModel::new(
            array![[0.5, -0.5]],
            array![2.0],
            unit_kernel(),
            0.0,
            0.0,
        )
        .unwrap();
        let (m, v) = model.posterior(array![0.5, -0.5].view()).unwrap();
        assert!((m - 2.0).abs() < 1e-10);
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn likelihood_of_single_standard_point() {
        let model = GpModel::new(
            array![[0.0]],
            array![0.0],
            unit_kernel(),
            0.0,
            0.0,
        )
        .unwrap();
        let want = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((model.neg_log_marginal_likelihood().unwrap() - want).abs() < 1e-12);

        let model = GpModel::new(array![[0.0]], array![1.5], unit_kernel(), 0.0, 0.0).unwrap();
        let want = 0.5 * 1.5f64 * 1.5 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((model.neg_log_marginal_likelihood().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn posterior_variance_never_negative() {
        let mut rng = rng::stream(3, 0);
        let inputs = Array2::from_shape_fn((12, 3), |_| rng::uniform(&mut rng, -1.0, 1.0));
        let targets = Array1::from_shape_fn(12, |_| rng::standard_normal::<f64, _>(&mut rng));
        let model =
            GpModel::with_centered_mean(inputs, targets, Kernel::new(3.0, 1.0).unwrap(), 1e-6)
                .unwrap();
        for _ in 0..200 {
            let z = Array1::from_shape_fn(3, |_| rng::uniform(&mut rng, -1.0, 1.0));
            let (_, v) = model.posterior(z.view()).unwrap();
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn map_fit_recovers_a_known_lengthscale() {
        let truth = Kernel::new(1.0, 1.0).unwrap();
        let mut rng = rng::stream(17, 0);
        let inputs = Array2::from_shape_fn((40, 2), |_| rng::uniform(&mut rng, -1.0, 1.0));
        let mut cov = Array2::zeros((40, 40));
        for i in 0..40 {
            for j in 0..40 {
                cov[(i, j)] = truth.eval(inputs.row(i), inputs.row(j));
            }
        }
        for i in 0..40 {
            cov[(i, i)] += 1e-8;
        }
        let l = cholesky_lower(cov.view()).unwrap();
        let xi = Array1::from_shape_fn(40, |_| rng::standard_normal::<f64, _>(&mut rng));
        let targets = l.dot(&xi);

        let fitted =
            fit_data(inputs, targets, &GammaPrior::default(), &FitOptions::default()).unwrap();
        let a = fitted.kernel().lengthscale;
        assert!(a > 0.5 && a < 2.0, "recovered inverse lengthscale {a}");
    }

    #[test]
    fn fit_requires_two_points() {
        let err = fit_data(
            array![[0.0]],
            array![1.0],
            &GammaPrior::<f64>::default(),
            &FitOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn posterior_sampling_is_seeded_and_consistent() {
        let model = GpModel::with_centered_mean(
            array![[0.0], [0.5], [-0.5]],
            array![1.0, 0.0, 2.0],
            unit_kernel(),
            1e-4,
        )
        .unwrap();
        let pts = array![[0.1], [0.2]];
        let s1 = model.posterior_sample(pts.view(), 5).unwrap();
        let s2 = model.posterior_sample(pts.view(), 5).unwrap();
        let s3 = model.posterior_sample(pts.view(), 6).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1, s3);
    }
}
