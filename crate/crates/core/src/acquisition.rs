//! Expected improvement and its maximization through the composed map
//! `z ↦ EI(A·h(Aᵀz))` over the low-dimensional box `[-w, w]^m`.

use std::cmp::Ordering;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::feature_map::FeatureMap;
use crate::gp::GpModel;
use crate::optimize::{minimize_box, HaltonStarts};
use crate::projection::{back_project, project, Projection};
use crate::rng::{self, streams};
use crate::scalar::Real;
use crate::stats::{std_normal_cdf, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    #[default]
    Minimize,
    Maximize,
}

/// Closed-form expected improvement over the incumbent `f_star`:
/// `σ·φ(u) + Δ·Φ(u)` with `u = Δ/σ`, where `Δ` is the improvement direction
/// given by `sense`. The `σ → 0` limit is `max(Δ, 0)`.
pub fn expected_improvement<T: Real>(mean: T, sd: T, f_star: T, sense: Sense) -> T {
    let delta = match sense {
        Sense::Maximize => mean - f_star,
        Sense::Minimize => f_star - mean,
    };
    if !(sd > T::zero()) {
        return delta.max(T::zero());
    }
    let u = delta / sd;
    (sd * std_normal_pdf(u) + delta * std_normal_cdf(u)).max(T::zero())
}

/// EI of a model's posterior at a query point.
pub fn expected_improvement_at<T: Real>(
    model: &GpModel<T>,
    z: ArrayView1<T>,
    f_star: T,
    sense: Sense,
) -> Result<T> {
    let (mean, var) = model.posterior(z)?;
    Ok(expected_improvement(mean, var.sqrt(), f_star, sense))
}

/// Everything needed to score a candidate in the projected space. The model
/// lives on projected mapped points; `map` and `projection` share the
/// ambient dimension.
pub struct AcquisitionProblem<'a, T: Real> {
    model: &'a GpModel<T>,
    projection: &'a Projection<T>,
    map: &'a FeatureMap<T>,
    f_star: T,
    sense: Sense,
    half_width: T,
}

impl<'a, T: Real> AcquisitionProblem<'a, T> {
    pub fn new(
        model: &'a GpModel<T>,
        projection: &'a Projection<T>,
        map: &'a FeatureMap<T>,
        f_star: T,
        sense: Sense,
    ) -> Result<Self> {
        let half_width = T::of(projection.rows() as f64).sqrt();
        Self::with_half_width(model, projection, map, f_star, sense, half_width)
    }

    /// Override the box half-width (the default is √m).
    pub fn with_half_width(
        model: &'a GpModel<T>,
        projection: &'a Projection<T>,
        map: &'a FeatureMap<T>,
        f_star: T,
        sense: Sense,
        half_width: T,
    ) -> Result<Self> {
        if map.ambient_dim() != projection.ambient_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "map ambient {} vs projection ambient {}",
                map.ambient_dim(),
                projection.ambient_dim()
            )));
        }
        if model.len() > 0 && model.dim() != projection.rows() {
            return Err(CoreError::DimensionMismatch(format!(
                "model dimension {} vs projection rows {}",
                model.dim(),
                projection.rows()
            )));
        }
        if !(half_width > T::zero()) {
            return Err(CoreError::InvalidArgument("nonpositive box half-width".into()));
        }
        Ok(AcquisitionProblem { model, projection, map, f_star, sense, half_width })
    }

    pub fn dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn f_star(&self) -> T {
        self.f_star
    }

    /// Ambient point a candidate evaluates at: `h(Aᵀz)`.
    pub fn ambient_candidate(&self, z: ArrayView1<T>) -> Result<Array1<T>> {
        let x = back_project(self.projection, z)?;
        self.map.apply(x.view())
    }

    fn raw_score(&self, z: ArrayView1<T>) -> AcqValue<T> {
        let x = match back_project(self.projection, z) {
            Ok(x) => x,
            Err(_) => return AcqValue { value: T::zero(), degenerate: true },
        };
        let hx = match self.map.apply(x.view()) {
            Ok(hx) => hx,
            Err(_) => return AcqValue { value: T::zero(), degenerate: true },
        };
        let zz = match project(self.projection, hx.view()) {
            Ok(zz) => zz,
            Err(_) => return AcqValue { value: T::zero(), degenerate: true },
        };
        match self.model.posterior(zz.view()) {
            Ok((mean, var)) => AcqValue {
                value: expected_improvement(mean, var.sqrt(), self.f_star, self.sense),
                degenerate: false,
            },
            Err(_) => AcqValue { value: T::zero(), degenerate: true },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AcqValue<T: Real> {
    pub value: T,
    /// The map was singular at this candidate; the value was forced to zero.
    pub degenerate: bool,
}

/// Acquisition value at `z` (clamped into the box first).
pub fn composed_acquisition<T: Real>(
    prob: &AcquisitionProblem<'_, T>,
    z: ArrayView1<T>,
) -> AcqValue<T> {
    let w = prob.half_width;
    let clamped = z.mapv(|v| v.max(-w).min(w));
    prob.raw_score(clamped.view())
}

#[derive(Debug, Clone)]
pub struct AcqOptimum<T: Real> {
    pub z: Array1<T>,
    pub value: T,
    /// No restart produced a usable (non-singular, positive) landscape; the
    /// returned point is the best uniform probe instead.
    pub degenerate: bool,
}

/// Multi-start maximization over the box. A pool of low-discrepancy
/// candidates is screened by raw acquisition value and only the most
/// promising ones are refined locally; local searches run on
/// `-ln(EI + ε)`, which shares the maximizer with EI but keeps gradients
/// alive where EI underflows. Ties keep the earliest candidate.
pub fn maximize_acquisition<T: Real>(
    prob: &AcquisitionProblem<'_, T>,
    restarts: usize,
    seed: u64,
) -> Result<AcqOptimum<T>> {
    if restarts == 0 {
        return Err(CoreError::InvalidArgument("at least one restart required".into()));
    }
    let m = prob.dim();
    let w = prob.half_width;
    let lower = Array1::from_elem(m, -w);
    let upper = Array1::from_elem(m, w);
    let mut rng = rng::stream(seed, streams::ACQUISITION);
    let starts = HaltonStarts::new(lower.clone(), upper.clone(), &mut rng);

    let objective = |z: ArrayView1<T>| {
        let v = prob.raw_score(z).value;
        -(v.max(T::of(1e-300))).ln()
    };

    // One raw score costs a tiny fraction of a local search, so a wide
    // screen buys much better start points almost for free. Starts where
    // EI has already underflowed give the local search a flat surface and
    // a zero gradient; screening routes the restarts around them.
    let pool = restarts * 8 + 32;
    let mut candidates: Vec<Array1<T>> = (0..pool).map(|i| starts.point(i)).collect();

    // Data-anchored candidates. The observed embeddings occupy a vanishing
    // fraction of the box volume, yet late in a run the acquisition peaks
    // near them; uniform starts alone almost never land there.
    let inputs = prob.model.inputs();
    let targets = prob.model.targets();
    if inputs.nrows() > 0 {
        let best_row = match prob.sense {
            Sense::Minimize => (0..targets.len())
                .min_by(|&i, &j| targets[i].partial_cmp(&targets[j]).unwrap_or(Ordering::Equal)),
            Sense::Maximize => (0..targets.len())
                .max_by(|&i, &j| targets[i].partial_cmp(&targets[j]).unwrap_or(Ordering::Equal)),
        }
        .expect("nonempty targets");
        let incumbent = inputs.row(best_row).to_owned();
        let mut spread = T::zero();
        for i in 0..inputs.nrows() {
            let diff = &inputs.row(i) - &incumbent;
            spread = spread + diff.dot(&diff).sqrt();
        }
        let scale =
            (spread / T::of(inputs.nrows() as f64 * 4.0)).max(w * T::of(1e-3));
        for _ in 0..8 {
            let jitter = Array1::from_shape_fn(m, |_| {
                rng::standard_normal::<T, _>(&mut rng) * scale
            });
            let mut cand = &incumbent + &jitter;
            for i in 0..m {
                cand[i] = cand[i].max(-w).min(w);
            }
            candidates.push(cand);
        }
        for i in 0..inputs.nrows() {
            candidates.push(inputs.row(i).to_owned());
        }
    }

    let mut order: Vec<(usize, T)> = candidates
        .iter()
        .enumerate()
        .map(|(i, z)| (i, prob.raw_score(z.view()).value))
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));

    let mut best: Option<(Array1<T>, T)> = None;
    for &(idx, _) in order.iter().take(restarts) {
        let start = candidates[idx].clone();
        let (z, _) = minimize_box(&objective, start, lower.view(), upper.view(), 60);
        let value = prob.raw_score(z.view()).value;
        if best.as_ref().map_or(true, |(_, bv)| value > *bv) {
            best = Some((z, value));
        }
    }
    let (z, value) = best.expect("restarts > 0");
    if value > T::zero() {
        return Ok(AcqOptimum { z, value, degenerate: false });
    }

    // Flat or everywhere-singular landscape: fall back to uniform probes.
    let mut probe_best: Option<(Array1<T>, T)> = None;
    for _ in 0..100 {
        let cand = Array1::from_shape_fn(m, |_| rng::uniform(&mut rng, -w, w));
        let sc = prob.raw_score(cand.view());
        if !sc.degenerate
            && probe_best.as_ref().map_or(true, |(_, bv)| sc.value > *bv)
        {
            probe_best = Some((cand, sc.value));
        }
    }
    let (z, value) = probe_best.unwrap_or((z, value));
    Ok(AcqOptimum { z, value, degenerate: true })
}
