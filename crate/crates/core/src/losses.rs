//! Training objective for feature maps: a supervised term (negative log
//! marginal likelihood of a GP whose kernel acts on mapped points) plus a
//! consistency term that penalizes maps which move points lying on a segment
//! between a point and its own image. Exact projections score zero on the
//! consistency term, so it only constrains learned maps.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::feature_map::FeatureMap;
use crate::linalg::{solve_lower, solve_lower_transpose, sq_dist};
use crate::nn::{adam_step, AdamState};
use crate::projection::SearchSpace;
use crate::rng::{self, streams};
use crate::scalar::Real;

pub const NOISE_FLOOR: f64 = 1e-6;

/// Unlabeled sample for the consistency term: `points` are uniform draws from
/// the search space, `coefficients` are blend weights in (0, 1).
#[derive(Debug, Clone)]
pub struct UnlabeledSet<T: Real> {
    pub points: Vec<Array1<T>>,
    pub coefficients: Vec<T>,
}

impl<T: Real> UnlabeledSet<T> {
    pub fn sample(
        points: usize,
        coefficients: usize,
        space: &SearchSpace,
        seed: u64,
    ) -> Result<Self> {
        if points == 0 || coefficients == 0 {
            return Err(CoreError::EmptyDesign);
        }
        let mut rng = rng::stream(seed, streams::UNLABELED);
        let pts = (0..points)
            .map(|_| {
                Array1::from_shape_fn(space.dim(), |_| rng::uniform(&mut rng, -T::one(), T::one()))
            })
            .collect();
        // Open interval: a blend weight of exactly 0 or 1 adds nothing.
        let coefs = (0..coefficients)
            .map(|_| {
                let u: T = rng::uniform(&mut rng, T::zero(), T::one());
                u.max(T::of(1e-9)).min(T::of(1.0 - 1e-9))
            })
            .collect();
        Ok(UnlabeledSet { points: pts, coefficients: coefs })
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() || self.coefficients.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig<T: Real> {
    /// Weight of the consistency term.
    pub gamma: T,
    /// Number of unlabeled points (q).
    pub unlabeled_points: usize,
    /// Number of blend coefficients (p).
    pub blend_coefficients: usize,
    /// Adam steps per training call.
    pub steps: usize,
    pub learning_rate: T,
    /// Redraw the unlabeled set before each training call instead of keeping
    /// the one drawn at startup.
    pub redraw_unlabeled: bool,
}

impl<T: Real> Default for TrainingConfig<T> {
    fn default() -> Self {
        TrainingConfig {
            gamma: T::one(),
            unlabeled_points: 100,
            blend_coefficients: 5,
            steps: 200,
            learning_rate: T::of(1e-2),
            redraw_unlabeled: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SupervisedEval<T: Real> {
    pub loss: T,
    pub map_grad: Vec<T>,
    /// d loss / d a (inverse lengthscale).
    pub grad_lengthscale: T,
    /// d loss / d σ².
    pub grad_noise: T,
}

/// Negative log marginal likelihood of a unit-signal GP over the mapped
/// history, with targets centered on their mean. Gradients flow to the map
/// parameters and to (a, σ²).
pub fn supervised_loss<T: Real>(
    map: &FeatureMap<T>,
    lengthscale: T,
    noise: T,
    xs: &[Array1<T>],
    ys: &[T],
    want_grads: bool,
) -> Result<SupervisedEval<T>> {
    let n = xs.len();
    if n == 0 || ys.len() != n {
        return Err(CoreError::InvalidArgument("empty or mismatched history".into()));
    }
    if !(noise > T::zero()) {
        return Err(CoreError::InvalidArgument("supervised loss needs σ² > 0".into()));
    }
    let mapped: Vec<Array1<T>> = xs
        .iter()
        .map(|x| map.apply(x.view()))
        .collect::<Result<_>>()?;

    let mean = ys.iter().copied().sum::<T>() / T::of(n as f64);
    let resid = Array1::from_shape_fn(n, |i| ys[i] - mean);

    let a2 = lengthscale * lengthscale;
    let mut dist2 = Array2::zeros((n, n));
    let mut cov = Array2::zeros((n, n));
    for i in 0..n {
        cov[(i, i)] = T::one() + noise;
        for j in 0..i {
            let d = sq_dist(mapped[i].view(), mapped[j].view());
            let k = (-a2 * d).exp();
            dist2[(i, j)] = d;
            dist2[(j, i)] = d;
            cov[(i, j)] = k;
            cov[(j, i)] = k;
        }
    }
    let l = crate::linalg::cholesky_lower(cov.view())
        .map_err(|_| CoreError::FactorizationFailure { attempts: 1 })?;
    let alpha = solve_lower_transpose(l.view(), solve_lower(l.view(), resid.view()).view());
    let mut loss = resid.dot(&alpha) / T::of(2.0);
    for i in 0..n {
        loss = loss + l[(i, i)].ln();
    }
    loss = loss + T::of(n as f64 * (2.0 * std::f64::consts::PI).ln() / 2.0);

    if !want_grads {
        return Ok(SupervisedEval {
            loss,
            map_grad: vec![T::zero(); map.param_count()],
            grad_lengthscale: T::zero(),
            grad_noise: T::zero(),
        });
    }

    // dL/dK = ½(K⁻¹ − ααᵀ); K⁻¹ column-by-column from the factor.
    let mut w = Array2::zeros((n, n));
    let mut unit = Array1::zeros(n);
    for c in 0..n {
        unit[c] = T::one();
        let col = solve_lower_transpose(l.view(), solve_lower(l.view(), unit.view()).view());
        for r in 0..n {
            w[(r, c)] = (col[r] - alpha[r] * alpha[c]) / T::of(2.0);
        }
        unit[c] = T::zero();
    }

    let mut grad_a = T::zero();
    let mut grad_noise = T::zero();
    for i in 0..n {
        grad_noise = grad_noise + w[(i, i)];
        for j in 0..i {
            let k = (-a2 * dist2[(i, j)]).exp();
            grad_a = grad_a
                - T::of(4.0) * w[(i, j)] * lengthscale * dist2[(i, j)] * k;
        }
    }

    let mut map_grad = vec![T::zero(); map.param_count()];
    for i in 0..n {
        let mut upstream = Array1::zeros(mapped[i].len());
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = (-a2 * dist2[(i, j)]).exp();
            let c = -T::of(4.0) * a2 * w[(i, j)] * k;
            for t in 0..upstream.len() {
                upstream[t] = upstream[t] + c * (mapped[i][t] - mapped[j][t]);
            }
        }
        let back = map.backward(xs[i].view(), upstream.view())?;
        for (g, b) in map_grad.iter_mut().zip(back.param_grad) {
            *g = *g + b;
        }
    }

    Ok(SupervisedEval { loss, map_grad, grad_lengthscale: grad_a, grad_noise })
}

#[derive(Debug, Clone)]
pub struct ConsistencyEval<T: Real> {
    pub loss: T,
    pub map_grad: Vec<T>,
}

/// Mean distance `‖h(λⱼ x'ᵢ + (1−λⱼ) h(x'ᵢ)) − h(x'ᵢ)‖₂` over the unlabeled
/// grid. The norm is unsquared; a zero residual contributes zero gradient.
pub fn consistency_loss<T: Real>(
    map: &FeatureMap<T>,
    unlabeled: &UnlabeledSet<T>,
    want_grads: bool,
) -> Result<ConsistencyEval<T>> {
    if unlabeled.is_empty() {
        return Err(CoreError::EmptyDesign);
    }
    let total = T::of((unlabeled.points.len() * unlabeled.coefficients.len()) as f64);
    let mut loss = T::zero();
    let mut map_grad = vec![T::zero(); map.param_count()];
    let want_grads = want_grads && map.trainable();

    for anchor in &unlabeled.points {
        let image = map.apply(anchor.view())?;
        let mut anchor_upstream: Option<Array1<T>> = None;
        for &lam in &unlabeled.coefficients {
            let blend = Array1::from_shape_fn(anchor.len(), |t| {
                lam * anchor[t] + (T::one() - lam) * image[t]
            });
            let moved = map.apply(blend.view())?;
            let err = &moved - &image;
            let dist = err.dot(&err).sqrt();
            loss = loss + dist;
            if !want_grads || !(dist > T::zero()) {
                continue;
            }
            let unit = err.mapv(|v| v / dist);
            let back = map.backward(blend.view(), unit.view())?;
            for (g, b) in map_grad.iter_mut().zip(&back.param_grad) {
                *g = *g + *b / total;
            }
            // The blend point and the subtracted image both depend on the
            // anchor's image; collect that upstream and run it once.
            let up = anchor_upstream
                .get_or_insert_with(|| Array1::zeros(anchor.len()));
            for t in 0..up.len() {
                up[t] = up[t] + (T::one() - lam) * back.input_grad[t] - unit[t];
            }
        }
        if let Some(up) = anchor_upstream {
            let back = map.backward(anchor.view(), up.view())?;
            for (g, b) in map_grad.iter_mut().zip(&back.param_grad) {
                *g = *g + *b / total;
            }
        }
    }
    Ok(ConsistencyEval { loss: loss / total, map_grad })
}

#[derive(Debug, Clone)]
pub struct CombinedEval<T: Real> {
    pub loss: T,
    pub supervised: T,
    pub consistency: T,
    pub map_grad: Vec<T>,
    pub grad_lengthscale: T,
    pub grad_noise: T,
}

/// `supervised + γ · consistency` with summed gradients.
pub fn combined_loss<T: Real>(
    map: &FeatureMap<T>,
    lengthscale: T,
    noise: T,
    xs: &[Array1<T>],
    ys: &[T],
    unlabeled: &UnlabeledSet<T>,
    gamma: T,
    want_grads: bool,
) -> Result<CombinedEval<T>> {
    let sup = supervised_loss(map, lengthscale, noise, xs, ys, want_grads)?;
    if !(gamma > T::zero()) {
        return Ok(CombinedEval {
            loss: sup.loss,
            supervised: sup.loss,
            consistency: T::zero(),
            map_grad: sup.map_grad,
            grad_lengthscale: sup.grad_lengthscale,
            grad_noise: sup.grad_noise,
        });
    }
    let cons = consistency_loss(map, unlabeled, want_grads)?;
    let mut map_grad = sup.map_grad;
    for (g, c) in map_grad.iter_mut().zip(cons.map_grad) {
        *g = *g + gamma * c;
    }
    Ok(CombinedEval {
        loss: sup.loss + gamma * cons.loss,
        supervised: sup.loss,
        consistency: cons.loss,
        map_grad,
        grad_lengthscale: sup.grad_lengthscale,
        grad_noise: sup.grad_noise,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub map: FeatureMap<T>,
    pub lengthscale: T,
    pub noise: T,
    pub initial_loss: T,
    pub final_loss: T,
    /// Training aborted on a non-finite loss or repeated singular
    /// evaluations; the best finite checkpoint was returned.
    pub diverged: bool,
}

/// Full-batch Adam on the map parameters jointly with `(ln a, ln σ²)`. The
/// basis invariant of geometry maps is restored after every step, and the
/// best checkpoint seen is what comes back.
pub fn train_feature_map<T: Real>(
    map: &FeatureMap<T>,
    lengthscale0: T,
    noise0: T,
    xs: &[Array1<T>],
    ys: &[T],
    unlabeled: &UnlabeledSet<T>,
    config: &TrainingConfig<T>,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    let floor = T::of(NOISE_FLOOR);
    let mut current = map.clone();
    let mut log_a = lengthscale0.max(T::of(1e-8)).ln();
    let mut log_noise = (noise0 - floor).max(T::of(1e-8)).ln();
    let n_map = current.param_count();

    let eval = |m: &FeatureMap<T>, la: T, ln_s: T, grads: bool| {
        combined_loss(
            m,
            la.exp(),
            floor + ln_s.exp(),
            xs,
            ys,
            unlabeled,
            config.gamma,
            grads,
        )
    };

    let initial = eval(&current, log_a, log_noise, false)?;
    let initial_loss = initial.loss;
    if !initial_loss.is_finite() {
        return Err(CoreError::TrainingDiverged("non-finite initial loss".into()));
    }

    let mut best = (initial_loss, current.clone(), log_a, log_noise);
    let mut state = AdamState::new(n_map + 2);
    let mut rng = rng::stream(seed, streams::TRAINING);
    let mut singular_retries = 0usize;
    let mut diverged = false;
    let mut final_loss = initial_loss;

    let mut step = 0usize;
    while step < config.steps {
        let evaluated = eval(&current, log_a, log_noise, true);
        let ev = match evaluated {
            Ok(ev) if ev.loss.is_finite() => {
                singular_retries = 0;
                ev
            }
            Err(CoreError::SingularProjection(_)) if singular_retries < 3 => {
                // Nudge the map off the singular configuration and retry.
                singular_retries += 1;
                if n_map > 0 {
                    let mut p = current.params();
                    for v in p.iter_mut() {
                        *v = *v + T::of(1e-8) * rng::standard_normal::<T, _>(&mut rng);
                    }
                    current.set_params(&p)?;
                    current.re_orthonormalize()?;
                }
                continue;
            }
            _ => {
                diverged = true;
                break;
            }
        };
        final_loss = ev.loss;
        if ev.loss < best.0 {
            best = (ev.loss, current.clone(), log_a, log_noise);
        }

        let mut theta: Vec<T> = current.params();
        theta.push(log_a);
        theta.push(log_noise);
        let mut grad = ev.map_grad;
        grad.push(ev.grad_lengthscale * log_a.exp());
        grad.push(ev.grad_noise * log_noise.exp());
        if adam_step(&mut theta, &grad, &mut state, config.learning_rate).is_err() {
            diverged = true;
            break;
        }
        log_noise = theta.pop().unwrap();
        log_a = theta.pop().unwrap();
        if n_map > 0 {
            current.set_params(&theta)?;
            if current.re_orthonormalize().is_err() {
                diverged = true;
                break;
            }
        }
        step += 1;
    }

    // Score the last iterate too; the loop's loss values lag one step behind.
    if !diverged {
        if let Ok(last) = eval(&current, log_a, log_noise, false) {
            final_loss = last.loss;
            if last.loss.is_finite() && last.loss < best.0 {
                best = (last.loss, current.clone(), log_a, log_noise);
            }
        }
    }

    let (best_loss, best_map, best_la, best_ln) = best;
    Ok(TrainOutcome {
        map: best_map,
        lengthscale: best_la.exp(),
        noise: floor + best_ln.exp(),
        initial_loss,
        final_loss: if diverged { best_loss } else { final_loss.min(best_loss) },
        diverged,
    })
}
