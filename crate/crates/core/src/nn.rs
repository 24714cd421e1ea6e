//! Trainable residual-free two-layer perceptron used as a learned feature
//! map, with an optional output rescale keeping images inside the unit box.
//! Backprop is written out by hand; the optimizer is Adam on a flat
//! parameter vector.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::manifold::MapBackward;
use crate::rng::{self, streams};
use crate::scalar::Real;

/// When to divide the raw network output by its max absolute coordinate.
/// `OnlyIfOutside` leaves in-box outputs untouched, so points already in the
/// box are reachable as-is; `Always` matches the literal rescale rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleMode {
    Always,
    #[default]
    OnlyIfOutside,
    Off,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuralMap<T: Real> {
    w1: Array2<T>,
    b1: Array1<T>,
    w2: Array2<T>,
    b2: Array1<T>,
    rescale: RescaleMode,
}

struct ForwardTrace<T: Real> {
    pre1: Array1<T>,
    hidden: Array1<T>,
    raw: Array1<T>,
    out: Array1<T>,
    /// Set when the rescale branch fired: (argmax index, max abs value).
    scale: Option<(usize, T)>,
}

impl<T: Real> NeuralMap<T> {
    /// Fan-in scaled uniform init, zero biases, hidden width `hidden`.
    pub fn init(ambient: usize, hidden: usize, seed: u64, rescale: RescaleMode) -> Result<Self> {
        if ambient == 0 || hidden == 0 {
            return Err(CoreError::InvalidDimension("zero-width layer".into()));
        }
        let mut rng = rng::stream(seed, streams::MAP_INIT);
        let lim1 = T::one() / T::of(ambient as f64).sqrt();
        let w1 = Array2::from_shape_fn((hidden, ambient), |_| {
            rng::uniform(&mut rng, -lim1, lim1)
        });
        let lim2 = T::one() / T::of(hidden as f64).sqrt();
        let w2 = Array2::from_shape_fn((ambient, hidden), |_| {
            rng::uniform(&mut rng, -lim2, lim2)
        });
        Ok(NeuralMap {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(ambient),
            rescale,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn rescale_mode(&self) -> RescaleMode {
        self.rescale
    }

    fn trace(&self, x: ArrayView1<T>) -> Result<ForwardTrace<T>> {
        if x.len() != self.ambient_dim() {
            return Err(CoreError::DimensionMismatch(format!(
                "point length {} vs ambient {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        let pre1 = self.w1.dot(&x) + &self.b1;
        let hidden = pre1.mapv(|v| v.max(T::zero()));
        let raw = self.w2.dot(&hidden) + &self.b2;

        let mut max_abs = T::zero();
        let mut arg = 0usize;
        for (i, &v) in raw.iter().enumerate() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                arg = i;
            }
        }
        let (out, scale) = match self.rescale {
            RescaleMode::Off => (raw.clone(), None),
            RescaleMode::Always => {
                if !(max_abs > T::zero()) {
                    return Err(CoreError::SingularProjection(
                        "rescale of an all-zero output".into(),
                    ));
                }
                (raw.mapv(|v| v / max_abs), Some((arg, max_abs)))
            }
            RescaleMode::OnlyIfOutside => {
                if max_abs > T::one() {
                    (raw.mapv(|v| v / max_abs), Some((arg, max_abs)))
                } else {
                    (raw.clone(), None)
                }
            }
        };
        Ok(ForwardTrace { pre1, hidden, raw, out, scale })
    }

    pub fn forward(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        Ok(self.trace(x)?.out)
    }

    /// Gradients of `upstreamᵀ forward(x)`. The rescale denominator is
    /// differentiated with the argmax index held fixed, which is the true
    /// derivative everywhere except exact max ties.
    pub fn backward(&self, x: ArrayView1<T>, upstream: ArrayView1<T>) -> Result<MapBackward<T>> {
        let t = self.trace(x)?;
        let g_raw = match t.scale {
            None => upstream.to_owned(),
            Some((arg, m)) => {
                let dot = upstream.dot(&t.raw);
                let sign = if t.raw[arg] >= T::zero() { T::one() } else { -T::one() };
                let mut g = upstream.mapv(|v| v / m);
                g[arg] = g[arg] - sign * dot / (m * m);
                g
            }
        };
        let g_hidden = self.w2.t().dot(&g_raw);
        let g_pre1 = Array1::from_shape_fn(g_hidden.len(), |i| {
            if t.pre1[i] > T::zero() {
                g_hidden[i]
            } else {
                T::zero()
            }
        });

        let (h, d) = (self.hidden_dim(), self.ambient_dim());
        let mut grad = vec![T::zero(); self.param_count()];
        let mut off = 0;
        for i in 0..h {
            for j in 0..d {
                grad[off + i * d + j] = g_pre1[i] * x[j];
            }
        }
        off += h * d;
        for i in 0..h {
            grad[off + i] = g_pre1[i];
        }
        off += h;
        for i in 0..d {
            for j in 0..h {
                grad[off + i * h + j] = g_raw[i] * t.hidden[j];
            }
        }
        off += d * h;
        for i in 0..d {
            grad[off + i] = g_raw[i];
        }

        let input_grad = self.w1.t().dot(&g_pre1);
        Ok(MapBackward { param_grad: grad, input_grad })
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend(self.w1.iter().copied());
        p.extend(self.b1.iter().copied());
        p.extend(self.w2.iter().copied());
        p.extend(self.b2.iter().copied());
        p
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(CoreError::DimensionMismatch("parameter count".into()));
        }
        let mut it = p.iter().copied();
        for slot in self.w1.iter_mut() {
            *slot = it.next().unwrap();
        }
        for slot in self.b1.iter_mut() {
            *slot = it.next().unwrap();
        }
        for slot in self.w2.iter_mut() {
            *slot = it.next().unwrap();
        }
        for slot in self.b2.iter_mut() {
            *slot = it.next().unwrap();
        }
        Ok(())
    }
}

/// First and second moment accumulators for Adam.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(CoreError::DimensionMismatch("adam buffers".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(CoreError::TrainingDiverged("non-finite gradient".into()));
    }
    state.t += 1;
    let b1 = T::of(BETA1);
    let b2 = T::of(BETA2);
    let c1 = T::one() - T::of(BETA1.powi(state.t as i32));
    let c2 = T::one() - T::of(BETA2.powi(state.t as i32));
    let eps = T::of(ADAM_EPS);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
