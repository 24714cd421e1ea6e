//! Union of the feature map families. Optimization and training code works
//! against this type so a run can switch families by configuration.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::manifold::{LinearMap, MapBackward, MixedOracle, SphereMap};
use crate::nn::NeuralMap;
use crate::scalar::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap<T: Real> {
    Linear(LinearMap<T>),
    Sphere(SphereMap<T>),
    Mixed(MixedOracle),
    Neural(NeuralMap<T>),
}

impl<T: Real> FeatureMap<T> {
    pub fn ambient_dim(&self) -> usize {
        match self {
            FeatureMap::Linear(m) => m.ambient_dim(),
            FeatureMap::Sphere(m) => m.ambient_dim(),
            FeatureMap::Mixed(m) => m.ambient_dim(),
            FeatureMap::Neural(m) => m.ambient_dim(),
        }
    }

    pub fn apply(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        match self {
            FeatureMap::Linear(m) => m.apply(x),
            FeatureMap::Sphere(m) => m.apply(x),
            FeatureMap::Mixed(m) => m.apply(x),
            FeatureMap::Neural(m) => m.forward(x),
        }
    }

    pub fn backward(&self, x: ArrayView1<T>, upstream: ArrayView1<T>) -> Result<MapBackward<T>> {
        match self {
            FeatureMap::Linear(m) => m.backward(x, upstream),
            FeatureMap::Sphere(m) => m.backward(x, upstream),
            FeatureMap::Mixed(m) => m.backward(x, upstream),
            FeatureMap::Neural(m) => m.backward(x, upstream),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            FeatureMap::Linear(m) => m.param_count(),
            FeatureMap::Sphere(m) => m.param_count(),
            FeatureMap::Mixed(_) => 0,
            FeatureMap::Neural(m) => m.param_count(),
        }
    }

    pub fn trainable(&self) -> bool {
        self.param_count() > 0
    }

    pub fn params(&self) -> Vec<T> {
        match self {
            FeatureMap::Linear(m) => m.params(),
            FeatureMap::Sphere(m) => m.params(),
            FeatureMap::Mixed(_) => Vec::new(),
            FeatureMap::Neural(m) => m.params(),
        }
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        match self {
            FeatureMap::Linear(m) => m.set_params(p),
            FeatureMap::Sphere(m) => m.set_params(p),
            FeatureMap::Mixed(_) => {
                if p.is_empty() {
                    Ok(())
                } else {
                    Err(CoreError::InvalidArgument(
                        "exact projection oracle has no parameters".into(),
                    ))
                }
            }
            FeatureMap::Neural(m) => m.set_params(p),
        }
    }

    /// Restore basis orthonormality after a raw parameter write. A no-op for
    /// families without a basis.
    pub fn re_orthonormalize(&mut self) -> Result<()> {
        match self {
            FeatureMap::Linear(m) => m.re_orthonormalize(),
            FeatureMap::Sphere(m) => m.re_orthonormalize(),
            FeatureMap::Mixed(_) | FeatureMap::Neural(_) => Ok(()),
        }
    }

    /// Whether the family is an exact projection (idempotent by construction),
    /// as opposed to a learned approximation.
    pub fn is_exact_projection(&self) -> bool {
        matches!(self, FeatureMap::Linear(_) | FeatureMap::Sphere(_) | FeatureMap::Mixed(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_preserves_behavior() {
        let map = FeatureMap::Sphere(SphereMap::<f64>::from_seed(6, 2, 21).unwrap());
        let json = serde_json::to_string(&map).unwrap();
        assert!(json.contains("\"kind\":\"sphere\""));
        let back: FeatureMap<f64> = serde_json::from_str(&json).unwrap();
        let x = Array1::from_shape_fn(6, |i| 0.4 * (i as f64 + 1.0).sin());
        let a = map.apply(x.view()).unwrap();
        let b = back.apply(x.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn param_round_trip_is_identity_for_each_family() {
        let maps = vec![
            FeatureMap::Linear(LinearMap::<f64>::from_seed(5, 2, 1).unwrap()),
            FeatureMap::Sphere(SphereMap::<f64>::from_seed(5, 2, 2).unwrap()),
            FeatureMap::Neural(
                NeuralMap::<f64>::init(5, 4, 3, crate::nn::RescaleMode::Off).unwrap(),
            ),
            FeatureMap::Mixed(MixedOracle::new(1, 2, 5).unwrap()),
        ];
        for mut map in maps {
            let p = map.params();
            assert_eq!(p.len(), map.param_count());
            map.set_params(&p).unwrap();
            assert_eq!(map.params(), p);
        }
    }
}
