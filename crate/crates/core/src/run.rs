//! Optimization runners: the projected-manifold BO loop, plain random
//! search, and a random-embedding BO baseline. All three minimize.

use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::acquisition::{maximize_acquisition, AcquisitionProblem, Sense};
use crate::benchmarks::Objective;
use crate::error::{CoreError, Result};
use crate::feature_map::FeatureMap;
use crate::gp::{fit_data, FitOptions, GammaPrior};
use crate::losses::{train_feature_map, TrainingConfig, UnlabeledSet, NOISE_FLOOR};
use crate::manifold::{LinearMap, MixedOracle, SphereMap};
use crate::nn::{NeuralMap, RescaleMode};
use crate::projection::{
    back_project, latin_hypercube, sample_orthogonal, Projection, SearchSpace,
};
use crate::rng::{self, streams};
use crate::scalar::Real;

/// One objective evaluation as it lands in a trace. `x` and `wall_ms` are
/// null unless their recording flags are set, keeping default traces
/// byte-stable across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T: Real> {
    pub iter: usize,
    pub x: Option<Vec<T>>,
    pub y: T,
    pub incumbent: T,
    pub wall_ms: Option<u64>,
    pub acq_value: Option<T>,
}

/// Append-only record of a run. The incumbent is the smallest observed `y`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History<T: Real> {
    evaluations: Vec<Evaluation<T>>,
    incumbent_index: usize,
}

impl<T: Real> History<T> {
    pub fn new() -> Self {
        History { evaluations: Vec::new(), incumbent_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn evaluations(&self) -> &[Evaluation<T>] {
        &self.evaluations
    }

    pub fn incumbent_index(&self) -> usize {
        self.incumbent_index
    }

    pub fn incumbent_value(&self) -> Option<T> {
        self.evaluations.get(self.incumbent_index).map(|e| e.incumbent)
    }

    pub fn final_incumbent(&self) -> Option<T> {
        self.evaluations.last().map(|e| e.incumbent)
    }

    pub fn incumbent_trace(&self) -> Vec<T> {
        self.evaluations.iter().map(|e| e.incumbent).collect()
    }

    pub fn record(
        &mut self,
        x: Option<Vec<T>>,
        y: T,
        acq_value: Option<T>,
        wall_ms: Option<u64>,
    ) {
        let iter = self.evaluations.len();
        let incumbent = match self.incumbent_value() {
            Some(best) if best <= y => best,
            _ => {
                self.incumbent_index = iter;
                y
            }
        };
        self.evaluations.push(Evaluation { iter, x, y, incumbent, wall_ms, acq_value });
    }

    /// One JSON object per evaluation, newline-terminated.
    pub fn to_jsonl(&self) -> String
    where
        T: Serialize,
    {
        let mut out = String::new();
        for e in &self.evaluations {
            out.push_str(&serde_json::to_string(e).expect("evaluation record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self>
    where
        T: serde::de::DeserializeOwned,
    {
        let mut history = History::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Evaluation<T> = serde_json::from_str(line).map_err(|err| {
                CoreError::InvalidArgument(format!("trace line {}: {err}", i + 1))
            })?;
            if history.incumbent_value().map_or(true, |best| e.y < best) {
                history.incumbent_index = history.evaluations.len();
            }
            history.evaluations.push(e);
        }
        Ok(history)
    }
}

/// A run that died mid-flight. Everything evaluated before the failure is
/// preserved.
#[derive(Debug)]
pub struct RunFailure<T: Real> {
    pub error: CoreError,
    pub partial: History<T>,
}

impl<T: Real> std::fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} evaluations: {}", self.partial.len(), self.error)
    }
}

impl<T: Real> std::error::Error for RunFailure<T> {}

pub type RunResult<T> = std::result::Result<History<T>, Box<RunFailure<T>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Linear,
    Sphere,
    #[default]
    Neural,
    /// Exact projection supplied by the objective; only usable through
    /// [`rpmbo_run_with_map`].
    MixedOracle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig<T: Real> {
    /// Ambient dimension D; must match the objective.
    pub ambient: usize,
    /// Projected dimension m.
    pub projected: usize,
    /// Latent manifold dimension d used to size geometry maps.
    pub latent: usize,
    pub map: MapKind,
    /// Total evaluation budget N.
    pub budget: usize,
    /// Initial design size s.
    pub initial: usize,
    /// Standard deviation of observation noise added to every evaluation.
    pub noise_sd: T,
    pub prior: GammaPrior<T>,
    pub training: TrainingConfig<T>,
    /// Retrain the map every k BO iterations.
    pub train_every: usize,
    /// Acquisition restarts.
    pub restarts: usize,
    /// Clip back-projected candidates into the cube before evaluating.
    pub clip: bool,
    pub pin_signal: bool,
    /// Use the identity embedding instead of a sampled one (requires m = D).
    pub identity_embedding: bool,
    /// Override the acquisition box half-width (default √m).
    pub box_half_width: Option<T>,
    /// Hidden width of neural maps.
    pub hidden: usize,
    pub rescale: RescaleMode,
    pub record_x: bool,
    pub record_timing: bool,
}

impl<T: Real> Default for RunConfig<T> {
    fn default() -> Self {
        RunConfig {
            ambient: 100,
            projected: 24,
            latent: 5,
            map: MapKind::default(),
            budget: 100,
            initial: 10,
            noise_sd: T::zero(),
            prior: GammaPrior::default(),
            training: TrainingConfig::default(),
            train_every: 1,
            restarts: 10,
            clip: true,
            pin_signal: false,
            identity_embedding: false,
            box_half_width: None,
            hidden: 35,
            rescale: RescaleMode::default(),
            record_x: false,
            record_timing: false,
        }
    }
}

impl<T: Real> RunConfig<T> {
    pub fn validate(&self, objective_dim: usize) -> Result<()> {
        if self.ambient != objective_dim {
            return Err(CoreError::DimensionMismatch(format!(
                "config ambient {} vs objective dimension {objective_dim}",
                self.ambient
            )));
        }
        if self.projected == 0 || self.projected > self.ambient {
            return Err(CoreError::InvalidDimension(format!(
                "projected dimension {} outside 1..={}",
                self.projected, self.ambient
            )));
        }
        if self.latent == 0 {
            return Err(CoreError::InvalidDimension("latent dimension must be positive".into()));
        }
        if self.initial < 2 {
            return Err(CoreError::InvalidArgument(
                "at least 2 initial points are needed to fit the surrogate".into(),
            ));
        }
        if self.budget < self.initial {
            return Err(CoreError::InvalidArgument(format!(
                "budget {} smaller than the initial design {}",
                self.budget, self.initial
            )));
        }
        if self.train_every == 0 || self.restarts == 0 || self.hidden == 0 {
            return Err(CoreError::InvalidArgument(
                "train_every, restarts and hidden must be positive".into(),
            ));
        }
        if self.noise_sd < T::zero() {
            return Err(CoreError::InvalidArgument("negative noise level".into()));
        }
        if self.identity_embedding && self.projected != self.ambient {
            return Err(CoreError::InvalidDimension(
                "the identity embedding requires m = D".into(),
            ));
        }
        if let Some(w) = self.box_half_width {
            if !(w > T::zero()) {
                return Err(CoreError::InvalidArgument("nonpositive box half-width".into()));
            }
        }
        Ok(())
    }

    fn half_width(&self) -> T {
        self.box_half_width.unwrap_or_else(|| T::of(self.projected as f64).sqrt())
    }
}

/// Fresh seeded feature map of the configured kind. The oracle kind has no
/// seeded construction; its map comes from the objective.
pub fn initial_map<T: Real>(config: &RunConfig<T>, seed: u64) -> Result<FeatureMap<T>> {
    let map_seed = rng::derive_seed(seed, tags::MAP, 0);
    match config.map {
        MapKind::Linear => Ok(FeatureMap::Linear(LinearMap::from_seed(
            config.ambient,
            config.latent,
            map_seed,
        )?)),
        MapKind::Sphere => Ok(FeatureMap::Sphere(SphereMap::from_seed(
            config.ambient,
            config.latent,
            map_seed,
        )?)),
        MapKind::Neural => Ok(FeatureMap::Neural(NeuralMap::init(
            config.ambient,
            config.hidden,
            map_seed,
            config.rescale,
        )?)),
        MapKind::MixedOracle => Err(CoreError::InvalidArgument(
            "oracle maps come from the objective; use rpmbo_run_with_map".into(),
        )),
    }
}

mod tags {
    pub const MAP: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const ACQ: u64 = 4;
    pub const UNLABELED: u64 = 5;
}

/// Mutable run bookkeeping shared by the three runners.
struct RunState<'a, T: Real, O: Objective<T> + ?Sized> {
    objective: &'a O,
    config: &'a RunConfig<T>,
    noise_rng: rand_chacha::ChaCha8Rng,
    history: History<T>,
    xs: Vec<Array1<T>>,
    ys: Vec<T>,
}

impl<'a, T: Real, O: Objective<T> + ?Sized> RunState<'a, T, O> {
    fn new(objective: &'a O, config: &'a RunConfig<T>, seed: u64) -> Self {
        RunState {
            objective,
            config,
            noise_rng: rng::stream(seed, streams::NOISE),
            history: History::new(),
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    fn observe(
        &mut self,
        x: Array1<T>,
        acq_value: Option<T>,
        started: Instant,
    ) -> Result<()> {
        let mut y = self.objective.evaluate(x.view())?;
        if self.config.noise_sd > T::zero() {
            y = y + self.config.noise_sd * rng::standard_normal(&mut self.noise_rng);
        }
        if !y.is_finite() {
            return Err(CoreError::NonFinite("objective value"));
        }
        let recorded_x = self.config.record_x.then(|| x.to_vec());
        let wall = self
            .config
            .record_timing
            .then(|| started.elapsed().as_millis() as u64);
        self.history.record(recorded_x, y, acq_value, wall);
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    fn fail(self, error: CoreError) -> Box<RunFailure<T>> {
        Box::new(RunFailure { error, partial: self.history })
    }
}

/// The main loop: sample a projection, keep a feature map trained on the
/// history, fit a GP on the projected mapped history, and evaluate where the
/// composed expected improvement peaks.
pub fn rpmbo_run<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    config: &RunConfig<T>,
    seed: u64,
) -> RunResult<T> {
    config
        .validate(objective.ambient_dim())
        .map_err(|e| Box::new(RunFailure { error: e, partial: History::new() }))?;
    let map = initial_map(config, seed)
        .map_err(|e| Box::new(RunFailure { error: e, partial: History::new() }))?;
    rpmbo_run_with_map(objective, config, map, seed)
}

/// [`rpmbo_run`] with a caller-supplied starting map (required for oracle
/// maps, useful for warm starts).
pub fn rpmbo_run_with_map<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    config: &RunConfig<T>,
    map: FeatureMap<T>,
    seed: u64,
) -> RunResult<T> {
    let fresh = |error: CoreError| Box::new(RunFailure { error, partial: History::new() });
    config.validate(objective.ambient_dim()).map_err(&fresh)?;
    if map.ambient_dim() != config.ambient {
        return Err(fresh(CoreError::DimensionMismatch(format!(
            "map ambient {} vs config ambient {}",
            map.ambient_dim(),
            config.ambient
        ))));
    }
    let space = SearchSpace::new(config.ambient).map_err(&fresh)?;
    let projection = if config.identity_embedding {
        Projection::identity(config.ambient)
    } else {
        sample_orthogonal(
            config.projected,
            config.ambient,
            rng::derive_seed(seed, tags::PROJECTION, 0),
        )
    }
    .map_err(&fresh)?;
    let mut unlabeled = UnlabeledSet::sample(
        config.training.unlabeled_points,
        config.training.blend_coefficients,
        &space,
        seed,
    )
    .map_err(&fresh)?;
    let design =
        latin_hypercube::<T>(config.initial, &space, seed).map_err(&fresh)?;

    let mut state = RunState::new(objective, config, seed);
    for x in design {
        let started = Instant::now();
        if let Err(e) = state.observe(x, None, started) {
            return Err(state.fail(e));
        }
    }

    let mut current = map;
    let mut lengthscale = T::one();
    let mut noise = T::of(NOISE_FLOOR + 1e-4);
    let fit_options = FitOptions { pin_signal: config.pin_signal };

    for n in config.initial..config.budget {
        let started = Instant::now();

        if current.trainable() && (n - config.initial) % config.train_every == 0 {
            if config.training.redraw_unlabeled {
                unlabeled = match UnlabeledSet::sample(
                    config.training.unlabeled_points,
                    config.training.blend_coefficients,
                    &space,
                    rng::derive_seed(seed, tags::UNLABELED, n as u64),
                ) {
                    Ok(u) => u,
                    Err(e) => return Err(state.fail(e)),
                };
            }
            let outcome = match train_feature_map(
                &current,
                lengthscale,
                noise,
                &state.xs,
                &state.ys,
                &unlabeled,
                &config.training,
                rng::derive_seed(seed, tags::TRAIN, n as u64),
            ) {
                Ok(o) => o,
                Err(e) => return Err(state.fail(e)),
            };
            current = outcome.map;
            lengthscale = outcome.lengthscale;
            noise = outcome.noise;
        }

        // The surrogate always sees the history through the current map.
        let mut inputs = Array2::zeros((state.xs.len(), config.projected));
        for (i, x) in state.xs.iter().enumerate() {
            let embedded = current
                .apply(x.view())
                .and_then(|hx| crate::projection::project(&projection, hx.view()));
            match embedded {
                Ok(z) => inputs.row_mut(i).assign(&z),
                Err(e) => return Err(state.fail(e)),
            }
        }
        let targets = Array1::from_vec(state.ys.clone());
        let surrogate = match fit_data(inputs, targets, &config.prior, &fit_options) {
            Ok(m) => m,
            Err(e) => return Err(state.fail(e)),
        };

        let f_star = state.history.incumbent_value().expect("nonempty design");
        let problem = match AcquisitionProblem::with_half_width(
            &surrogate,
            &projection,
            &current,
            f_star,
            Sense::Minimize,
            config.half_width(),
        ) {
            Ok(p) => p,
            Err(e) => return Err(state.fail(e)),
        };
        let opt = match maximize_acquisition(
            &problem,
            config.restarts,
            rng::derive_seed(seed, tags::ACQ, n as u64),
        ) {
            Ok(o) => o,
            Err(e) => return Err(state.fail(e)),
        };
        let candidate = match problem.ambient_candidate(opt.z.view()) {
            Ok(c) => c,
            Err(e) => return Err(state.fail(e)),
        };
        let x_next =
            if config.clip { space.clip(candidate.view()) } else { candidate };

        if let Err(e) = state.observe(x_next, Some(opt.value), started) {
            return Err(state.fail(e));
        }
    }
    Ok(state.history)
}

/// Uniform sampling baseline.
pub fn random_search_run<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    config: &RunConfig<T>,
    seed: u64,
) -> RunResult<T> {
    if let Err(error) = config.validate(objective.ambient_dim()) {
        return Err(Box::new(RunFailure { error, partial: History::new() }));
    }
    let mut draw = rng::stream(seed, streams::INITIAL_DESIGN);
    let mut state = RunState::new(objective, config, seed);
    for _ in 0..config.budget {
        let started = Instant::now();
        let x = Array1::from_shape_fn(config.ambient, |_| {
            rng::uniform(&mut draw, -T::one(), T::one())
        });
        if let Err(e) = state.observe(x, None, started) {
            return Err(state.fail(e));
        }
    }
    Ok(state.history)
}

/// Plain EI-BO over a random linear embedding: the GP lives on
/// `y ∈ [−√m, √m]^m` and evaluations happen at `clip(Aᵀy)`.
pub fn random_embedding_run<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    config: &RunConfig<T>,
    seed: u64,
) -> RunResult<T> {
    let fresh = |error: CoreError| Box::new(RunFailure { error, partial: History::new() });
    config.validate(objective.ambient_dim()).map_err(&fresh)?;
    let space = SearchSpace::new(config.ambient).map_err(&fresh)?;
    let embedding = if config.identity_embedding {
        Projection::identity(config.ambient)
    } else {
        sample_orthogonal(
            config.projected,
            config.ambient,
            rng::derive_seed(seed, tags::PROJECTION, 0),
        )
    }
    .map_err(&fresh)?;
    let m = config.projected;
    let w = config.half_width();
    let low_space = SearchSpace::new(m).map_err(&fresh)?;
    let identity_map =
        FeatureMap::<T>::Mixed(MixedOracle::new(0, m, m).map_err(&fresh)?);
    let identity_proj = Projection::<T>::identity(m).map_err(&fresh)?;
    let fit_options = FitOptions { pin_signal: config.pin_signal };

    let mut state = RunState::new(objective, config, seed);
    let mut low_points: Vec<Array1<T>> = Vec::new();

    let design = latin_hypercube::<T>(config.initial, &low_space, seed).map_err(&fresh)?;
    for unit in design {
        let started = Instant::now();
        let low = unit.mapv(|v| v * w);
        let x = match back_project(&embedding, low.view()) {
            Ok(b) => space.clip(b.view()),
            Err(e) => return Err(state.fail(e)),
        };
        low_points.push(low);
        if let Err(e) = state.observe(x, None, started) {
            return Err(state.fail(e));
        }
    }

    for n in config.initial..config.budget {
        let started = Instant::now();
        let mut inputs = Array2::zeros((low_points.len(), m));
        for (i, p) in low_points.iter().enumerate() {
            inputs.row_mut(i).assign(p);
        }
        let targets = Array1::from_vec(state.ys.clone());
        let surrogate = match fit_data(inputs, targets, &config.prior, &fit_options) {
            Ok(s) => s,
            Err(e) => return Err(state.fail(e)),
        };
        let f_star = state.history.incumbent_value().expect("nonempty design");
        let problem = match AcquisitionProblem::with_half_width(
            &surrogate,
            &identity_proj,
            &identity_map,
            f_star,
            Sense::Minimize,
            w,
        ) {
            Ok(p) => p,
            Err(e) => return Err(state.fail(e)),
        };
        let opt = match maximize_acquisition(
            &problem,
            config.restarts,
            rng::derive_seed(seed, tags::ACQ, n as u64),
        ) {
            Ok(o) => o,
            Err(e) => return Err(state.fail(e)),
        };
        let x = match back_project(&embedding, opt.z.view()) {
            Ok(b) => space.clip(b.view()),
            Err(e) => return Err(state.fail(e)),
        };
        low_points.push(opt.z);
        if let Err(e) = state.observe(x, Some(opt.value), started) {
            return Err(state.fail(e));
        }
    }
    Ok(state.history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{parse_objective, FnObjective};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn small_config() -> RunConfig<f64> {
        let mut c = RunConfig::default();
        c.ambient = 8;
        c.projected = 3;
        c.latent = 2;
        c.map = MapKind::Sphere;
        c.budget = 13;
        c.initial = 8;
        c.restarts = 3;
        c.training.steps = 25;
        c.training.unlabeled_points = 12;
        c.training.blend_coefficients = 3;
        c.record_x = true;
        c
    }

    #[test]
    fn degenerate_budget_reproduces_the_initial_design() {
        let obj = parse_objective::<f64>("ackley-sphere-D8-d2").unwrap();
        let mut config = small_config();
        config.budget = config.initial;
        let history = rpmbo_run(&obj, &config, 5).unwrap();
        assert_eq!(history.len(), config.initial);
        let space = SearchSpace::new(8).unwrap();
        let design = latin_hypercube::<f64>(config.initial, &space, 5).unwrap();
        for (e, want) in history.evaluations().iter().zip(&design) {
            assert_eq!(e.x.as_ref().unwrap(), &want.to_vec());
            assert!(e.acq_value.is_none());
        }
    }

    #[test]
    fn runs_are_deterministic_and_monotone() {
        let obj = parse_objective::<f64>("ackley-sphere-D8-d2").unwrap();
        let config = small_config();
        let a = rpmbo_run(&obj, &config, 11).unwrap();
        let b = rpmbo_run(&obj, &config, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), config.budget);
        let trace = a.incumbent_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        for e in a.evaluations() {
            assert!(e.x.as_ref().unwrap().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
        let c = rpmbo_run(&obj, &config, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jsonl_round_trips_and_reruns_byte_identically() {
        let obj = parse_objective::<f64>("ackley-sphere-D8-d2").unwrap();
        let mut config = small_config();
        config.record_x = false;
        let a = rpmbo_run(&obj, &config, 3).unwrap().to_jsonl();
        let b = rpmbo_run(&obj, &config, 3).unwrap().to_jsonl();
        assert_eq!(a, b);
        assert!(a.lines().next().unwrap().contains("\"wall_ms\":null"));
        let parsed = History::<f64>::from_jsonl(&a).unwrap();
        assert_eq!(parsed.to_jsonl(), a);
        assert_eq!(parsed.len(), config.budget);
    }

    #[test]
    fn random_search_covers_a_one_dimensional_quadratic() {
        let obj = FnObjective::new(1, |x: ndarray::ArrayView1<f64>| (x[0] - 0.3).powi(2));
        let mut config = RunConfig::<f64>::default();
        config.ambient = 1;
        config.projected = 1;
        config.latent = 1;
        config.budget = 1000;
        config.initial = 2;
        for seed in 0..20 {
            let history = random_search_run(&obj, &config, seed).unwrap();
            assert!(history.final_incumbent().unwrap() < 0.01, "seed {seed}");
            let trace = history.incumbent_trace();
            assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn random_embedding_stays_in_the_cube_and_reruns_identically() {
        let obj = parse_objective::<f64>("rhe-sphere-D8-d2").unwrap();
        let mut config = small_config();
        config.record_x = true;
        let a = random_embedding_run(&obj, &config, 2).unwrap();
        let b = random_embedding_run(&obj, &config, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), config.budget);
        for e in a.evaluations() {
            assert!(e.x.as_ref().unwrap().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn identity_embedding_requires_square_dimensions() {
        let obj = parse_objective::<f64>("rhe-sphere-D8-d2").unwrap();
        let mut config = small_config();
        config.identity_embedding = true;
        assert!(random_embedding_run(&obj, &config, 1).is_err());
        config.projected = 8;
        config.box_half_width = Some(1.0);
        let history = random_embedding_run(&obj, &config, 1).unwrap();
        assert_eq!(history.len(), config.budget);
    }

    #[test]
    fn evaluation_failure_preserves_the_partial_history() {
        struct FailAfter {
            calls: AtomicUsize,
        }
        impl Objective<f64> for FailAfter {
            fn ambient_dim(&self) -> usize {
                1
            }
            fn evaluate(&self, x: ndarray::ArrayView1<f64>) -> Result<f64> {
                if self.calls.fetch_add(1, Ordering::SeqCst) >= 7 {
                    return Err(CoreError::NonFinite("simulated failure"));
                }
                Ok(x[0])
            }
        }
        let obj = FailAfter { calls: AtomicUsize::new(0) };
        let mut config = RunConfig::<f64>::default();
        config.ambient = 1;
        config.projected = 1;
        config.latent = 1;
        config.budget = 50;
        config.initial = 2;
        let failure = random_search_run(&obj, &config, 0).unwrap_err();
        assert_eq!(failure.partial.len(), 7);
        assert!(matches!(failure.error, CoreError::NonFinite(_)));
    }

    #[test]
    fn oracle_map_kind_needs_an_explicit_map() {
        let obj = parse_objective::<f64>("ackley-sphere-D8-d2").unwrap();
        let mut config = small_config();
        config.map = MapKind::MixedOracle;
        assert!(rpmbo_run(&obj, &config, 0).is_err());
        let map = obj.oracle_map().unwrap();
        config.map = MapKind::Sphere;
        let history = rpmbo_run_with_map(&obj, &config, map, 0).unwrap();
        assert_eq!(history.len(), config.budget);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let obj = parse_objective::<f64>("ackley-sphere-D8-d2").unwrap();
        let mut c = small_config();
        c.initial = 1;
        assert!(rpmbo_run(&obj, &c, 0).is_err());
        let mut c = small_config();
        c.budget = c.initial - 1;
        assert!(rpmbo_run(&obj, &c, 0).is_err());
        let mut c = small_config();
        c.projected = 9;
        assert!(rpmbo_run(&obj, &c, 0).is_err());
        let mut c = small_config();
        c.ambient = 9;
        assert!(rpmbo_run(&obj, &c, 0).is_err());
    }
}

