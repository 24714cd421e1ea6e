//! Overfitting study: train the feature map on a small labeled set under
//! four settings, fit a surrogate on the embedded data, and score how far
//! posterior samples stray from held-out targets. Repeats are paired: every
//! setting sees the same data, the same unlabeled set, and the same
//! initialization seed.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use rpmbo_core::benchmarks::{parse_objective, ComposedObjective, Objective};
use rpmbo_core::feature_map::FeatureMap;
use rpmbo_core::gp::{fit_data, FitOptions, GammaPrior, GpModel};
use rpmbo_core::losses::{train_feature_map, TrainingConfig, UnlabeledSet};
use rpmbo_core::manifold::SphereMap;
use rpmbo_core::nn::{NeuralMap, RescaleMode};
use rpmbo_core::projection::{latin_hypercube, SearchSpace};
use rpmbo_core::rng::{self, derive_seed, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// GP on raw coordinates, no feature map.
    OriginalGp,
    /// Neural map trained on the labeled loss alone.
    SupNn,
    /// Neural map trained with the consistency term.
    SemiNn,
    /// Sphere map trained with the consistency term.
    GeometryAware,
}

pub const ALL_SETTINGS: [Setting; 4] =
    [Setting::OriginalGp, Setting::SupNn, Setting::SemiNn, Setting::GeometryAware];

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::OriginalGp => "original-gp",
            Setting::SupNn => "sup-nn",
            Setting::SemiNn => "semi-nn",
            Setting::GeometryAware => "geometry-aware",
        })
    }
}

impl FromStr for Setting {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original-gp" => Ok(Setting::OriginalGp),
            "sup-nn" => Ok(Setting::SupNn),
            "semi-nn" => Ok(Setting::SemiNn),
            "geometry-aware" => Ok(Setting::GeometryAware),
            other => Err(HarnessError::InvalidArgument(format!(
                "unknown setting '{other}' (expected original-gp, sup-nn, semi-nn or geometry-aware)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OverfitSpec {
    pub objective: String,
    pub labeled_sizes: Vec<usize>,
    pub test_size: usize,
    pub settings: Vec<Setting>,
    /// Posterior sample count k in the loss.
    pub posterior_samples: usize,
    pub repeats: usize,
    /// Latent dimension of the sphere map in the geometry-aware setting.
    pub latent: usize,
    /// Hidden width of the neural map settings.
    pub hidden: usize,
    pub training: TrainingConfig<f64>,
    pub prior: GammaPrior<f64>,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for OverfitSpec {
    fn default() -> Self {
        OverfitSpec {
            objective: String::new(),
            labeled_sizes: vec![10, 30, 50, 70, 100],
            test_size: 20,
            settings: ALL_SETTINGS.to_vec(),
            posterior_samples: 100,
            repeats: 30,
            latent: 10,
            hidden: 32,
            training: TrainingConfig { blend_coefficients: 10, ..TrainingConfig::default() },
            prior: GammaPrior::default(),
            base_seed: 0,
            out_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverfitRow {
    pub setting: String,
    pub labeled_size: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

/// Sum over k posterior draws of the mean squared error against the test
/// targets. `map = None` scores a surrogate fit on raw coordinates.
pub fn overfit_metric(
    map: Option<&FeatureMap<f64>>,
    model: &GpModel<f64>,
    test_xs: &[Array1<f64>],
    test_ys: &[f64],
    k: usize,
    seed: u64,
) -> Result<f64> {
    if test_xs.is_empty() {
        return Err(HarnessError::InvalidArgument("empty test set".into()));
    }
    if test_xs.len() != test_ys.len() {
        return Err(HarnessError::InvalidArgument("test inputs and targets differ in length".into()));
    }
    if k == 0 {
        return Err(HarnessError::InvalidArgument("posterior sample count must be at least 1".into()));
    }
    let embedded = embed(map, test_xs)?;
    let factor = model.posterior_factor(embedded.view())?;
    let mut rng = rng::stream(seed, streams::POSTERIOR);
    let n = test_ys.len() as f64;
    let mut total = 0.0;
    for _ in 0..k {
        let draw = factor.draw(&mut rng);
        let sq: f64 = draw.iter().zip(test_ys).map(|(s, y)| (s - y) * (s - y)).sum();
        total += sq / n;
    }
    Ok(total)
}

fn embed(map: Option<&FeatureMap<f64>>, xs: &[Array1<f64>]) -> Result<Array2<f64>> {
    let dim = match map {
        Some(m) => m.ambient_dim(),
        None => xs[0].len(),
    };
    let mut out = Array2::zeros((xs.len(), dim));
    for (i, x) in xs.iter().enumerate() {
        let h = match map {
            Some(m) => m.apply(x.view())?,
            None => x.clone(),
        };
        out.row_mut(i).assign(&h);
    }
    Ok(out)
}

mod tags {
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const UNLABELED: u64 = 3;
    pub const MAP: u64 = 4;
    pub const METRIC: u64 = 5;
}

/// One trained-and-scored cell of the study.
fn score_setting(
    setting: Setting,
    objective: &ComposedObjective<f64>,
    spec: &OverfitSpec,
    train_xs: &[Array1<f64>],
    train_ys: &[f64],
    test_xs: &[Array1<f64>],
    test_ys: &[f64],
    unlabeled: &UnlabeledSet<f64>,
    map_seed: u64,
    metric_seed: u64,
) -> Result<f64> {
    let ambient = objective.ambient_dim();
    let options = FitOptions::default();
    // The surrogate hyperparameters are refit by MAP on the embedded data
    // below, matching how the optimizer loop treats a freshly trained map.
    let map = match setting {
        Setting::OriginalGp => None,
        Setting::SupNn | Setting::SemiNn => {
            let init = FeatureMap::Neural(NeuralMap::init(
                ambient,
                spec.hidden,
                map_seed,
                RescaleMode::OnlyIfOutside,
            )?);
            let mut training = spec.training.clone();
            if setting == Setting::SupNn {
                training.gamma = 0.0;
            }
            let outcome =
                train_feature_map(&init, 1.0, 0.01, train_xs, train_ys, unlabeled, &training, map_seed)?;
            Some(outcome.map)
        }
        Setting::GeometryAware => {
            let init = FeatureMap::Sphere(SphereMap::from_seed(ambient, spec.latent, map_seed)?);
            let outcome = train_feature_map(
                &init,
                1.0,
                0.01,
                train_xs,
                train_ys,
                unlabeled,
                &spec.training,
                map_seed,
            )?;
            Some(outcome.map)
        }
    };
    let inputs = embed(map.as_ref(), train_xs)?;
    let targets = Array1::from_vec(train_ys.to_vec());
    let model = fit_data(inputs, targets, &spec.prior, &options)?;
    overfit_metric(map.as_ref(), &model, test_xs, test_ys, spec.posterior_samples, metric_seed)
}

/// Losses for one repeat, laid out `[size][setting]`.
fn run_repeat(
    objective: &ComposedObjective<f64>,
    spec: &OverfitSpec,
    repeat: usize,
) -> Result<Vec<Vec<f64>>> {
    let space = SearchSpace::new(objective.ambient_dim())?;
    let n_sizes = spec.labeled_sizes.len();
    let test_xs =
        latin_hypercube::<f64>(spec.test_size, &space, derive_seed(spec.base_seed, tags::TEST, repeat as u64))?;
    let test_ys: Vec<f64> =
        test_xs.iter().map(|x| objective.eval_noiseless(x.view())).collect::<rpmbo_core::Result<_>>()?;
    let unlabeled = UnlabeledSet::sample(
        spec.training.unlabeled_points,
        spec.training.blend_coefficients,
        &space,
        derive_seed(spec.base_seed, tags::UNLABELED, repeat as u64),
    )?;

    let mut rows = Vec::with_capacity(n_sizes);
    for (si, &size) in spec.labeled_sizes.iter().enumerate() {
        let cell = (repeat * n_sizes + si) as u64;
        let train_xs =
            latin_hypercube::<f64>(size, &space, derive_seed(spec.base_seed, tags::TRAIN, cell))?;
        let train_ys: Vec<f64> =
            train_xs.iter().map(|x| objective.eval_noiseless(x.view())).collect::<rpmbo_core::Result<_>>()?;
        let map_seed = derive_seed(spec.base_seed, tags::MAP, cell);
        let metric_seed = derive_seed(spec.base_seed, tags::METRIC, cell);
        let mut per_setting = Vec::with_capacity(spec.settings.len());
        for &setting in &spec.settings {
            per_setting.push(score_setting(
                setting,
                objective,
                spec,
                &train_xs,
                &train_ys,
                &test_xs,
                &test_ys,
                &unlabeled,
                map_seed,
                metric_seed,
            )?);
        }
        rows.push(per_setting);
    }
    Ok(rows)
}

/// Runs the full grid and writes `overfit.csv` (setting, labeled size,
/// mean, std, median over repeats) under the spec's output directory.
pub fn run_overfit_study(spec: &OverfitSpec) -> Result<Vec<OverfitRow>> {
    if spec.labeled_sizes.is_empty() || spec.labeled_sizes.contains(&0) {
        return Err(HarnessError::InvalidArgument("labeled sizes must be positive".into()));
    }
    if spec.settings.is_empty() {
        return Err(HarnessError::InvalidArgument("no settings selected".into()));
    }
    if spec.repeats == 0 {
        return Err(HarnessError::InvalidArgument("repeats must be at least 1".into()));
    }
    let objective = parse_objective::<f64>(&spec.objective)?;

    // [repeat][size][setting]
    let per_repeat: Vec<Vec<Vec<f64>>> = (0..spec.repeats)
        .into_par_iter()
        .map(|r| run_repeat(&objective, spec, r))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (si, &size) in spec.labeled_sizes.iter().enumerate() {
        for (gi, &setting) in spec.settings.iter().enumerate() {
            let losses: Vec<f64> = per_repeat.iter().map(|rep| rep[si][gi]).collect();
            rows.push(summarize(setting, size, &losses));
        }
    }

    fs::create_dir_all(&spec.out_dir)?;
    let path = spec.out_dir.join("overfit.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(rows)
}

fn summarize(setting: Setting, size: usize, losses: &[f64]) -> OverfitRow {
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let std = if losses.len() < 2 {
        0.0
    } else {
        (losses.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = crate::experiment::quantile_sorted(&sorted, 0.5);
    OverfitRow { setting: setting.to_string(), labeled_size: size, mean, std, median }
}
