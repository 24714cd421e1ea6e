//! One experiment = one objective, one method, one config, many seeds.
//! Every run writes its own JSONL trace; the aggregate CSV and the SVG plot
//! are derived from the traces alone, so reruns with the same spec reproduce
//! every output byte for byte.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::plot::{line_chart, Series};
use rpmbo_core::benchmarks::{parse_objective, ComposedObjective, Objective};
use rpmbo_core::run::{
    random_embedding_run, random_search_run, rpmbo_run, rpmbo_run_with_map, History, MapKind,
    RunConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Rpmbo,
    RandomSearch,
    RandomEmbedding,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Rpmbo => "rpmbo",
            Method::RandomSearch => "random-search",
            Method::RandomEmbedding => "random-embedding",
        })
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rpmbo" => Ok(Method::Rpmbo),
            "random-search" => Ok(Method::RandomSearch),
            "random-embedding" => Ok(Method::RandomEmbedding),
            other => Err(HarnessError::InvalidArgument(format!(
                "unknown method '{other}' (expected rpmbo, random-search or random-embedding)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub objective: String,
    pub method: Method,
    pub config: RunConfig<f64>,
    /// Number of repeated runs; seeds are `base_seed..base_seed + repeat`.
    pub repeat: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            objective: String::new(),
            method: Method::Rpmbo,
            config: RunConfig::default(),
            repeat: 10,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentSpec {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeat as u64).map(|i| self.base_seed + i).collect()
    }
}

pub struct ExperimentReport {
    pub histories: Vec<History<f64>>,
    pub trace_paths: Vec<PathBuf>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Runs one seed of the spec'd method. The config's ambient dimension is
/// taken from the objective, not the config.
pub fn run_single(
    objective: &ComposedObjective<f64>,
    method: Method,
    config: &RunConfig<f64>,
    seed: u64,
) -> Result<History<f64>> {
    let outcome = match method {
        Method::Rpmbo => {
            if config.map == MapKind::MixedOracle {
                let map = objective.oracle_map()?;
                rpmbo_run_with_map(objective, config, map, seed)
            } else {
                rpmbo_run(objective, config, seed)
            }
        }
        Method::RandomSearch => random_search_run(objective, config, seed),
        Method::RandomEmbedding => random_embedding_run(objective, config, seed),
    };
    outcome.map_err(|failure| HarnessError::Run(format!("seed {seed}: {failure}")))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.repeat == 0 {
        return Err(HarnessError::InvalidArgument("repeat must be at least 1".into()));
    }
    let objective = parse_objective::<f64>(&spec.objective)?;
    let mut config = spec.config.clone();
    config.ambient = objective.ambient_dim();

    fs::create_dir_all(&spec.out_dir)?;

    let seeds = spec.seeds();
    let histories: Vec<History<f64>> = seeds
        .par_iter()
        .map(|&seed| run_single(&objective, spec.method, &config, seed))
        .collect::<Result<_>>()?;

    let mut trace_paths = Vec::with_capacity(histories.len());
    for (seed, history) in seeds.iter().zip(&histories) {
        let path = spec.out_dir.join(format!("{}-seed{seed}.jsonl", spec.method));
        fs::write(&path, history.to_jsonl())?;
        trace_paths.push(path);
    }

    let csv_path = spec.out_dir.join(format!("{}-aggregate.csv", spec.method));
    let table = aggregate(&histories)?;
    write_aggregate_csv(&csv_path, &table)?;

    let svg_path = spec.out_dir.join(format!("{}-convergence.svg", spec.method));
    let series = Series {
        name: spec.method.to_string(),
        points: table.iter().map(|r| (r.iteration as f64, r.median)).collect(),
        band: Some(table.iter().map(|r| (r.iteration as f64, r.q25, r.q75)).collect()),
    };
    let svg = line_chart(
        &format!("{} on {}", spec.method, spec.objective),
        "evaluations",
        "incumbent",
        &[series],
    );
    fs::write(&svg_path, svg)?;

    Ok(ExperimentReport { histories, trace_paths, csv_path, svg_path })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Per-iteration quartiles of the incumbent across runs. All runs must share
/// a budget.
pub fn aggregate(histories: &[History<f64>]) -> Result<Vec<AggregateRow>> {
    if histories.is_empty() {
        return Err(HarnessError::InvalidArgument("no runs to aggregate".into()));
    }
    let len = histories[0].len();
    if histories.iter().any(|h| h.len() != len) {
        return Err(HarnessError::InvalidArgument("runs have differing lengths".into()));
    }
    let traces: Vec<Vec<f64>> = histories.iter().map(|h| h.incumbent_trace()).collect();
    let mut rows = Vec::with_capacity(len);
    for t in 0..len {
        let mut values: Vec<f64> = traces.iter().map(|tr| tr[t]).collect();
        values.sort_by(|a, b| a.total_cmp(b));
        rows.push(AggregateRow {
            iteration: t,
            median: quantile_sorted(&values, 0.5),
            q25: quantile_sorted(&values, 0.25),
            q75: quantile_sorted(&values, 0.75),
        });
    }
    Ok(rows)
}

/// Linear interpolation between order statistics (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Final incumbent of every trace file in a directory matching
/// `{method}-seed*.jsonl`, ordered by seed. Used by the compare subcommand.
pub fn final_incumbents_from_dir(dir: &Path, method: Method) -> Result<Vec<f64>> {
    let prefix = format!("{method}-seed");
    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        if let Some(rest) = name.strip_prefix(&prefix) {
            if let Some(seed_text) = rest.strip_suffix(".jsonl") {
                if let Ok(seed) = seed_text.parse::<u64>() {
                    entries.push((seed, path));
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(HarnessError::InvalidArgument(format!(
            "no {prefix}*.jsonl traces under {}",
            dir.display()
        )));
    }
    entries.sort_by_key(|(seed, _)| *seed);
    let mut finals = Vec::with_capacity(entries.len());
    for (seed, path) in entries {
        let text = fs::read_to_string(&path)?;
        let history = History::<f64>::from_jsonl(&text)?;
        let value = history.final_incumbent().ok_or_else(|| {
            HarnessError::InvalidArgument(format!("empty trace for seed {seed}"))
        })?;
        finals.push(value);
    }
    Ok(finals)
}
