//! Sweep of the projected dimension m: one experiment per value, plus a
//! merged CSV and a single plot overlaying the convergence medians.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, AggregateRow, ExperimentSpec, Method};
use crate::plot::{line_chart, Series};
use rpmbo_core::benchmarks::{parse_objective, Objective};
use rpmbo_core::run::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MSweepSpec {
    pub objective: String,
    pub m_values: Vec<usize>,
    pub method: Method,
    pub config: RunConfig<f64>,
    pub repeat: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for MSweepSpec {
    fn default() -> Self {
        MSweepSpec {
            objective: String::new(),
            m_values: vec![10, 15, 20],
            method: Method::Rpmbo,
            config: RunConfig::default(),
            repeat: 10,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MSweepRow {
    pub m: usize,
    pub iteration: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub struct MSweepReport {
    pub rows: Vec<MSweepRow>,
    /// Final-iteration median per m, in sweep order.
    pub final_medians: Vec<(usize, f64)>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

pub fn m_sweep(spec: &MSweepSpec) -> Result<MSweepReport> {
    if spec.m_values.is_empty() {
        return Err(HarnessError::InvalidArgument("empty m list".into()));
    }
    let ambient = parse_objective::<f64>(&spec.objective)?.ambient_dim();
    for &m in &spec.m_values {
        if m == 0 || m >= ambient {
            return Err(HarnessError::InvalidArgument(format!(
                "projected dimension {m} must lie in 1..{ambient}"
            )));
        }
    }

    let mut rows = Vec::new();
    let mut final_medians = Vec::with_capacity(spec.m_values.len());
    let mut series = Vec::with_capacity(spec.m_values.len());
    for &m in &spec.m_values {
        let mut config = spec.config.clone();
        config.projected = m;
        let sub = ExperimentSpec {
            objective: spec.objective.clone(),
            method: spec.method,
            config,
            repeat: spec.repeat,
            base_seed: spec.base_seed,
            out_dir: spec.out_dir.join(format!("m{m}")),
        };
        let report = run_experiment(&sub)?;
        let table = crate::experiment::aggregate(&report.histories)?;
        push_rows(&mut rows, m, &table);
        if let Some(last) = table.last() {
            final_medians.push((m, last.median));
        }
        series.push(Series {
            name: format!("m={m}"),
            points: table.iter().map(|r| (r.iteration as f64, r.median)).collect(),
            band: Some(table.iter().map(|r| (r.iteration as f64, r.q25, r.q75)).collect()),
        });
    }

    fs::create_dir_all(&spec.out_dir)?;
    let csv_path = spec.out_dir.join("msweep.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;

    let svg_path = spec.out_dir.join("msweep.svg");
    let svg = line_chart(
        &format!("{} on {}, projected dimension sweep", spec.method, spec.objective),
        "evaluations",
        "incumbent",
        &series,
    );
    fs::write(&svg_path, svg)?;

    Ok(MSweepReport { rows, final_medians, csv_path, svg_path })
}

fn push_rows(rows: &mut Vec<MSweepRow>, m: usize, table: &[AggregateRow]) {
    for r in table {
        rows.push(MSweepRow { m, iteration: r.iteration, median: r.median, q25: r.q25, q75: r.q75 });
    }
}

/// Largest relative gap between final medians: max |a−b| / min |median|.
/// Guards the robustness claim that performance is stable across m.
pub fn max_relative_spread(final_medians: &[(usize, f64)]) -> f64 {
    let values: Vec<f64> = final_medians.iter().map(|&(_, v)| v).collect();
    let mut spread: f64 = 0.0;
    let mut floor = f64::INFINITY;
    for &v in &values {
        floor = floor.min(v.abs());
    }
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            spread = spread.max((values[i] - values[j]).abs());
        }
    }
    if floor == 0.0 {
        if spread == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        spread / floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rpmbo_core::losses::TrainingConfig;
    use rpmbo_core::run::MapKind;

    fn tiny_config() -> RunConfig<f64> {
        RunConfig {
            projected: 3,
            latent: 2,
            map: MapKind::Sphere,
            budget: 10,
            initial: 6,
            restarts: 2,
            train_every: 4,
            training: TrainingConfig {
                unlabeled_points: 8,
                blend_coefficients: 2,
                steps: 8,
                ..TrainingConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn singleton_sweep_matches_a_plain_experiment() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        let spec = MSweepSpec {
            objective: "ackley-sphere-D8-d2".into(),
            m_values: vec![3],
            config: tiny_config(),
            repeat: 2,
            base_seed: 5,
            out_dir: base.join("sweep"),
            ..MSweepSpec::default()
        };
        let report = m_sweep(&spec).unwrap();

        let plain = ExperimentSpec {
            objective: spec.objective.clone(),
            method: Method::Rpmbo,
            config: tiny_config(),
            repeat: 2,
            base_seed: 5,
            out_dir: base.join("plain"),
        };
        let reference = run_experiment(&plain).unwrap();
        let table = crate::experiment::aggregate(&reference.histories).unwrap();

        assert_eq!(report.rows.len(), table.len());
        for (row, r) in report.rows.iter().zip(&table) {
            assert_eq!(row.m, 3);
            assert_eq!(row.iteration, r.iteration);
            assert_eq!(row.median, r.median);
            assert_eq!(row.q25, r.q25);
            assert_eq!(row.q75, r.q75);
        }
    }

    #[test]
    fn row_count_is_m_values_times_iterations() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MSweepSpec {
            objective: "ackley-sphere-D8-d2".into(),
            m_values: vec![3, 4],
            config: tiny_config(),
            repeat: 2,
            base_seed: 1,
            out_dir: dir.path().to_path_buf(),
            ..MSweepSpec::default()
        };
        let report = m_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 2 * spec.config.budget);
        assert!(report.csv_path.exists());
        assert!(report.svg_path.exists());
    }

    #[test]
    fn sweep_rejects_m_at_or_above_ambient() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MSweepSpec {
            objective: "ackley-sphere-D8-d2".into(),
            m_values: vec![8],
            config: tiny_config(),
            repeat: 1,
            out_dir: dir.path().to_path_buf(),
            ..MSweepSpec::default()
        };
        assert!(m_sweep(&spec).is_err());
    }

    #[test]
    fn relative_spread_handles_edge_cases() {
        assert_eq!(max_relative_spread(&[(10, 2.0), (15, 3.0)]), 0.5);
        assert_eq!(max_relative_spread(&[(10, 1.0)]), 0.0);
        assert_eq!(max_relative_spread(&[(10, 0.0), (15, 0.0)]), 0.0);
        assert!(max_relative_spread(&[(10, 0.0), (15, 1.0)]).is_infinite());
    }
}
