use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rpmbo_harness::experiment::{
    final_incumbents_from_dir, read_aggregate_csv, run_experiment, ExperimentSpec, Method,
};
use rpmbo_harness::msweep::{m_sweep, max_relative_spread, MSweepSpec};
use rpmbo_harness::overfit::{run_overfit_study, OverfitSpec};
use rpmbo_harness::plot::{line_chart, Series};
use rpmbo_harness::wilcoxon::wilcoxon_signed_rank;
use rpmbo_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "rpmbo", version, about = "Experiment runner and reporting tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one objective over a block of seeds.
    Run(RunArgs),
    /// Train the feature map under several settings and score posterior fit.
    Overfit(OverfitArgs),
    /// Run the same experiment for several projected dimensions.
    Msweep(MsweepArgs),
    /// One-sided Wilcoxon signed-rank test on two directories of traces.
    Compare(CompareArgs),
    /// Re-render an SVG chart from aggregate CSV files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; the remaining flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    /// Number of repeated runs; seeds are base_seed..base_seed+N.
    #[arg(long)]
    seeds: Option<usize>,
    /// Evaluation budget per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Projected dimension m.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverfitArgs {
    /// JSON study spec; the remaining flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    /// Number of paired repeats.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MsweepArgs {
    /// JSON sweep spec; the remaining flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    /// Number of repeated runs per m.
    #[arg(long)]
    seeds: Option<usize>,
    /// Evaluation budget per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Projected dimensions to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory holding the candidate's {method}-seed*.jsonl traces.
    dir_a: PathBuf,
    /// Directory holding the baseline's traces.
    dir_b: PathBuf,
    /// Method name of the candidate traces.
    #[arg(long, default_value = "rpmbo")]
    method_a: Method,
    /// Method name of the baseline traces.
    #[arg(long, default_value = "random-search")]
    method_b: Method,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSV files (iteration, median, q25, q75), one series each.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "convergence")]
    title: String,
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn require_objective(objective: &str) -> Result<()> {
    if objective.is_empty() {
        return Err(HarnessError::InvalidArgument(
            "no objective given (use --objective or a config file)".into(),
        ));
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut spec: ExperimentSpec =
        args.config.as_ref().map(load_json).transpose()?.unwrap_or_default();
    if let Some(objective) = args.objective {
        spec.objective = objective;
    }
    if let Some(method) = args.method {
        spec.method = method;
    }
    if let Some(seeds) = args.seeds {
        spec.repeat = seeds;
    }
    if let Some(budget) = args.budget {
        spec.config.budget = budget;
    }
    if let Some(m) = args.m {
        spec.config.projected = m;
    }
    if let Some(out) = args.out {
        spec.out_dir = out;
    }
    require_objective(&spec.objective)?;

    let report = run_experiment(&spec)?;
    for (seed, history) in spec.seeds().iter().zip(&report.histories) {
        let best = history.final_incumbent().unwrap_or(f64::NAN);
        println!("seed {seed}: final incumbent {best:.6e}");
    }
    println!("traces: {} files under {}", report.trace_paths.len(), spec.out_dir.display());
    println!("aggregate: {}", report.csv_path.display());
    println!("plot: {}", report.svg_path.display());
    Ok(())
}

fn cmd_overfit(args: OverfitArgs) -> Result<()> {
    let mut spec: OverfitSpec =
        args.config.as_ref().map(load_json).transpose()?.unwrap_or_default();
    if let Some(objective) = args.objective {
        spec.objective = objective;
    }
    if let Some(seeds) = args.seeds {
        spec.repeats = seeds;
    }
    if let Some(out) = args.out {
        spec.out_dir = out;
    }
    require_objective(&spec.objective)?;

    let rows = run_overfit_study(&spec)?;
    println!("{:<16} {:>6} {:>14} {:>14} {:>14}", "setting", "size", "mean", "std", "median");
    for row in &rows {
        println!(
            "{:<16} {:>6} {:>14.4} {:>14.4} {:>14.4}",
            row.setting, row.labeled_size, row.mean, row.std, row.median
        );
    }
    println!("table: {}", spec.out_dir.join("overfit.csv").display());
    Ok(())
}

fn cmd_msweep(args: MsweepArgs) -> Result<()> {
    let mut spec: MSweepSpec =
        args.config.as_ref().map(load_json).transpose()?.unwrap_or_default();
    if let Some(objective) = args.objective {
        spec.objective = objective;
    }
    if let Some(method) = args.method {
        spec.method = method;
    }
    if let Some(seeds) = args.seeds {
        spec.repeat = seeds;
    }
    if let Some(budget) = args.budget {
        spec.config.budget = budget;
    }
    if !args.m.is_empty() {
        spec.m_values = args.m;
    }
    if let Some(out) = args.out {
        spec.out_dir = out;
    }
    require_objective(&spec.objective)?;

    let report = m_sweep(&spec)?;
    for &(m, median) in &report.final_medians {
        println!("m={m}: final median {median:.6e}");
    }
    println!("max relative spread: {:.4}", max_relative_spread(&report.final_medians));
    println!("merged table: {}", report.csv_path.display());
    println!("plot: {}", report.svg_path.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let a = final_incumbents_from_dir(&args.dir_a, args.method_a)?;
    let b = final_incumbents_from_dir(&args.dir_b, args.method_b)?;
    if a.len() != b.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "trace counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let p = wilcoxon_signed_rank(&a, &b)?;
    let median_a = median(&a);
    let median_b = median(&b);
    println!("{} median final incumbent: {median_a:.6e}", args.method_a);
    println!("{} median final incumbent: {median_b:.6e}", args.method_b);
    println!("one-sided p ({} below {}): {p:.6e}", args.method_a, args.method_b);
    Ok(())
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.total_cmp(y));
    rpmbo_harness::experiment::quantile_sorted(&sorted, 0.5)
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let mut series = Vec::with_capacity(args.csv.len());
    for path in &args.csv {
        let rows = read_aggregate_csv(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("series")
            .to_string();
        series.push(Series {
            name,
            points: rows.iter().map(|r| (r.iteration as f64, r.median)).collect(),
            band: Some(rows.iter().map(|r| (r.iteration as f64, r.q25, r.q75)).collect()),
        });
    }
    let svg = line_chart(&args.title, "evaluations", "incumbent", &series);
    fs::write(&args.out, svg)?;
    println!("plot: {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Overfit(args) => cmd_overfit(args),
        Command::Msweep(args) => cmd_msweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
