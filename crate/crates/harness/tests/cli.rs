//! Drives the installed binary end to end: config loading, flag overrides,
//! and every subcommand's happy path plus the common failure shapes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rpmbo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpmbo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const RUN_CONFIG: &str = r#"{
  "objective": "ackley-sphere-D8-d2",
  "method": "rpmbo",
  "repeat": 5,
  "out_dir": "traces-a",
  "config": {
    "projected": 3,
    "latent": 2,
    "budget": 8,
    "initial": 5,
    "restarts": 2,
    "train_every": 4,
    "training": { "unlabeled_points": 8, "blend_coefficients": 2, "steps": 8 }
  }
}"#;

#[test]
fn subcommands_compose_into_a_full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("run.json"), RUN_CONFIG).unwrap();

    // run: config file, then the same config with flag overrides.
    let out = stdout(&rpmbo(&["run", "--config", "run.json"], root));
    assert!(out.contains("seed 0"), "missing per-seed line:\n{out}");
    assert!(out.contains("seed 4"));
    assert!(root.join("traces-a/rpmbo-seed0.jsonl").exists());
    assert!(root.join("traces-a/rpmbo-aggregate.csv").exists());
    assert!(root.join("traces-a/rpmbo-convergence.svg").exists());

    stdout(&rpmbo(
        &[
            "run",
            "--config",
            "run.json",
            "--method",
            "random-search",
            "--out",
            "traces-b",
        ],
        root,
    ));
    assert!(root.join("traces-b/random-search-seed0.jsonl").exists());

    // compare: candidate traces against the baseline traces.
    let out = stdout(&rpmbo(&["compare", "traces-a", "traces-b"], root));
    assert!(out.contains("one-sided p"), "missing p-value line:\n{out}");

    // plot: re-render both aggregates into one chart.
    let out = stdout(&rpmbo(
        &[
            "plot",
            "traces-a/rpmbo-aggregate.csv",
            "traces-b/random-search-aggregate.csv",
            "--out",
            "merged.svg",
            "--title",
            "desk check",
        ],
        root,
    ));
    assert!(out.contains("merged.svg"));
    let svg = fs::read_to_string(root.join("merged.svg")).unwrap();
    assert!(svg.contains("rpmbo-aggregate"));
    assert!(svg.contains("random-search-aggregate"));

    // msweep: flags alone, no config file.
    let out = stdout(&rpmbo(
        &[
            "msweep",
            "--config",
            "msweep.json",
            "--m",
            "3,4",
            "--out",
            "sweep",
        ],
        &{
            fs::write(
                root.join("msweep.json"),
                RUN_CONFIG.replace("\"out_dir\": \"traces-a\"", "\"out_dir\": \"unused\"")
                    .replace("\"repeat\": 5", "\"repeat\": 1"),
            )
            .unwrap();
            root.to_path_buf()
        },
    ));
    assert!(out.contains("m=3"), "missing sweep line:\n{out}");
    assert!(out.contains("m=4"));
    assert!(root.join("sweep/msweep.csv").exists());
    assert!(root.join("sweep/m3/rpmbo-aggregate.csv").exists());
}

#[test]
fn overfit_subcommand_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(
        root.join("overfit.json"),
        r#"{
          "objective": "rhe-sphere-D8-d2",
          "labeled_sizes": [5],
          "test_size": 5,
          "posterior_samples": 8,
          "repeats": 2,
          "latent": 2,
          "hidden": 8,
          "training": { "unlabeled_points": 8, "blend_coefficients": 2, "steps": 8 },
          "out_dir": "study"
        }"#,
    )
    .unwrap();
    let out = stdout(&rpmbo(&["overfit", "--config", "overfit.json"], root));
    assert!(out.contains("original-gp"), "missing setting row:\n{out}");
    assert!(out.contains("geometry-aware"));
    assert!(root.join("study/overfit.csv").exists());
}

#[test]
fn missing_objective_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpmbo(&["run"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no objective"), "unexpected stderr: {err}");
}

#[test]
fn unknown_method_is_rejected_at_parse_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = rpmbo(
        &["run", "--objective", "ackley-sphere-D8-d2", "--method", "simulated-annealing"],
        dir.path(),
    );
    assert!(!out.status.success());
}
