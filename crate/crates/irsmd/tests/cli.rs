//! Integration tests for the experiment harness and the `irsmd` binary:
//! config handling, artifact schemas, determinism, and budget contracts.

use irsmd::config::RunConfig;
use irsmd::experiment::{self, StarKind};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

/// Writes the 2-D toy (f(x) = x1^2 on [-1,1]^2, elastic net) as data files
/// plus a config, and returns the config path.
fn write_toy_config(dir: &Path, extra_run: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("A.csv"), "1,0\n").unwrap();
    std::fs::write(dir.join("b.csv"), "0\n").unwrap();
    let cfg = format!(
        "[problem]\nkind = least-squares\nmatrix = A.csv\nrhs = b.csv\nmu_h = 0.5\n\n\
         [set]\nkind = box\nlower = -1\nupper = 1\n\n\
         [schedule]\ndelta = 0.1\ngamma0 = 1\nlambda0 = 1\nr = 0\n\n\
         [run]\nx0 = const:1\nseed = 5\n{extra_run}\n\
         [output]\ndir = out\n"
    );
    let path = dir.join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn experiment_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "iterations = 2000\npaths = 2\n");
    let cfg = RunConfig::from_file(&cfg_path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();

    assert_eq!(outcome.reports.len(), 2);
    assert!(outcome.reports.iter().all(|r| r.is_ok()));
    let out = dir.path().join("out");
    for name in ["path-000.csv", "path-001.csv", "aggregate.csv", "summary.txt", "plot_f.dat", "plot_h.dat"] {
        assert!(out.join(name).exists(), "missing artifact {name}");
    }
    // f* comes from the certified least-squares route, h* from the grid.
    assert_eq!(outcome.f_star_kind, StarKind::Certified);
    assert_eq!(outcome.h_star_kind, StarKind::Certified);
    assert!(outcome.f_star.abs() < 1e-10);

    // The summary is flat key = value lines.
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.lines().all(|l| l.trim().is_empty() || l.contains(" = ")));
    assert!(summary.contains("paths = 2"));
}

#[test]
fn trace_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "iterations = 500\npaths = 1\n");
    let cfg = RunConfig::from_file(&cfg_path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    let report = outcome.reports[0].as_ref().unwrap();

    let text = std::fs::read_to_string(dir.path().join("out/path-000.csv")).unwrap();
    assert!(text.starts_with("k,gamma,lambda,f_gap,h_gap,elapsed_ms\n"));
    let rows = experiment::parse_trace_csv(&text).unwrap();
    assert_eq!(rows.len(), report.trace.len());
    // Re-serializing the parsed rows reproduces the file byte for byte.
    let mut rebuilt = String::from("k,gamma,lambda,f_gap,h_gap,elapsed_ms\n");
    for (k, gamma, lambda, f, h, ms) in &rows {
        rebuilt.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k,
            gamma,
            lambda,
            f.map_or(String::new(), |v| v.to_string()),
            h.map_or(String::new(), |v| v.to_string()),
            ms
        ));
    }
    assert_eq!(text, rebuilt);
    // k strictly increasing.
    for w in rows.windows(2) {
        assert!(w[1].0 > w[0].0);
    }
}

#[test]
fn reruns_are_deterministic_and_paths_independent_of_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "iterations = 1000\npaths = 2\n");
    let cfg = RunConfig::from_file(&cfg_path).unwrap();
    experiment::run_experiment(&cfg).unwrap();
    let strip_elapsed = |text: &str| -> String {
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first_agg = std::fs::read_to_string(dir.path().join("out/aggregate.csv")).unwrap();
    let first_p0 = strip_elapsed(&std::fs::read_to_string(dir.path().join("out/path-000.csv")).unwrap());
    let first_p1 = strip_elapsed(&std::fs::read_to_string(dir.path().join("out/path-001.csv")).unwrap());

    // Re-run: the aggregate is identical.
    experiment::run_experiment(&cfg).unwrap();
    let again = std::fs::read_to_string(dir.path().join("out/aggregate.csv")).unwrap();
    assert_eq!(first_agg, again);

    // More paths never change existing paths (timing column aside).
    let mut wider = cfg.clone();
    wider.paths = 4;
    experiment::run_experiment(&wider).unwrap();
    let p0 = strip_elapsed(&std::fs::read_to_string(dir.path().join("out/path-000.csv")).unwrap());
    let p1 = strip_elapsed(&std::fs::read_to_string(dir.path().join("out/path-001.csv")).unwrap());
    assert_eq!(first_p0, p0);
    assert_eq!(first_p1, p1);
    assert!(dir.path().join("out/path-003.csv").exists());
}

#[test]
fn wall_clock_budget_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "wall_clock_seconds = 0.2\npaths = 2\nthreads = 2\n");
    let cfg = RunConfig::from_file(&cfg_path).unwrap();
    let started = Instant::now();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    assert!(started.elapsed().as_secs_f64() < 10.0);
    for rep in outcome.reports.iter().flatten() {
        assert!(rep.iterations > 0);
    }
}

#[test]
fn experiment_refuses_invalid_schedule_without_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("A.csv"), "1,0\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "0\n").unwrap();
    // gamma0*lambda0 = 8 > L/mu_h = 2.
    let cfg = "[problem]\nkind = least-squares\nmatrix = A.csv\nrhs = b.csv\nmu_h = 0.5\n\
               [schedule]\ndelta = 0.1\ngamma0 = 4\nlambda0 = 2\n[run]\niterations = 10\n\
               [output]\ndir = out\n";
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, cfg).unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    assert!(experiment::run_experiment(&cfg).is_err());

    let mut overridden = cfg.clone();
    overridden.override_validation = true;
    let outcome = experiment::run_experiment(&overridden).unwrap();
    assert!(outcome.reports[0].is_ok());
}

#[test]
fn sparse_hinge_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("data.txt"),
        "+1 1:1.0 3:0.5\n-1 2:1.0\n+1 1:0.7\n-1 2:0.4 3:0.1\n",
    )
    .unwrap();
    let cfg = "[problem]\nkind = hinge\ndata = data.txt\nmu_h = 0.1\n\
               [schedule]\ndelta = 0.1\ngamma0 = 1\nlambda0 = 0.5\n\
               [run]\niterations = 3000\npaths = 3\nseed = 1\n[output]\ndir = out\n";
    let path = dir.path().join("hinge.cfg");
    std::fs::write(&path, cfg).unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    assert!(outcome.reports.iter().all(|r| r.is_ok()));
    assert!(!outcome.aggregate.is_empty());
}

#[test]
fn two_stage_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("problem.2s"),
        "[problem]\nfirst_stage_dim = 1\nsecond_stage_dim = 1\n\
         first_stage_lower = 0\nfirst_stage_upper = 1.5\n\
         second_stage_lower = 0\nsecond_stage_upper = 2\n\
         [objective]\nc_quad = 2\n\
         [scenario]\nprobability = 0.5\nq_quad = 2\n\
         [scenario]\nprobability = 0.5\nq_quad = 2\n\
         [constraint.coupling]\nt_coeffs = -1\nw = -1 1\nw = -1 2\n",
    )
    .unwrap();
    let cfg = "[problem]\nkind = two-stage\nfile = problem.2s\n\
               [schedule]\ndelta = 0.1\ngamma0 = 0.5\nlambda0 = 2\nr = -1\n\
               [run]\niterations = 20000\npaths = 2\n[output]\ndir = out\n";
    let path = dir.path().join("ts.cfg");
    std::fs::write(&path, cfg).unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    assert!(outcome.reports.iter().all(|r| r.is_ok()));
    // The two-stage inner optimum is the penalty encoding's zero.
    assert_eq!(outcome.f_star, 0.0);
    assert_eq!(outcome.f_star_kind, StarKind::Constructed);
    // Grid enumeration certifies h* for this 3-dimensional stack.
    assert_eq!(outcome.h_star_kind, StarKind::Certified);
}

#[test]
fn monotone_feasibility_gap_on_deterministic_toy() {
    // Single-scenario least squares is deterministic regardless of sampling;
    // the aggregate f-gap column trends down after burn-in.
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "iterations = 10000\npaths = 1\n");
    let cfg = RunConfig::from_file(&cfg_path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    let gaps: Vec<f64> = outcome
        .aggregate
        .iter()
        .filter(|row| row.k >= 100)
        .map(|row| row.mean_f_gap)
        .collect();
    assert!(gaps.len() >= 4);
    for w in gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "f-gap column not monotone: {gaps:?}");
    }
}

#[test]
fn initial_point_from_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("A.csv"), "1,0\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "0\n").unwrap();
    std::fs::write(dir.path().join("x0.csv"), "0.5\n-0.5\n").unwrap();
    let cfg = "[problem]\nkind = least-squares\nmatrix = A.csv\nrhs = b.csv\nmu_h = 0.5\n\
               [set]\nkind = box\nlower = -1\nupper = 1\n\
               [schedule]\ndelta = 0.1\n[run]\nx0 = file:x0.csv\niterations = 10\n\
               [output]\ndir = out\n";
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, cfg).unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    assert!(experiment::run_experiment(&cfg).is_ok());

    // Wrong length is rejected.
    std::fs::write(dir.path().join("x0.csv"), "0.5\n-0.5\n0.1\n").unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    assert!(experiment::run_experiment(&cfg).is_err());
}

#[test]
fn synthetic_least_squares_config_runs_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[problem]\nkind = synthetic-least-squares\ncols = 5\nrank = 3\nmu_h = 0.5\n\
               [schedule]\ndelta = 0.1\ngamma0 = 1\nlambda0 = 1\n\
               [run]\niterations = 200000\npaths = 4\nseed = 3\n[output]\ndir = out\n";
    let path = dir.path().join("synth.cfg");
    std::fs::write(&path, cfg).unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    let outcome = experiment::run_experiment(&cfg).unwrap();
    assert_eq!(outcome.f_star_kind, StarKind::Certified);
    assert!((outcome.f_star - 2.0).abs() < 1e-6, "f* = {}", outcome.f_star);
    // The fitted mean-gap slope is negative (the gap decays).
    let (slope, _) =
        experiment::rate_fit_from_aggregate(&dir.path().join("out/aggregate.csv"), "f").unwrap();
    assert!(slope < 0.0, "slope {slope}");
}

#[test]
fn binary_validate_run_and_rate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_toy_config(dir.path(), "iterations = 4000\npaths = 1\n");
    let bin = env!("CARGO_BIN_EXE_irsmd");

    let out = Command::new(bin)
        .args(["validate", "--delta", "0.1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("convergence conditions: pass"));
    assert!(text.contains("recursive-bound conditions: FAIL"));

    let out = Command::new(bin)
        .args(["validate", "--a", "0.55", "--b", "0.1"])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("recursive-bound conditions: pass"));

    let out = Command::new(bin)
        .args(["validate", "--config"])
        .arg(&cfg_path)
        .args(["--probe", "1000"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("convergence conditions: pass"));
    assert!(text.contains("series probes"));

    let out = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("f_star_kind = certified"));

    let out = Command::new(bin)
        .args(["rate-fit", "--aggregate"])
        .arg(dir.path().join("out/aggregate.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("slope = "));

    // Contradictory budgets are rejected at the flag level.
    let out = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--iterations", "10", "--wall-clock-seconds", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
