//! End-to-end tests of the experiment commands, driven both in-process and
//! through the installed binary.
//!
//! The in-process tests pin the documented stream conventions (data from
//! subkey 0, replicate `r` from subkey `1 + r`) by reproducing command
//! output with direct library calls; the binary tests pin argument parsing,
//! exit codes, and the worker-count independence of the output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swarmfilt::kalman::{kalman_forecast_obs, kalman_run, LgParams};
use swarmfilt::model::TimeSeries;
use swarmfilt::models::{lg_f2, simulate, sv_model};
use swarmfilt::rng::{derive_key, RngStream};
use swarmfilt::swarm::{run_swarm, EstimatorKind, SwarmConfig};
use swarmfilt_cli::commands::{
    cmd_convergence_study, cmd_forecast, cmd_replication_study, cmd_simulate,
};
use swarmfilt_cli::config::ExperimentConfig;
use swarmfilt_cli::csvio::parse_table;
use swarmfilt_cli::CliError;

const SV_CONFIG: &str = "
[model]
name = sv
phi = 0.91
beta = 0.5
sigma = 1.0

[prior]
phi = 0.5 0.99
beta = 0.1 1.0
sigma = 0.5 2.0

[run]
seed = 11
T = 12
n_theta = 8
n_particles = 32
";

const LG_CONFIG: &str = "
[model]
name = lg
a = 0.9
q = 1.0
c = 1.0
r = 1.0
m1 = 0.0
p1 = 1.0

[run]
seed = 23
T = 6
n_theta = 4
n_particles = 64
replications = 2
";

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).expect("test config parses")
}

fn dir() -> tempfile::TempDir {
    tempfile::tempdir().expect("create temp dir")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).expect("write test file");
}

fn table(path: &Path) -> swarmfilt_cli::csvio::CsvTable {
    parse_table(&fs::read_to_string(path).expect("read output")).expect("output parses")
}

fn run_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmfilt"))
        .args(args)
        .output()
        .expect("spawn swarmfilt binary")
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn standard_error(values: &[f64]) -> f64 {
    let m = mean(values);
    let var =
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}

#[test]
fn simulate_is_deterministic_and_follows_the_data_stream() {
    let dir = dir();
    let cfg = config(SV_CONFIG);
    let plain = dir.path().join("plain.csv");
    let again = dir.path().join("again.csv");
    let full = dir.path().join("full.csv");
    cmd_simulate(&cfg, &plain, false).unwrap();
    cmd_simulate(&cfg, &again, false).unwrap();
    cmd_simulate(&cfg, &full, true).unwrap();

    assert_eq!(fs::read(&plain).unwrap(), fs::read(&again).unwrap());

    let out = table(&plain);
    assert_eq!(out.columns, ["y"]);
    assert_eq!(out.records.len(), 12);
    assert_eq!(out.records[0].t, 1);
    assert_eq!(out.records[11].t, 12);

    // The data series comes from subkey 0 of the config seed.
    let mut rng = RngStream::new(derive_key(cfg.seed, 0));
    let (xs, ys) = simulate(&sv_model(), &cfg.model_params, 12, &mut rng).unwrap();
    let got_y = out.column_values("y").unwrap();
    for (i, y) in got_y.iter().enumerate() {
        assert_eq!(*y, ys.row(i)[0], "row {i}");
    }

    let full = table(&full);
    assert_eq!(full.columns, ["y", "x"]);
    let got_x = full.column_values("x").unwrap();
    for (i, x) in got_x.iter().enumerate() {
        assert_eq!(*x, xs.row(i)[0], "row {i}");
    }
    assert_eq!(full.column_values("y").unwrap(), got_y);
}

#[test]
fn forecast_writes_bands_and_copies_time_labels() {
    let dir = dir();
    let cfg = config(SV_CONFIG);
    let data = dir.path().join("data.csv");
    let out = dir.path().join("forecast.csv");
    cmd_simulate(&cfg, &data, false).unwrap();
    cmd_forecast(&cfg, &data, &out, EstimatorKind::Weighted).unwrap();

    let input = table(&data);
    let got = table(&out);
    assert_eq!(got.columns, ["y", "f1_hat", "f2_hat", "lo", "hi"]);
    assert_eq!(got.records.len(), input.records.len());
    for (got_row, in_row) in got.records.iter().zip(&input.records) {
        assert_eq!(got_row.t, in_row.t);
        assert_eq!(got_row.values[0], in_row.values[0], "y column is copied");
        let [_, f1, f2, lo, hi] = got_row.values[..] else { panic!("row shape") };
        // The volatility model's forecast mean is identically zero, so the
        // band is symmetric with halfwidth twice the forecast deviation.
        assert_eq!(f1, 0.0);
        assert!(f2 > 0.0);
        assert_eq!(lo, -hi);
        assert!((hi - 2.0 * f2.sqrt()).abs() <= 1e-12 * hi.abs());
    }

    // Time labels need not start at 1: a trimmed series keeps its labels.
    let trimmed = dir.path().join("trimmed.csv");
    let rows: Vec<String> = input.records[4..8]
        .iter()
        .map(|r| format!("{},{}", r.t, r.values[0]))
        .collect();
    write(&trimmed, &format!("t,y\n{}\n", rows.join("\n")));
    let out2 = dir.path().join("forecast2.csv");
    cmd_forecast(&cfg, &trimmed, &out2, EstimatorKind::Weighted).unwrap();
    let got2 = table(&out2);
    assert_eq!(got2.records.iter().map(|r| r.t).collect::<Vec<_>>(), [5, 6, 7, 8]);
}

#[test]
fn forecast_runs_the_swarm_as_replicate_zero() {
    let dir = dir();
    let cfg = config(SV_CONFIG);
    let data = dir.path().join("data.csv");
    let out = dir.path().join("forecast.csv");
    cmd_simulate(&cfg, &data, false).unwrap();
    cmd_forecast(&cfg, &data, &out, EstimatorKind::Weighted).unwrap();

    let input = table(&data);
    let obs = TimeSeries::from_column(input.column_values("y").unwrap());
    let mut swarm_cfg = SwarmConfig::new(8, 32, derive_key(cfg.seed, 1));
    swarm_cfg.functionals =
        vec![swarmfilt::models::sv_f1(), swarmfilt::models::sv_f2()];
    let run = run_swarm(&cfg.model_spec(), &cfg.prior(), &swarm_cfg, &obs).unwrap();

    let got = table(&out);
    let f2_col = got.column_values("f2_hat").unwrap();
    for (est, f2) in run.estimates.iter().zip(&f2_col) {
        assert_eq!(est.values[1], *f2);
    }
}

#[test]
fn lg_forecast_bands_match_the_exact_predictive() {
    let dir = dir();
    let base = config(LG_CONFIG);
    let p = LgParams::from_theta(&base.model_params);
    let t_max = 5;

    // One fixed series; the point-mass prior makes every swarm member run
    // the true parameters, so across replicates the band must centre on the
    // exact one-step predictive of the next observation.
    let mut rng = RngStream::new(987);
    let (_, ys) = simulate(&base.model_spec(), &base.model_params, t_max, &mut rng).unwrap();
    let data = dir.path().join("data.csv");
    let rows: Vec<String> =
        (0..t_max).map(|i| format!("{},{}", i + 1, ys.row(i)[0])).collect();
    write(&data, &format!("t,y\n{}\n", rows.join("\n")));

    let oracle = kalman_run(&p, &ys);
    let reps = 60;
    let mut f1_by_t = vec![Vec::with_capacity(reps); t_max];
    let mut halfwidth_by_t = vec![Vec::with_capacity(reps); t_max];
    for rep in 0..reps {
        let mut cfg = config(LG_CONFIG);
        cfg.n_theta = Some(2);
        cfg.n_particles = Some(256);
        cfg.seed = 40_000 + rep as u64;
        let out = dir.path().join(format!("f{rep}.csv"));
        cmd_forecast(&cfg, &data, &out, EstimatorKind::Weighted).unwrap();
        let got = table(&out);
        let f1 = got.column_values("f1_hat").unwrap();
        let (lo, hi) = (got.column_values("lo").unwrap(), got.column_values("hi").unwrap());
        for i in 0..t_max {
            f1_by_t[i].push(f1[i]);
            halfwidth_by_t[i].push((hi[i] - lo[i]) / 2.0);
        }
    }

    for i in 0..t_max {
        let (exact_mean, exact_var) = kalman_forecast_obs(oracle.steps[i].filtered, &p);
        let f1_gap = (mean(&f1_by_t[i]) - exact_mean).abs();
        let f1_tol = 4.0 * standard_error(&f1_by_t[i]) + 1e-3;
        assert!(f1_gap <= f1_tol, "t={}: centre off by {f1_gap:.2e} > {f1_tol:.2e}", i + 1);

        let hw_gap = (mean(&halfwidth_by_t[i]) - 2.0 * exact_var.sqrt()).abs();
        let hw_tol = 4.0 * standard_error(&halfwidth_by_t[i]) + 1e-3;
        assert!(hw_gap <= hw_tol, "t={}: width off by {hw_gap:.2e} > {hw_tol:.2e}", i + 1);
    }
}

#[test]
fn replication_study_matches_the_two_rep_identity() {
    let dir = dir();
    let cfg = config(LG_CONFIG);
    let out = dir.path().join("std.csv");
    cmd_replication_study(&cfg, &out, false, EstimatorKind::Weighted).unwrap();

    let got = table(&out);
    assert_eq!(got.columns, ["std"]);
    assert_eq!(got.records.len(), 6);

    // Rebuild the two replicates directly: same internally simulated series,
    // swarm seeds from subkeys 1 and 2. With two replicates the sample
    // standard deviation collapses to |a - b| / sqrt(2).
    let mut rng = RngStream::new(derive_key(cfg.seed, 0));
    let (_, ys) = simulate(&cfg.model_spec(), &cfg.model_params, 6, &mut rng).unwrap();
    let mut runs = Vec::new();
    for rep in 0..2u64 {
        let mut swarm_cfg = SwarmConfig::new(4, 64, derive_key(cfg.seed, 1 + rep));
        swarm_cfg.functionals = vec![lg_f2()];
        runs.push(run_swarm(&cfg.model_spec(), &cfg.prior(), &swarm_cfg, &ys).unwrap());
    }
    let std_col = got.column_values("std").unwrap();
    for (i, std) in std_col.iter().enumerate() {
        let a = runs[0].estimates[i].values[0];
        let b = runs[1].estimates[i].values[0];
        let expect = (a - b).abs() / 2f64.sqrt();
        assert!((std - expect).abs() <= 1e-12 * expect.max(1.0), "t = {}", i + 1);
    }

    // --drop-first removes exactly the t = 1 row.
    let trimmed = dir.path().join("trimmed.csv");
    cmd_replication_study(&cfg, &trimmed, true, EstimatorKind::Weighted).unwrap();
    let got2 = table(&trimmed);
    assert_eq!(got2.records.len(), 5);
    assert_eq!(got2.records[0].t, 2);
    assert_eq!(got2.records[0].values[0], std_col[1]);
}

#[test]
fn replication_study_estimators_differ_but_both_work() {
    let dir = dir();
    let cfg = config(LG_CONFIG);
    let hat = dir.path().join("hat.csv");
    let check = dir.path().join("check.csv");
    cmd_replication_study(&cfg, &hat, true, EstimatorKind::Weighted).unwrap();
    cmd_replication_study(&cfg, &check, true, EstimatorKind::Resampled).unwrap();
    let hat = table(&hat).column_values("std").unwrap();
    let check = table(&check).column_values("std").unwrap();
    assert_eq!(hat.len(), check.len());
    assert!(hat.iter().zip(&check).any(|(a, b)| a != b));
    assert!(check.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn convergence_study_reports_both_ladders() {
    let dir = dir();
    let mut cfg = config(LG_CONFIG);
    cfg.replications = Some(4);
    cfg.n_particles = Some(25);
    cfg.t_max = Some(5);
    cfg.nx_ladder = vec![50, 200];
    cfg.ntheta_ladder = vec![4, 16];
    let out = dir.path().join("rates.csv");
    cmd_convergence_study(&cfg, &out).unwrap();

    let got = table(&out);
    assert_eq!(got.columns, ["ladder", "size", "metric", "ratio", "theory"]);
    assert_eq!(got.records.len(), 4);
    let ladder = got.column_values("ladder").unwrap();
    let size = got.column_values("size").unwrap();
    let metric = got.column_values("metric").unwrap();
    let ratio = got.column_values("ratio").unwrap();
    let theory = got.column_values("theory").unwrap();
    assert_eq!(ladder, [1.0, 1.0, 2.0, 2.0]);
    assert_eq!(size, [50.0, 200.0, 4.0, 16.0]);
    assert!(metric.iter().all(|m| m.is_finite() && *m > 0.0));
    // First rung of each ladder has no predecessor to compare against.
    assert!(ratio[0].is_nan() && theory[0].is_nan());
    assert!(ratio[2].is_nan() && theory[2].is_nan());
    assert_eq!(theory[1], 2.0);
    assert_eq!(theory[3], 2.0);
    assert_eq!(ratio[1], metric[0] / metric[1]);
    assert_eq!(ratio[3], metric[2] / metric[3]);

    let sv = config(SV_CONFIG);
    let err = cmd_convergence_study(&sv, &out).unwrap_err();
    assert_eq!(err.exit_code(), 2, "no exact oracle for the sv model");
}

#[test]
fn errors_map_to_the_documented_exit_codes() {
    let dir = dir();

    // Incomplete config: simulate needs T.
    let cfg = config("[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n");
    let err = cmd_simulate(&cfg, &dir.path().join("x.csv"), false).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("'T'"), "{err}");

    // Missing data file.
    let cfg = config(SV_CONFIG);
    let err = cmd_forecast(
        &cfg,
        &dir.path().join("nope.csv"),
        &dir.path().join("out.csv"),
        EstimatorKind::Weighted,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);

    // Malformed data: header must start with 't'.
    let bad = dir.path().join("bad.csv");
    write(&bad, "time,y\n1,0.5\n");
    let err =
        cmd_forecast(&cfg, &bad, &dir.path().join("out.csv"), EstimatorKind::Weighted)
            .unwrap_err();
    assert_eq!(err.exit_code(), 3);

    // Data without the observation column.
    let no_y = dir.path().join("no_y.csv");
    write(&no_y, "t,z\n1,0.5\n");
    let err =
        cmd_forecast(&cfg, &no_y, &dir.path().join("out.csv"), EstimatorKind::Weighted)
            .unwrap_err();
    assert_eq!(err.exit_code(), 3);

    // Numerical death: a point prior at beta = 0 zeroes every weight at
    // t = 1, killing the first member under the abort policy.
    let doomed = config(
        "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n\n\
         [prior]\nbeta = 0.0\n\n[run]\nseed = 1\nT = 3\nn_theta = 4\nn_particles = 8\n",
    );
    let data = dir.path().join("data.csv");
    cmd_simulate(&config(SV_CONFIG), &data, false).unwrap();
    let err = cmd_forecast(&doomed, &data, &dir.path().join("out.csv"), EstimatorKind::Weighted)
        .unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(matches!(err, CliError::Numeric(_)), "{err}");

    // Replication studies need at least two replicates.
    let mut cfg = config(LG_CONFIG);
    cfg.replications = Some(1);
    let err = cmd_replication_study(
        &cfg,
        &dir.path().join("out.csv"),
        false,
        EstimatorKind::Weighted,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn binary_simulate_matches_in_process_and_honours_seed_override() {
    let dir = dir();
    let cfg_path = dir.path().join("exp.conf");
    write(&cfg_path, SV_CONFIG);

    let bin_out = dir.path().join("bin.csv");
    let status = run_bin(&[
        "simulate",
        cfg_path.to_str().unwrap(),
        "--out",
        bin_out.to_str().unwrap(),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let lib_out = dir.path().join("lib.csv");
    cmd_simulate(&config(SV_CONFIG), &lib_out, false).unwrap();
    assert_eq!(fs::read(&bin_out).unwrap(), fs::read(&lib_out).unwrap());

    // --seed overrides the config file.
    let seeded_out = dir.path().join("seeded.csv");
    let status = run_bin(&[
        "--seed",
        "99",
        "simulate",
        cfg_path.to_str().unwrap(),
        "--out",
        seeded_out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let mut cfg = config(SV_CONFIG);
    cfg.seed = 99;
    let lib_seeded = dir.path().join("lib_seeded.csv");
    cmd_simulate(&cfg, &lib_seeded, false).unwrap();
    assert_eq!(fs::read(&seeded_out).unwrap(), fs::read(&lib_seeded).unwrap());
    assert_ne!(fs::read(&seeded_out).unwrap(), fs::read(&bin_out).unwrap());
}

#[test]
fn binary_forecast_is_worker_count_independent_and_prints_the_marginal() {
    let dir = dir();
    let cfg_path = dir.path().join("exp.conf");
    write(&cfg_path, &format!("{SV_CONFIG}outputs = marginal_lik\n"));
    let data = dir.path().join("data.csv");
    cmd_simulate(&config(SV_CONFIG), &data, false).unwrap();

    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}.csv"));
        let result = run_bin(&[
            "--workers",
            workers,
            "forecast",
            cfg_path.to_str().unwrap(),
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
        let stdout = String::from_utf8(result.stdout).unwrap();
        let line = stdout
            .lines()
            .find(|l| l.starts_with("marginal_lik = "))
            .unwrap_or_else(|| panic!("no marginal line in {stdout:?}"));
        let value: f64 = line["marginal_lik = ".len()..].parse().unwrap();
        assert!(value.is_finite());
        outputs.push((fs::read(&out).unwrap(), value));
    }
    assert_eq!(outputs[0], outputs[1], "worker count changed the results");
}

#[test]
fn binary_maps_failures_to_exit_codes() {
    let dir = dir();
    let out: PathBuf = dir.path().join("out.csv");

    // Usage errors.
    let result = run_bin(&["no-such-command"]);
    assert_eq!(result.status.code(), Some(2));

    // Config errors: unknown key.
    let bad_cfg = dir.path().join("bad.conf");
    write(&bad_cfg, "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\nbogus = 1\n[run]\nT = 5\n");
    let result = run_bin(&["simulate", bad_cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("bogus"), "{stderr}");

    // Unreadable config file is a config error too.
    let result =
        run_bin(&["simulate", "/nonexistent/exp.conf", "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));

    // Data errors.
    let cfg_path = dir.path().join("exp.conf");
    write(&cfg_path, SV_CONFIG);
    let result = run_bin(&[
        "forecast",
        cfg_path.to_str().unwrap(),
        "/nonexistent/data.csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));

    // Numerical failures: every member dies at a beta = 0 point prior.
    let doomed_cfg = dir.path().join("doomed.conf");
    write(
        &doomed_cfg,
        "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n\n\
         [prior]\nbeta = 0.0\n\n[run]\nseed = 1\nT = 3\nn_theta = 4\nn_particles = 8\n",
    );
    let data = dir.path().join("data.csv");
    cmd_simulate(&config(SV_CONFIG), &data, false).unwrap();
    let result = run_bin(&[
        "forecast",
        doomed_cfg.to_str().unwrap(),
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("died at t=1"), "{stderr}");
}
