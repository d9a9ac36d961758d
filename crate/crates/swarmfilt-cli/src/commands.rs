//! The four experiment commands.
//!
//! Every command is a pure function of its configuration: the config seed is
//! never used as a stream key directly, but split via
//! [`derive_key`](swarmfilt::rng::derive_key) into one subkey for data
//! simulation and one per replicate, so the simulated series and all
//! replicate swarms are mutually independent and reproducible one by one.

use std::path::Path;

use swarmfilt::kalman::{kalman_run, LgParams};
use swarmfilt::model::{FilterFunctional, TimeSeries};
use swarmfilt::models::{lg_f1, lg_f2, simulate, sv_f1, sv_f2};
use swarmfilt::rng::{derive_key, RngStream};
use swarmfilt::sisr::run_filter;
use swarmfilt::swarm::{forecast_interval, run_swarm, EstimatorKind, SwarmConfig};

use crate::config::{ExperimentConfig, ModelKind, OutputKind};
use crate::csvio::{read_table, write_table, SeriesRecord};
use crate::CliError;

/// Stream for simulating the experiment's data series.
fn data_rng(seed: u64) -> RngStream {
    RngStream::new(derive_key(seed, 0))
}

/// Swarm/filter seed of replicate `r` (a single run is replicate 0).
fn replicate_seed(seed: u64, r: u64) -> u64 {
    derive_key(seed, 1 + r)
}

/// The model's forecast functionals: conditional mean and second moment of
/// the next observation.
fn forecast_functionals(model: ModelKind) -> (FilterFunctional, FilterFunctional) {
    match model {
        ModelKind::Sv => (sv_f1(), sv_f2()),
        ModelKind::Lg => (lg_f1(), lg_f2()),
    }
}

/// Simulates the configured model's series internally (same stream the
/// `simulate` command uses, so studies and exported data agree).
fn simulate_series(cfg: &ExperimentConfig) -> Result<(TimeSeries, TimeSeries), CliError> {
    let spec = cfg.model_spec();
    let t_max = cfg.require_t()?;
    simulate(&spec, &cfg.model_params, t_max, &mut data_rng(cfg.seed))
        .map_err(CliError::from_lib)
}

/// Sample standard deviation (n−1 divisor).
fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    debug_assert!(n >= 2);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

/// Simulates a series and writes it as `t,y` (plus `x` with
/// `with_states`).
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, with_states: bool) -> Result<(), CliError> {
    let (xs, ys) = simulate_series(cfg)?;
    let records: Vec<SeriesRecord> = (0..ys.len())
        .map(|i| {
            let mut values = vec![ys.row(i)[0]];
            if with_states {
                values.push(xs.row(i)[0]);
            }
            SeriesRecord { t: i as i64 + 1, values }
        })
        .collect();
    let columns: &[&str] = if with_states { &["y", "x"] } else { &["y"] };
    write_table(out, columns, &records)
}

/// Runs a swarm over a data file and writes per-step forecast bands:
/// `t,y,f1_hat,f2_hat,lo,hi` with `[lo, hi]` spanning ±2 forecast standard
/// deviations. Prints the pooled log marginal likelihood to stdout when the
/// config requests the `marginal_lik` artifact.
pub fn cmd_forecast(
    cfg: &ExperimentConfig,
    data: &Path,
    out: &Path,
    estimator: EstimatorKind,
) -> Result<(), CliError> {
    let table = read_table(data)?;
    let y_idx = table
        .column("y")
        .ok_or_else(|| CliError::Data(format!("{}: no 'y' column", data.display())))?;
    if table.records.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", data.display())));
    }
    let obs = TimeSeries::from_column(table.records.iter().map(|r| r.values[y_idx]).collect());

    let spec = cfg.model_spec();
    let (f1, f2) = forecast_functionals(cfg.model);
    let mut swarm_cfg = SwarmConfig::new(
        cfg.require_n_theta()?,
        cfg.require_n_particles()?,
        replicate_seed(cfg.seed, 0),
    );
    swarm_cfg.functionals = vec![f1, f2];
    swarm_cfg.estimator = estimator;
    swarm_cfg.report_marginal_likelihood = cfg.wants(OutputKind::MarginalLik);

    let run = run_swarm(&spec, &cfg.prior(), &swarm_cfg, &obs).map_err(CliError::from_lib)?;

    let mut records = Vec::with_capacity(run.estimates.len());
    for (row, est) in table.records.iter().zip(&run.estimates) {
        let (f1_hat, f2_hat) = (est.values[0], est.values[1]);
        let (center, halfwidth) = forecast_interval(f1_hat, f2_hat).map_err(CliError::from_lib)?;
        records.push(SeriesRecord {
            t: row.t,
            values: vec![row.values[y_idx], f1_hat, f2_hat, center - halfwidth, center + halfwidth],
        });
    }
    write_table(out, &["y", "f1_hat", "f2_hat", "lo", "hi"], &records)?;

    if swarm_cfg.report_marginal_likelihood {
        let value = run
            .estimates
            .last()
            .and_then(|e| e.log_marginal_lik)
            .expect("marginal likelihood was requested");
        println!("marginal_lik = {value}");
    }
    Ok(())
}

/// Runs `replications` independent swarm passes over one internally
/// simulated series and writes the per-step sample standard deviation of the
/// second-moment forecast as `t,std`. `drop_first` omits the `t = 1` row,
/// whose spread dwarfs the rest.
pub fn cmd_replication_study(
    cfg: &ExperimentConfig,
    out: &Path,
    drop_first: bool,
    estimator: EstimatorKind,
) -> Result<(), CliError> {
    let reps = cfg.require_replications()?;
    if reps < 2 {
        return Err(CliError::Config(
            "replications must be at least 2 for a replication study".into(),
        ));
    }
    let (_, ys) = simulate_series(cfg)?;
    let spec = cfg.model_spec();
    let prior = cfg.prior();
    let (_, f2) = forecast_functionals(cfg.model);

    let n_theta = cfg.require_n_theta()?;
    let n_particles = cfg.require_n_particles()?;
    // f2 per (replicate, t).
    let mut per_rep: Vec<Vec<f64>> = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut swarm_cfg =
            SwarmConfig::new(n_theta, n_particles, replicate_seed(cfg.seed, rep as u64));
        swarm_cfg.functionals = vec![f2.clone()];
        swarm_cfg.estimator = estimator;
        let run = run_swarm(&spec, &prior, &swarm_cfg, &ys).map_err(CliError::from_lib)?;
        per_rep.push(run.estimates.iter().map(|e| e.values[0]).collect());
    }

    let first_row = usize::from(drop_first);
    let mut records = Vec::with_capacity(ys.len() - first_row);
    let mut per_t = vec![0.0; reps];
    for t_idx in first_row..ys.len() {
        for (rep, series) in per_rep.iter().enumerate() {
            per_t[rep] = series[t_idx];
        }
        records.push(SeriesRecord { t: t_idx as i64 + 1, values: vec![sample_std(&per_t)] });
    }
    write_table(out, &["std"], &records)
}

/// Measures Monte Carlo convergence rates on the linear-Gaussian model and
/// writes one table row per ladder rung:
/// `t,ladder,size,metric,ratio,theory`.
///
/// Ladder 1 fixes the model parameters and climbs the particle-count ladder;
/// its metric is the replication RMSE of the filtered-mean estimate against
/// the exact Kalman filter, pooled over all steps. Ladder 2 fixes the
/// particle count (`n_particles`) and climbs the swarm-size ladder over the
/// configured prior; its metric is the replication standard deviation of the
/// final-step swarm estimate. `ratio` is the previous rung's metric over
/// this rung's (so ≈ 2 when the error halves), `theory` is the square root
/// of the size ratio; both are `NaN` on each ladder's first rung.
pub fn cmd_convergence_study(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.model != ModelKind::Lg {
        return Err(CliError::Config(
            "convergence-study requires the lg model (it compares against the exact filter)"
                .into(),
        ));
    }
    let reps = cfg.require_replications()?;
    let (_, ys) = simulate_series(cfg)?;
    let spec = cfg.model_spec();
    let theta = cfg.model_params.clone();
    let p = LgParams::from_theta(&theta);
    let truth: Vec<f64> = kalman_run(&p, &ys).steps.iter().map(|s| s.filtered.mean).collect();
    let mean_state = FilterFunctional::new("x", |_th: &[f64], x: &[f64]| x[0]);

    let mut records = Vec::new();
    let mut row = 0i64;

    // Ladder 1: particle count, fixed parameters, RMSE against the oracle.
    let ladder_x_root = derive_key(cfg.seed, 1);
    let mut metrics = Vec::with_capacity(cfg.nx_ladder.len());
    for (rung, &n_x) in cfg.nx_ladder.iter().enumerate() {
        let rung_root = derive_key(ladder_x_root, rung as u64);
        let mut sq_sum = 0.0;
        for rep in 0..reps {
            let stream = RngStream::new(derive_key(rung_root, rep as u64));
            let run = run_filter(&spec, &theta, n_x, &ys, std::slice::from_ref(&mean_state), &stream)
                .map_err(CliError::from_lib)?;
            for (est, exact) in run.estimates.iter().zip(&truth) {
                let err = est.weighted[0] - exact;
                sq_sum += err * err;
            }
        }
        metrics.push((sq_sum / (reps * ys.len()) as f64).sqrt());
    }
    push_ladder_rows(&mut records, &mut row, 1.0, &cfg.nx_ladder, &metrics);

    // Ladder 2: swarm size over the configured prior, fixed particle count,
    // replication std of the final-step estimate.
    let n_particles = cfg.require_n_particles()?;
    let prior = cfg.prior();
    let ladder_theta_root = derive_key(cfg.seed, 2);
    let mut metrics = Vec::with_capacity(cfg.ntheta_ladder.len());
    for (rung, &n_theta) in cfg.ntheta_ladder.iter().enumerate() {
        let rung_root = derive_key(ladder_theta_root, rung as u64);
        let mut finals = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut swarm_cfg =
                SwarmConfig::new(n_theta, n_particles, derive_key(rung_root, rep as u64));
            swarm_cfg.functionals = vec![mean_state.clone()];
            let run = run_swarm(&spec, &prior, &swarm_cfg, &ys).map_err(CliError::from_lib)?;
            finals.push(run.estimates.last().expect("nonempty series").values[0]);
        }
        metrics.push(if reps >= 2 { sample_std(&finals) } else { f64::NAN });
    }
    push_ladder_rows(&mut records, &mut row, 2.0, &cfg.ntheta_ladder, &metrics);

    write_table(out, &["ladder", "size", "metric", "ratio", "theory"], &records)
}

/// Appends one row per rung: the metric, the observed improvement ratio over
/// the previous rung, and the square-root law's prediction for it.
fn push_ladder_rows(
    records: &mut Vec<SeriesRecord>,
    row: &mut i64,
    ladder: f64,
    sizes: &[usize],
    metrics: &[f64],
) {
    for (j, (&size, &metric)) in sizes.iter().zip(metrics).enumerate() {
        let (ratio, theory) = if j == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (metrics[j - 1] / metric, (size as f64 / sizes[j - 1] as f64).sqrt())
        };
        *row += 1;
        records.push(SeriesRecord {
            t: *row,
            values: vec![ladder, size as f64, metric, ratio, theory],
        });
    }
}
