use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use swarmfilt::swarm::EstimatorKind;
use swarmfilt_cli::commands::{
    cmd_convergence_study, cmd_forecast, cmd_replication_study, cmd_simulate,
};
use swarmfilt_cli::config::ExperimentConfig;
use swarmfilt_cli::CliError;

/// Particle swarm filtering experiments over state-space models.
#[derive(Parser)]
#[command(name = "swarmfilt", version, about)]
struct Cli {
    /// Worker threads for the swarm (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Override the config file's seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a series from the configured model and write it as CSV
    Simulate {
        /// Experiment config file
        config: PathBuf,
        /// Output CSV path
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the latent state column
        #[arg(long)]
        with_states: bool,
    },
    /// Run a swarm over a data file and write per-step forecast intervals
    Forecast {
        /// Experiment config file
        config: PathBuf,
        /// Input CSV with a 'y' column
        data: PathBuf,
        /// Output CSV path
        #[arg(long, short)]
        out: PathBuf,
        /// Which per-filter estimator the swarm combines
        #[arg(long, value_enum, default_value_t = EstimatorArg::Hat)]
        estimator: EstimatorArg,
    },
    /// Replicate a swarm run and write the per-step spread of its forecasts
    ReplicationStudy {
        /// Experiment config file
        config: PathBuf,
        /// Output CSV path
        #[arg(long, short)]
        out: PathBuf,
        /// Omit the first step, whose spread dwarfs the rest
        #[arg(long)]
        drop_first: bool,
        /// Which per-filter estimator the swarm combines
        #[arg(long, value_enum, default_value_t = EstimatorArg::Hat)]
        estimator: EstimatorArg,
    },
    /// Measure error-decay rates on the linear-Gaussian model
    ConvergenceStudy {
        /// Experiment config file
        config: PathBuf,
        /// Output CSV path
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// The two per-filter estimators: `hat` reuses the pre-resampling weights,
/// `check` averages the post-resampling cloud.
#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Hat,
    Check,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(arg: EstimatorArg) -> Self {
        match arg {
            EstimatorArg::Hat => EstimatorKind::Weighted,
            EstimatorArg::Check => EstimatorKind::Resampled,
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate { config, out, with_states } => {
            let cfg = load_config(config, cli.seed)?;
            cmd_simulate(&cfg, out, *with_states)
        }
        Command::Forecast { config, data, out, estimator } => {
            let cfg = load_config(config, cli.seed)?;
            cmd_forecast(&cfg, data, out, (*estimator).into())
        }
        Command::ReplicationStudy { config, out, drop_first, estimator } => {
            let cfg = load_config(config, cli.seed)?;
            cmd_replication_study(&cfg, out, *drop_first, (*estimator).into())
        }
        Command::ConvergenceStudy { config, out } => {
            let cfg = load_config(config, cli.seed)?;
            cmd_convergence_study(&cfg, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            if err.use_stderr() {
                err.print().expect("stderr");
                return ExitCode::from(2);
            }
            err.print().expect("stdout");
            return ExitCode::SUCCESS;
        }
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build();
    let pool = match pool {
        Ok(pool) => pool,
        Err(err) => {
            eprintln!("error: cannot build worker pool: {err}");
            return ExitCode::from(2);
        }
    };

    match pool.install(|| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
