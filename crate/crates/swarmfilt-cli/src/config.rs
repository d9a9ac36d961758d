//! The experiment configuration format.
//!
//! A configuration file is flat `key = value` text split into three
//! sections. `#` starts a comment (whole-line or trailing), blank lines are
//! ignored, and keys may not repeat within a section:
//!
//! ```text
//! # Stochastic volatility, replication-study setup.
//! [model]
//! name = sv
//! phi = 0.91
//! beta = 0.5
//! sigma = 1.0
//!
//! [prior]
//! phi = 0.5 0.99      # lo hi; omitted parameters default to a point mass
//! beta = 0.0 1.0      # at the [model] value
//! sigma = 0.5 2.0
//!
//! [run]
//! n_theta = 100
//! n_particles = 100
//! seed = 42
//! T = 1000
//! replications = 100
//! outputs = forecast_intervals marginal_lik
//! ```
//!
//! `[model]` names the model and gives every parameter a value; `[prior]`
//! gives per-parameter support bounds (one number is a point mass, two are
//! `lo hi`); `[run]` holds the experiment sizes. Which `[run]` keys are
//! required depends on the command — the commands themselves report a missing
//! key by name.

use std::collections::BTreeMap;
use std::path::Path;

use swarmfilt::model::{ModelSpec, PriorSpec};
use swarmfilt::models::{lg_model, sv_model};

use crate::CliError;

/// The built-in model an experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Taylor stochastic volatility model.
    Sv,
    /// Scalar linear-Gaussian model.
    Lg,
}

impl ModelKind {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sv" => Some(ModelKind::Sv),
            "lg" => Some(ModelKind::Lg),
            _ => None,
        }
    }

    /// Instantiates the model's closures.
    pub fn spec(self) -> ModelSpec {
        match self {
            ModelKind::Sv => sv_model(),
            ModelKind::Lg => lg_model(),
        }
    }
}

/// Artifacts a configuration can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Per-step forecast bands (the `forecast` command's file).
    ForecastIntervals,
    /// Per-step replication spread of the second forecast moment.
    F2ReplicationStd,
    /// Convergence-rate table.
    ConvergenceTable,
    /// Pooled log marginal likelihood, printed to stdout by `forecast`.
    MarginalLik,
}

impl OutputKind {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "forecast_intervals" => Some(OutputKind::ForecastIntervals),
            "f2_replication_std" => Some(OutputKind::F2ReplicationStd),
            "convergence_table" => Some(OutputKind::ConvergenceTable),
            "marginal_lik" => Some(OutputKind::MarginalLik),
            _ => None,
        }
    }
}

/// A fully resolved experiment configuration.
///
/// Sizes that not every command needs (`n_theta`, `n_particles`, `T`,
/// `replications`) stay optional here; commands demand the ones they use via
/// the `require_*` accessors so a missing key is reported by name.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// The model, from `[model] name`.
    pub model: ModelKind,
    /// Full parameter vector in the model's declared order.
    pub model_params: Vec<f64>,
    /// Per-parameter prior support `(lo, hi)`, point masses where the config
    /// gave no range.
    pub prior_bounds: Vec<(f64, f64)>,
    /// Swarm size `N_θ`.
    pub n_theta: Option<usize>,
    /// Particles per filter `N_X`.
    pub n_particles: Option<usize>,
    /// Root seed; `--seed` overrides it.
    pub seed: u64,
    /// Series length `T`.
    pub t_max: Option<usize>,
    /// Number of independent replications for the study commands.
    pub replications: Option<usize>,
    /// Requested artifacts.
    pub outputs: Vec<OutputKind>,
    /// Particle-count ladder for the convergence study.
    pub nx_ladder: Vec<usize>,
    /// Swarm-size ladder for the convergence study.
    pub ntheta_ladder: Vec<usize>,
}

impl ExperimentConfig {
    /// Reads and parses a configuration file.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Parses configuration text.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut sections = split_sections(text)?;
        let mut model_map = sections.remove("model").unwrap_or_default();
        let mut prior_map = sections.remove("prior").unwrap_or_default();
        let mut run_map = sections.remove("run").unwrap_or_default();

        let model_name = model_map
            .remove("name")
            .ok_or_else(|| CliError::Config("missing key 'name' in [model]".into()))?;
        let model = ModelKind::from_name(&model_name).ok_or_else(|| {
            CliError::Config(format!("unknown model '{model_name}' (expected sv or lg)"))
        })?;
        let spec = model.spec();

        let mut model_params = Vec::with_capacity(spec.param_dim());
        for &param in &spec.param_names {
            let raw = model_map.remove(param).ok_or_else(|| {
                CliError::Config(format!("missing model parameter '{param}' in [model]"))
            })?;
            model_params.push(parse_real(&raw, param)?);
        }
        reject_leftovers(&model_map, "[model]")?;

        let mut prior_bounds = Vec::with_capacity(spec.param_dim());
        for (i, &param) in spec.param_names.iter().enumerate() {
            match prior_map.remove(param) {
                Some(raw) => prior_bounds.push(parse_bounds(&raw, param)?),
                None => prior_bounds.push((model_params[i], model_params[i])),
            }
        }
        reject_leftovers(&prior_map, "[prior]")?;

        let n_theta = take_count(&mut run_map, "n_theta")?;
        let n_particles = take_count(&mut run_map, "n_particles")?;
        let t_max = take_count(&mut run_map, "T")?;
        let replications = take_count(&mut run_map, "replications")?;
        let seed = match run_map.remove("seed") {
            Some(raw) => raw
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("key 'seed': '{raw}' is not a u64")))?,
            None => 0,
        };
        let outputs = match run_map.remove("outputs") {
            Some(raw) => raw
                .split_whitespace()
                .map(|token| {
                    OutputKind::from_name(token).ok_or_else(|| {
                        CliError::Config(format!(
                            "unknown output '{token}' (expected forecast_intervals, \
                             f2_replication_std, convergence_table, or marginal_lik)"
                        ))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let nx_ladder = take_ladder(&mut run_map, "nx_ladder", &[250, 1000, 4000])?;
        let ntheta_ladder = take_ladder(&mut run_map, "ntheta_ladder", &[100, 400, 1600])?;
        reject_leftovers(&run_map, "[run]")?;

        Ok(Self {
            model,
            model_params,
            prior_bounds,
            n_theta,
            n_particles,
            seed,
            t_max,
            replications,
            outputs,
            nx_ladder,
            ntheta_ladder,
        })
    }

    /// The model's closures.
    pub fn model_spec(&self) -> ModelSpec {
        self.model.spec()
    }

    /// The prior built from the configured bounds.
    pub fn prior(&self) -> PriorSpec {
        PriorSpec::uniform_box(self.prior_bounds.clone())
    }

    /// Whether an artifact was requested in `outputs`.
    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }

    /// `n_theta`, or a config error naming the key.
    pub fn require_n_theta(&self) -> Result<usize, CliError> {
        require(self.n_theta, "n_theta")
    }

    /// `n_particles`, or a config error naming the key.
    pub fn require_n_particles(&self) -> Result<usize, CliError> {
        require(self.n_particles, "n_particles")
    }

    /// `T`, or a config error naming the key.
    pub fn require_t(&self) -> Result<usize, CliError> {
        require(self.t_max, "T")
    }

    /// `replications`, or a config error naming the key.
    pub fn require_replications(&self) -> Result<usize, CliError> {
        require(self.replications, "replications")
    }
}

fn require(value: Option<usize>, key: &str) -> Result<usize, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing key '{key}' in [run]")))
}

/// Splits the raw text into per-section key/value maps, enforcing known
/// section names, `key = value` syntax, and key uniqueness.
fn split_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>, CliError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| {
                    CliError::Config(format!("line {}: malformed section header", lineno + 1))
                })?
                .trim();
            if !matches!(name, "model" | "prior" | "run") {
                return Err(CliError::Config(format!(
                    "line {}: unknown section [{name}] (expected [model], [prior], or [run])",
                    lineno + 1
                )));
            }
            if sections.contains_key(name) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate section [{name}]",
                    lineno + 1
                )));
            }
            sections.insert(name.to_string(), BTreeMap::new());
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        let section = current.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "line {}: key '{key}' appears before any section header",
                lineno + 1
            ))
        })?;
        let map = sections.get_mut(section).expect("section was inserted");
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!(
                "line {}: duplicate key '{key}' in [{section}]",
                lineno + 1
            )));
        }
    }
    Ok(sections)
}

fn reject_leftovers(map: &BTreeMap<String, String>, section: &str) -> Result<(), CliError> {
    if let Some(key) = map.keys().next() {
        return Err(CliError::Config(format!("unknown key '{key}' in {section}")));
    }
    Ok(())
}

fn parse_real(raw: &str, key: &str) -> Result<f64, CliError> {
    let v: f64 = raw
        .parse()
        .map_err(|_| CliError::Config(format!("key '{key}': '{raw}' is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Config(format!("key '{key}': value must be finite")));
    }
    Ok(v)
}

/// One number is a point mass, two numbers are `lo hi`.
fn parse_bounds(raw: &str, key: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    let (lo, hi) = match parts.as_slice() {
        [single] => {
            let v = parse_real(single, key)?;
            (v, v)
        }
        [lo, hi] => (parse_real(lo, key)?, parse_real(hi, key)?),
        _ => {
            return Err(CliError::Config(format!(
                "key '{key}': expected one or two numbers, got '{raw}'"
            )))
        }
    };
    if lo > hi {
        return Err(CliError::Config(format!(
            "key '{key}': lower bound {lo} exceeds upper bound {hi}"
        )));
    }
    Ok((lo, hi))
}

fn take_count(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<usize>, CliError> {
    match map.remove(key) {
        None => Ok(None),
        Some(raw) => {
            let v: usize = raw.parse().map_err(|_| {
                CliError::Config(format!("key '{key}': '{raw}' is not a positive integer"))
            })?;
            if v == 0 {
                return Err(CliError::Config(format!("key '{key}' must be at least 1")));
            }
            Ok(Some(v))
        }
    }
}

/// A whitespace-separated, strictly increasing list of positive sizes.
fn take_ladder(
    map: &mut BTreeMap<String, String>,
    key: &str,
    default: &[usize],
) -> Result<Vec<usize>, CliError> {
    let raw = match map.remove(key) {
        None => return Ok(default.to_vec()),
        Some(raw) => raw,
    };
    let rungs: Vec<usize> = raw
        .split_whitespace()
        .map(|token| {
            token.parse::<usize>().map_err(|_| {
                CliError::Config(format!("key '{key}': '{token}' is not a positive integer"))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rungs.is_empty() || rungs.contains(&0) {
        return Err(CliError::Config(format!(
            "key '{key}' must list at least one positive size"
        )));
    }
    if rungs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "key '{key}' must be strictly increasing"
        )));
    }
    Ok(rungs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SV_TEXT: &str = "
        # replication-study setup
        [model]
        name = sv
        phi = 0.91
        beta = 0.5
        sigma = 1.0

        [prior]
        phi = 0.5 0.99
        beta = 0.0 1.0   # trailing comment
        sigma = 0.5 2.0

        [run]
        n_theta = 100
        n_particles = 200
        seed = 42
        T = 50
        replications = 7
        outputs = forecast_intervals marginal_lik
    ";

    #[test]
    fn parses_a_complete_config() {
        let cfg = ExperimentConfig::parse(SV_TEXT).unwrap();
        assert_eq!(cfg.model, ModelKind::Sv);
        assert_eq!(cfg.model_params, vec![0.91, 0.5, 1.0]);
        assert_eq!(cfg.prior_bounds, vec![(0.5, 0.99), (0.0, 1.0), (0.5, 2.0)]);
        assert_eq!(cfg.require_n_theta().unwrap(), 100);
        assert_eq!(cfg.require_n_particles().unwrap(), 200);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.require_t().unwrap(), 50);
        assert_eq!(cfg.require_replications().unwrap(), 7);
        assert!(cfg.wants(OutputKind::MarginalLik));
        assert!(cfg.wants(OutputKind::ForecastIntervals));
        assert!(!cfg.wants(OutputKind::ConvergenceTable));
        // Ladder defaults apply when unset.
        assert_eq!(cfg.nx_ladder, vec![250, 1000, 4000]);
        assert_eq!(cfg.ntheta_ladder, vec![100, 400, 1600]);
    }

    #[test]
    fn missing_prior_keys_become_point_masses() {
        let cfg = ExperimentConfig::parse(
            "[model]\nname = lg\na = 0.9\nq = 1.0\nc = 1.0\nr = 1.0\nm1 = 0.0\np1 = 1.0\n\
             [prior]\na = 0.8 0.95\n[run]\nseed = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.prior_bounds[0], (0.8, 0.95));
        assert_eq!(cfg.prior_bounds[1], (1.0, 1.0));
        assert_eq!(cfg.prior_bounds[5], (1.0, 1.0));
        // A single number is also a point mass.
        let cfg = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n[prior]\nphi = 0.9\n",
        )
        .unwrap();
        assert_eq!(cfg.prior_bounds[0], (0.9, 0.9));
    }

    #[test]
    fn missing_run_keys_are_reported_by_name() {
        let cfg = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n",
        )
        .unwrap();
        let err = cfg.require_n_theta().unwrap_err();
        assert!(err.to_string().contains("n_theta"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = cfg.require_t().unwrap_err();
        assert!(err.to_string().contains("'T'"), "{err}");
    }

    #[test]
    fn rejects_malformed_inputs() {
        // Unknown model.
        let err = ExperimentConfig::parse("[model]\nname = arma\n").unwrap_err();
        assert!(err.to_string().contains("arma"));
        // Missing parameter.
        let err =
            ExperimentConfig::parse("[model]\nname = sv\nphi = 0.9\nbeta = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("sigma"));
        // Unknown key.
        let err = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\nrho = 2.0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("rho"));
        // Unknown section.
        let err = ExperimentConfig::parse("[plots]\nstyle = fancy\n").unwrap_err();
        assert!(err.to_string().contains("plots"));
        // Key before any section.
        let err = ExperimentConfig::parse("name = sv\n").unwrap_err();
        assert!(err.to_string().contains("before any section"));
        // Duplicate key.
        let err = ExperimentConfig::parse("[model]\nname = sv\nname = lg\n").unwrap_err();
        assert!(err.to_string().contains("duplicate key"));
        // Inverted bounds.
        let err = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n[prior]\nphi = 0.9 0.6\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("exceeds"));
        // Zero count.
        let err = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n[run]\nn_theta = 0\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("n_theta"));
        // Bad ladder.
        let err = ExperimentConfig::parse(
            "[model]\nname = sv\nphi = 0.9\nbeta = 0.5\nsigma = 1.0\n[run]\nnx_ladder = 400 100\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("increasing"));
        // All config errors exit with 2.
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn prior_builds_a_sampler_over_the_box() {
        let cfg = ExperimentConfig::parse(SV_TEXT).unwrap();
        let prior = cfg.prior();
        let theta = prior.sample(&mut swarmfilt::rng::RngStream::new(5));
        assert!(theta[0] >= 0.5 && theta[0] < 0.99);
        assert_eq!(prior.log_rn_derivative(&theta), 0.0);
    }
}
