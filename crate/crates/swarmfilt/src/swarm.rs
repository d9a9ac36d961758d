//! The particle swarm: many independent filters at sampled parameters,
//! averaged into prior-integrated filtering estimates.
//!
//! Where a single filter conditions on one fixed parameter vector, the swarm
//! targets the *prior-integrated* expectation `∫ E[f(x_t) | y_1:t, θ] π(dθ)`.
//! It draws `n_filters` parameter vectors from the prior's proposal,
//! instantiates one [`sisr`](crate::sisr) filter per draw, advances them all
//! in lockstep, and averages their per-filter estimates weighted by the
//! prior/proposal density ratio ([`combine`]). Parameters are *never*
//! resampled: each filter keeps its θ for the whole run, which is what makes
//! the members independent and the swarm trivially parallel.
//!
//! The same machinery pools the members' likelihood estimates into a
//! marginal likelihood ([`swarm_marginal_likelihood`]) and turns first/second
//! forecast moments into a ±2-standard-deviation band
//! ([`forecast_interval`]).
//!
//! Member filters run on streams keyed by their filter index, so results are
//! byte-identical no matter how many worker threads the surrounding rayon
//! pool provides.
//!
//! ```
//! use swarmfilt::model::{FilterFunctional, PriorSpec};
//! use swarmfilt::models::{simulate, sv_model};
//! use swarmfilt::rng::RngStream;
//! use swarmfilt::swarm::{run_swarm, SwarmConfig};
//!
//! let model = sv_model();
//! let truth = [0.91, 0.5, 1.0];
//! let (_xs, ys) = simulate(&model, &truth, 10, &mut RngStream::new(1)).unwrap();
//!
//! let prior = PriorSpec::uniform_box(vec![(0.5, 0.99), (0.0, 1.0), (0.5, 2.0)]);
//! let mut cfg = SwarmConfig::new(8, 64, 42);
//! cfg.functionals = vec![FilterFunctional::new("x", |_th: &[f64], x: &[f64]| x[0])];
//! cfg.report_marginal_likelihood = true;
//!
//! let run = run_swarm(&model, &prior, &cfg, &ys).unwrap();
//! assert_eq!(run.estimates.len(), 10);
//! assert!(run.estimates[9].log_marginal_lik.unwrap().is_finite());
//! ```

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FilterFunctional, ModelSpec, ParamVec, PriorSpec, TimeSeries};
use crate::numerics::{log_sum_exp, KahanSum};
use crate::rng::RngStream;
use crate::sisr::{init_filter_with, step_filter_with, FilterEstimates, ParticleCloud, Resampling};

/// What to do when one swarm member loses every particle weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeadFilterPolicy {
    /// Fail the whole swarm with [`Error::DeadFilter`]. The default: a dead
    /// member usually means the prior box admits parameters the model cannot
    /// explain the data with, and silently absorbing that would bias the
    /// average.
    #[default]
    Abort,
    /// Log a warning, drop the member, and renormalise estimates over the
    /// survivors. The marginal likelihood keeps the original member count as
    /// its divisor — a dead member's likelihood contribution really is zero.
    Drop,
}

/// Which per-filter estimator feeds the swarm average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorKind {
    /// The weighted (pre-resampling) estimate. Default; it carries less
    /// Monte Carlo noise.
    #[default]
    Weighted,
    /// The unweighted post-resampling estimate.
    Resampled,
}

/// Swarm-level configuration.
#[derive(Clone)]
pub struct SwarmConfig {
    /// Number of member filters (parameter draws).
    pub n_filters: usize,
    /// Number of particles in each member filter.
    pub n_particles: usize,
    /// Root seed; member `i` runs on the stream `RngStream::new(seed).split(i)`.
    pub seed: u64,
    /// Functionals estimated at every step.
    pub functionals: Vec<FilterFunctional>,
    /// Attach the pooled marginal likelihood to every estimate.
    pub report_marginal_likelihood: bool,
    /// Resampling scheme used inside every member filter.
    pub resampling: Resampling,
    /// Reaction to a member losing all particle weight.
    pub dead_filter_policy: DeadFilterPolicy,
    /// Which per-filter estimator enters the average.
    pub estimator: EstimatorKind,
}

impl SwarmConfig {
    /// A configuration with the default policies: multinomial resampling,
    /// weighted estimator, abort on dead members, no functionals, no
    /// marginal-likelihood reporting.
    pub fn new(n_filters: usize, n_particles: usize, seed: u64) -> Self {
        Self {
            n_filters,
            n_particles,
            seed,
            functionals: Vec::new(),
            report_marginal_likelihood: false,
            resampling: Resampling::default(),
            dead_filter_policy: DeadFilterPolicy::default(),
            estimator: EstimatorKind::default(),
        }
    }
}

/// The swarm's full state after processing some prefix of the observations.
///
/// All live clouds share the same time index `t`; a cloud whose `alive` flag
/// is false is frozen at the step it died (or never initialised, when it died
/// on the first observation) and is excluded from every average except the
/// marginal likelihood, where it contributes a zero term.
#[derive(Debug, Clone)]
pub struct SwarmState {
    /// Parameter draw of each member.
    pub params: Vec<ParamVec>,
    /// Log prior/proposal density ratio of each member's draw.
    pub log_rn: Vec<f64>,
    /// Particle cloud of each member.
    pub clouds: Vec<ParticleCloud>,
    /// Running sum of each member's conditional log-likelihood factors;
    /// `-inf` once a member is dead.
    pub cum_log_lik: Vec<f64>,
    /// Liveness of each member.
    pub alive: Vec<bool>,
    /// Time index of the last processed observation (1-based).
    pub t: usize,
}

impl SwarmState {
    /// Number of members, dead or alive.
    pub fn n_filters(&self) -> usize {
        self.params.len()
    }

    /// Number of members still alive.
    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }
}

/// One time step's swarm-level output.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmEstimate {
    /// Time index of the step (1-based).
    pub t: usize,
    /// Combined estimates, one per functional.
    pub values: Vec<f64>,
    /// The per-member estimates behind each value: `per_filter[k][i]` is
    /// member `i`'s estimate of functional `k`, `NaN` at dead slots.
    pub per_filter: Vec<Vec<f64>>,
    /// Pooled marginal likelihood up to this step, when requested.
    pub log_marginal_lik: Option<f64>,
    /// Number of members alive after the step.
    pub alive: usize,
}

/// A whole swarm pass: per-step estimates plus the final state.
#[derive(Debug, Clone)]
pub struct SwarmRun {
    /// Per-step estimates in time order.
    pub estimates: Vec<SwarmEstimate>,
    /// State after the last observation.
    pub state: SwarmState,
}

/// Outcome of one member's init/step, before the dead-filter policy is
/// applied.
enum MemberOutcome<T> {
    Live(T),
    Died { t: usize },
}

/// The stream a member filter runs on. Everything the member draws — its
/// parameter, every mutation, every resampling — descends from this stream,
/// so the member's whole trajectory is a pure function of (seed, index).
fn member_stream(seed: u64, index: usize) -> RngStream {
    RngStream::new(seed).split(index as u64)
}

fn check_config(spec: &ModelSpec, prior: &PriorSpec, cfg: &SwarmConfig, y: &[f64]) -> Result<()> {
    if cfg.n_filters == 0 {
        return Err(Error::InvalidConfig("n_filters must be at least 1".into()));
    }
    if cfg.n_particles == 0 {
        return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
    }
    if prior.dim() != spec.param_dim() {
        return Err(Error::InvalidConfig(format!(
            "prior has {} coordinates but model '{}' declares {} parameters",
            prior.dim(),
            spec.name,
            spec.param_dim()
        )));
    }
    if y.len() != spec.obs_dim {
        return Err(Error::InvalidConfig(format!(
            "observation has width {} but model '{}' declares {}",
            y.len(),
            spec.name,
            spec.obs_dim
        )));
    }
    Ok(())
}

/// Draws the member parameters and runs every member's first filtering step
/// on `y1`.
///
/// Member `i` samples its parameter from `prior` on `member_stream(seed, i)
/// .split(0)` and filters on the member stream itself, so the whole swarm is
/// a pure function of the configuration. Parameter draws whose declared
/// density-ratio bound is violated are rejected loudly — that is a broken
/// [`PriorSpec`], not Monte Carlo bad luck.
pub fn instantiate_swarm(
    spec: &ModelSpec,
    prior: &PriorSpec,
    cfg: &SwarmConfig,
    y1: &[f64],
) -> Result<(SwarmState, SwarmEstimate)> {
    check_config(spec, prior, cfg, y1)?;
    let log_bound = prior.rn_upper_bound().ln();

    type InitOutcome = MemberOutcome<(ParticleCloud, FilterEstimates)>;
    let members: Vec<Result<(ParamVec, f64, InitOutcome)>> = (0..cfg.n_filters)
        .into_par_iter()
        .map(|i| {
            let stream = member_stream(cfg.seed, i);
            let theta = prior.sample(&mut stream.split(0));
            let log_rn = prior.log_rn_derivative(&theta);
            if log_rn.is_nan() || log_rn > log_bound + 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "prior density ratio at {theta:?} has log {log_rn}, \
                     above the declared bound ln({}) = {log_bound}",
                    prior.rn_upper_bound()
                )));
            }
            let outcome = match init_filter_with(
                spec,
                &theta,
                cfg.n_particles,
                y1,
                &cfg.functionals,
                &stream,
                cfg.resampling,
            ) {
                Ok(pair) => MemberOutcome::Live(pair),
                Err(Error::AllWeightsZero { t, .. }) => MemberOutcome::Died { t },
                Err(other) => return Err(other),
            };
            Ok((theta, log_rn, outcome))
        })
        .collect();

    let n = cfg.n_filters;
    let mut state = SwarmState {
        params: Vec::with_capacity(n),
        log_rn: Vec::with_capacity(n),
        clouds: Vec::with_capacity(n),
        cum_log_lik: Vec::with_capacity(n),
        alive: Vec::with_capacity(n),
        t: 1,
    };
    let mut step_estimates: Vec<Option<FilterEstimates>> = Vec::with_capacity(n);
    for (i, member) in members.into_iter().enumerate() {
        let (theta, log_rn, outcome) = member?;
        match outcome {
            MemberOutcome::Live((cloud, est)) => {
                state.params.push(theta);
                state.log_rn.push(log_rn);
                state.clouds.push(cloud);
                state.cum_log_lik.push(est.log_cond_lik);
                state.alive.push(true);
                step_estimates.push(Some(est));
            }
            MemberOutcome::Died { t } => {
                if cfg.dead_filter_policy == DeadFilterPolicy::Abort {
                    return Err(Error::DeadFilter { filter: i, t, theta });
                }
                warn!(
                    "swarm member {i} (parameters {theta:?}) lost all weight at t={t}; dropping"
                );
                state.params.push(theta);
                state.log_rn.push(log_rn);
                state.clouds.push(ParticleCloud::new(cfg.n_particles, spec.state_dim));
                state.cum_log_lik.push(f64::NEG_INFINITY);
                state.alive.push(false);
                step_estimates.push(None);
            }
        }
    }
    if state.alive_count() == 0 {
        return Err(Error::AllFiltersDead { t: 1 });
    }

    let estimate = assemble(&state, &step_estimates, cfg);
    Ok((state, estimate))
}

/// Advances every live member by one observation and combines their
/// estimates.
///
/// Members are stepped in parallel; each runs on its own index-keyed stream,
/// so the result does not depend on scheduling or worker count.
pub fn advance_swarm(
    spec: &ModelSpec,
    state: &mut SwarmState,
    y: &[f64],
    cfg: &SwarmConfig,
) -> Result<SwarmEstimate> {
    if y.len() != spec.obs_dim {
        return Err(Error::InvalidConfig(format!(
            "observation has width {} but model '{}' declares {}",
            y.len(),
            spec.name,
            spec.obs_dim
        )));
    }
    let expected_t = state.t;
    let params = &state.params;
    let alive = &state.alive;
    let stepped: Vec<Option<Result<FilterEstimates>>> = state
        .clouds
        .par_iter_mut()
        .enumerate()
        .map(|(i, cloud)| {
            if !alive[i] {
                return None;
            }
            debug_assert_eq!(cloud.t(), expected_t, "live clouds must share the swarm time");
            let stream = member_stream(cfg.seed, i);
            Some(step_filter_with(
                spec,
                &params[i],
                cloud,
                y,
                &cfg.functionals,
                &stream,
                cfg.resampling,
            ))
        })
        .collect();

    let mut step_estimates: Vec<Option<FilterEstimates>> = Vec::with_capacity(state.n_filters());
    for (i, outcome) in stepped.into_iter().enumerate() {
        match outcome {
            None => step_estimates.push(None),
            Some(Ok(est)) => {
                state.cum_log_lik[i] += est.log_cond_lik;
                step_estimates.push(Some(est));
            }
            Some(Err(Error::AllWeightsZero { t, .. })) => {
                if cfg.dead_filter_policy == DeadFilterPolicy::Abort {
                    return Err(Error::DeadFilter { filter: i, t, theta: state.params[i].clone() });
                }
                warn!(
                    "swarm member {i} (parameters {:?}) lost all weight at t={t}; dropping",
                    state.params[i]
                );
                state.alive[i] = false;
                state.cum_log_lik[i] = f64::NEG_INFINITY;
                step_estimates.push(None);
            }
            Some(Err(other)) => return Err(other),
        }
    }
    state.t += 1;
    if state.alive_count() == 0 {
        return Err(Error::AllFiltersDead { t: state.t });
    }
    Ok(assemble(&state, &step_estimates, cfg))
}

/// Builds the swarm estimate for the step whose per-member outputs are in
/// `step_estimates` (`None` marks dead members).
fn assemble(
    state: &SwarmState,
    step_estimates: &[Option<FilterEstimates>],
    cfg: &SwarmConfig,
) -> SwarmEstimate {
    let n = state.n_filters();
    let n_functionals = cfg.functionals.len();
    let all_alive = state.alive_count() == n;

    let mut per_filter = Vec::with_capacity(n_functionals);
    let mut values = Vec::with_capacity(n_functionals);
    for k in 0..n_functionals {
        let row: Vec<f64> = step_estimates
            .iter()
            .map(|e| match e {
                Some(est) => match cfg.estimator {
                    EstimatorKind::Weighted => est.weighted[k],
                    EstimatorKind::Resampled => est.resampled[k],
                },
                None => f64::NAN,
            })
            .collect();
        let value = if all_alive {
            combine(&row, &state.log_rn)
        } else {
            // Drop policy: average over the survivors only.
            let mut live_vals = Vec::with_capacity(state.alive_count());
            let mut live_rn = Vec::with_capacity(state.alive_count());
            for i in 0..n {
                if state.alive[i] {
                    live_vals.push(row[i]);
                    live_rn.push(state.log_rn[i]);
                }
            }
            combine(&live_vals, &live_rn)
        };
        per_filter.push(row);
        values.push(value);
    }

    let log_marginal_lik =
        cfg.report_marginal_likelihood.then(|| swarm_marginal_likelihood(state));
    SwarmEstimate {
        t: state.t,
        values,
        per_filter,
        log_marginal_lik,
        alive: state.alive_count(),
    }
}

/// The swarm average: `len⁻¹ Σᵢ exp(log_rn[i]) · per_filter[i]`, accumulated
/// with compensated summation (swarms can hold thousands of members whose
/// terms differ by orders of magnitude).
///
/// ```
/// use swarmfilt::swarm::combine;
///
/// let value = combine(&[1.0, 2.0, 3.0], &[0.5f64.ln(), 0.0, 1.5f64.ln()]);
/// assert!((value - 7.0 / 3.0).abs() < 1e-12); // (0.5·1 + 1·2 + 1.5·3) / 3
/// ```
pub fn combine(per_filter: &[f64], log_rn: &[f64]) -> f64 {
    assert_eq!(per_filter.len(), log_rn.len(), "one density ratio per member");
    assert!(!per_filter.is_empty(), "cannot combine an empty swarm");
    let mut acc = KahanSum::new();
    for (&v, &lr) in per_filter.iter().zip(log_rn) {
        acc.add(lr.exp() * v);
    }
    acc.total() / per_filter.len() as f64
}

/// The pooled marginal likelihood estimate
/// `ln( n⁻¹ Σᵢ exp(log_rn[i] + cum_log_lik[i]) )`, computed via log-sum-exp.
///
/// The divisor is the *original* member count even when members have died:
/// a dead member's likelihood contribution is genuinely zero, and its
/// `cum_log_lik` of `-inf` makes its term vanish from the sum. The result is
/// `-inf` only if every member is dead.
pub fn swarm_marginal_likelihood(state: &SwarmState) -> f64 {
    let terms: Vec<f64> = state
        .log_rn
        .iter()
        .zip(&state.cum_log_lik)
        .map(|(&lr, &cl)| lr + cl)
        .collect();
    log_sum_exp(&terms) - (terms.len() as f64).ln()
}

/// Turns first/second forecast moments into a ±2-standard-deviation band:
/// `center = f1`, `halfwidth = 2·sqrt(f2 − f1²)`.
///
/// Errors with [`Error::NegativeVarianceEstimate`] when the moment estimates
/// imply a negative variance — a Monte Carlo artifact near-degenerate
/// forecasts can produce; the caller decides whether to clamp.
///
/// ```
/// use swarmfilt::swarm::forecast_interval;
///
/// assert_eq!(forecast_interval(0.0, 0.25).unwrap(), (0.0, 1.0));
/// assert_eq!(forecast_interval(0.0, 0.0).unwrap(), (0.0, 0.0));
/// assert!(forecast_interval(1.0, 0.5).is_err());
/// ```
pub fn forecast_interval(estimate_f1: f64, estimate_f2: f64) -> Result<(f64, f64)> {
    let variance = estimate_f2 - estimate_f1 * estimate_f1;
    if variance < 0.0 {
        return Err(Error::NegativeVarianceEstimate {
            mean: estimate_f1,
            second_moment: estimate_f2,
        });
    }
    Ok((estimate_f1, 2.0 * variance.sqrt()))
}

/// Runs a swarm over a whole observation series.
pub fn run_swarm(
    spec: &ModelSpec,
    prior: &PriorSpec,
    cfg: &SwarmConfig,
    obs: &TimeSeries,
) -> Result<SwarmRun> {
    if obs.is_empty() {
        return Err(Error::InvalidConfig("observation series is empty".into()));
    }
    let (mut state, first) = instantiate_swarm(spec, prior, cfg, obs.row(0))?;
    let mut estimates = Vec::with_capacity(obs.len());
    estimates.push(first);
    for i in 1..obs.len() {
        estimates.push(advance_swarm(spec, &mut state, obs.row(i), cfg)?);
    }
    Ok(SwarmRun { estimates, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate, sv_model};
    use crate::sisr::{init_filter, run_filter};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn mean_x() -> FilterFunctional {
        FilterFunctional::new("x", |_th: &[f64], x: &[f64]| x[0])
    }

    fn sv_prior() -> PriorSpec {
        PriorSpec::uniform_box(vec![(0.5, 0.99), (0.0, 1.0), (0.5, 2.0)])
    }

    fn sv_series(t_max: usize, seed: u64) -> TimeSeries {
        let (_, ys) =
            simulate(&sv_model(), &[0.91, 0.5, 1.0], t_max, &mut RngStream::new(seed)).unwrap();
        ys
    }

    /// A model whose members die at t=2 exactly when their parameter is at
    /// or above 0.5.
    fn fate_model() -> ModelSpec {
        let mut m = ModelSpec::bootstrap(
            "fate",
            vec!["kill"],
            1,
            1,
            |_th, _rng, out| out[0] = 0.0,
            |_th, _xp, _rng, out| out[0] = 0.0,
            |_th, _x, _rng, out| out[0] = 0.0,
            |_th, _x, _y| 0.0,
        );
        m.log_unnorm_weight = Arc::new(|th: &[f64], xp: &[f64], _x: &[f64], _y: &[f64]| {
            if !xp.is_empty() && th[0] >= 0.5 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        });
        m
    }

    #[test]
    fn singleton_swarm_is_the_single_filter() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let mut cfg = SwarmConfig::new(1, 64, 77);
        cfg.functionals = vec![mean_x()];
        let (state, est) =
            instantiate_swarm(&model, &PriorSpec::point(&theta), &cfg, &[0.4]).unwrap();
        assert_eq!(state.params[0], theta.to_vec());
        assert_eq!(state.log_rn[0], 0.0);

        // The same computation by hand on member 0's stream.
        let stream = member_stream(77, 0);
        let _theta_draw = PriorSpec::point(&theta).sample(&mut stream.split(0));
        let (_, single) = init_filter(&model, &theta, 64, &[0.4], &cfg.functionals, &stream)
            .unwrap();
        assert_eq!(est.per_filter[0][0], single.weighted[0]);
        assert_eq!(est.values[0], single.weighted[0]);
        assert_eq!(state.cum_log_lik[0], single.log_cond_lik);
    }

    #[test]
    fn proposal_equal_to_prior_gives_zero_log_ratios() {
        let (state, _) =
            instantiate_swarm(&sv_model(), &sv_prior(), &SwarmConfig::new(32, 8, 3), &[0.1])
                .unwrap();
        assert!(state.log_rn.iter().all(|&lr| lr == 0.0));
        // And every draw lies in the declared box.
        for theta in &state.params {
            assert!(theta[0] >= 0.5 && theta[0] < 0.99);
            assert!(theta[1] >= 0.0 && theta[1] < 1.0);
            assert!(theta[2] >= 0.5 && theta[2] < 2.0);
        }
    }

    #[test]
    fn instantiation_is_pure() {
        let cfg = SwarmConfig::new(16, 32, 1234);
        let (sa, ea) = instantiate_swarm(&sv_model(), &sv_prior(), &cfg, &[0.2]).unwrap();
        let (sb, eb) = instantiate_swarm(&sv_model(), &sv_prior(), &cfg, &[0.2]).unwrap();
        assert_eq!(sa.params, sb.params);
        assert_eq!(ea, eb);
    }

    #[test]
    fn whole_runs_are_pure() {
        let ys = sv_series(6, 9);
        let mut cfg = SwarmConfig::new(8, 32, 55);
        cfg.functionals = vec![mean_x()];
        cfg.report_marginal_likelihood = true;
        let a = run_swarm(&sv_model(), &sv_prior(), &cfg, &ys).unwrap();
        let b = run_swarm(&sv_model(), &sv_prior(), &cfg, &ys).unwrap();
        assert_eq!(a.estimates, b.estimates);
    }

    #[test]
    fn swarm_composes_individual_filter_runs() {
        // The swarm must equal the by-hand composition: per-member filters on
        // index-keyed streams, combined with the density ratios.
        let ys = sv_series(5, 21);
        let prior = sv_prior();
        let mut cfg = SwarmConfig::new(6, 40, 500);
        cfg.functionals = vec![mean_x()];
        let run = run_swarm(&sv_model(), &prior, &cfg, &ys).unwrap();

        for i in (0..cfg.n_filters).rev() {
            let stream = member_stream(cfg.seed, i);
            let theta = prior.sample(&mut stream.split(0));
            assert_eq!(run.state.params[i], theta);
            let single =
                run_filter(&sv_model(), &theta, 40, &ys, &cfg.functionals, &stream).unwrap();
            for (t_idx, est) in run.estimates.iter().enumerate() {
                assert_eq!(est.per_filter[0][i], single.estimates[t_idx].weighted[0]);
            }
            assert_relative_eq!(
                run.state.cum_log_lik[i],
                single.log_lik,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn estimate_matches_its_defining_average() {
        // values must equal n⁻¹ Σ exp(log_rn)·per_filter re-derived naively.
        let ys = sv_series(4, 33);
        let mut cfg = SwarmConfig::new(16, 25, 808);
        cfg.functionals = vec![mean_x()];
        let run = run_swarm(&sv_model(), &sv_prior(), &cfg, &ys).unwrap();
        for est in &run.estimates {
            let naive: f64 = est.per_filter[0]
                .iter()
                .zip(&run.state.log_rn)
                .map(|(&v, &lr)| lr.exp() * v)
                .sum::<f64>()
                / cfg.n_filters as f64;
            assert_relative_eq!(est.values[0], naive, epsilon = 1e-10);
        }
    }

    #[test]
    fn combine_hand_cases() {
        // Three members with ratios 0.5, 1, 1.5 and estimates 1, 2, 3.
        let value = combine(&[1.0, 2.0, 3.0], &[0.5f64.ln(), 0.0, 1.5f64.ln()]);
        assert_relative_eq!(value, 7.0 / 3.0, epsilon = 1e-12);
        // Constant case: ratios 1, all estimates c.
        assert_relative_eq!(combine(&[2.5, 2.5, 2.5], &[0.0; 3]), 2.5, epsilon = 1e-15);
        // Boundary: a single member.
        assert_relative_eq!(
            combine(&[4.0], &[2.0f64.ln()]),
            8.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn combine_is_order_independent_up_to_rounding() {
        let vals: Vec<f64> = (0..100).map(|i| ((i * 37) % 19) as f64 / 7.0 - 1.0).collect();
        let rns: Vec<f64> = (0..100).map(|i| (((i * 11) % 5) as f64 / 10.0).ln()).collect();
        let forward = combine(&vals, &rns);
        let mut rev_vals = vals.clone();
        let mut rev_rns = rns.clone();
        rev_vals.reverse();
        rev_rns.reverse();
        let backward = combine(&rev_vals, &rev_rns);
        assert_relative_eq!(forward, backward, epsilon = 1e-13);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let ys = sv_series(5, 41);
        let mut cfg = SwarmConfig::new(12, 30, 4242);
        cfg.functionals = vec![mean_x()];
        cfg.report_marginal_likelihood = true;
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(|| run_swarm(&sv_model(), &sv_prior(), &cfg, &ys)).unwrap();
        let b = pool4.install(|| run_swarm(&sv_model(), &sv_prior(), &cfg, &ys)).unwrap();
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.state.cum_log_lik, b.state.cum_log_lik);
    }

    #[test]
    fn marginal_likelihood_hand_cases() {
        let single = SwarmState {
            params: vec![vec![]],
            log_rn: vec![0.0],
            clouds: vec![ParticleCloud::new(1, 1)],
            cum_log_lik: vec![-3.25],
            alive: vec![true],
            t: 1,
        };
        assert_eq!(swarm_marginal_likelihood(&single), -3.25);

        let pair = SwarmState {
            params: vec![vec![], vec![]],
            log_rn: vec![0.0, 0.0],
            clouds: vec![ParticleCloud::new(1, 1), ParticleCloud::new(1, 1)],
            cum_log_lik: vec![2.0f64.ln(), 4.0f64.ln()],
            alive: vec![true, true],
            t: 1,
        };
        assert_relative_eq!(swarm_marginal_likelihood(&pair), 3.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn marginal_likelihood_keeps_the_original_divisor_with_dead_members() {
        // Members contribute 3, 0 (dead), 6: pooled mean is 9/3 = 3.
        let state = SwarmState {
            params: vec![vec![], vec![], vec![]],
            log_rn: vec![0.0, 0.0, 0.0],
            clouds: (0..3).map(|_| ParticleCloud::new(1, 1)).collect(),
            cum_log_lik: vec![3.0f64.ln(), f64::NEG_INFINITY, 6.0f64.ln()],
            alive: vec![true, false, true],
            t: 2,
        };
        assert_relative_eq!(swarm_marginal_likelihood(&state), 3.0f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn abort_policy_names_the_dead_member() {
        let ys = TimeSeries::from_column(vec![0.0, 0.0]);
        let prior = PriorSpec::uniform_box(vec![(0.0, 1.0)]);
        let cfg = SwarmConfig::new(8, 16, 7);
        let err = run_swarm(&fate_model(), &prior, &cfg, &ys);
        match err {
            Err(Error::DeadFilter { filter, t, theta }) => {
                assert_eq!(t, 2);
                assert!(theta[0] >= 0.5, "the attached parameter must explain the death");
                assert!(filter < 8);
            }
            other => panic!("expected DeadFilter, got {other:?}"),
        }
    }

    #[test]
    fn drop_policy_renormalises_over_survivors() {
        let ys = TimeSeries::from_column(vec![0.0, 0.0]);
        let prior = PriorSpec::uniform_box(vec![(0.0, 1.0)]);
        let mut cfg = SwarmConfig::new(16, 8, 7);
        cfg.dead_filter_policy = DeadFilterPolicy::Drop;
        cfg.functionals = vec![mean_x()];
        cfg.report_marginal_likelihood = true;
        let run = run_swarm(&fate_model(), &prior, &cfg, &ys).unwrap();

        let final_est = &run.estimates[1];
        let survivors = final_est.alive;
        assert!(survivors > 0 && survivors < 16, "seed must produce a mixed outcome");
        assert_eq!(run.state.alive_count(), survivors);

        // Dead slots are NaN; the value averages survivors only.
        let mut live_sum = 0.0;
        for i in 0..16 {
            if run.state.alive[i] {
                assert!(final_est.per_filter[0][i].is_finite());
                live_sum += run.state.log_rn[i].exp() * final_est.per_filter[0][i];
            } else {
                assert!(final_est.per_filter[0][i].is_nan());
            }
        }
        assert_relative_eq!(
            final_est.values[0],
            live_sum / survivors as f64,
            epsilon = 1e-12
        );

        // The pooled likelihood stays finite while any member survives.
        assert!(final_est.log_marginal_lik.unwrap().is_finite());
    }

    #[test]
    fn drop_policy_with_no_survivors_is_fatal() {
        let ys = TimeSeries::from_column(vec![0.0, 0.0]);
        let prior = PriorSpec::point(&[0.9]); // everyone dies at t=2
        let mut cfg = SwarmConfig::new(4, 8, 7);
        cfg.dead_filter_policy = DeadFilterPolicy::Drop;
        let err = run_swarm(&fate_model(), &prior, &cfg, &ys);
        assert!(matches!(err, Err(Error::AllFiltersDead { t: 2 })));
    }

    #[test]
    fn resampled_estimator_selects_the_other_column() {
        let ys = sv_series(3, 61);
        let prior = PriorSpec::point(&[0.91, 0.5, 1.0]);
        let mut cfg = SwarmConfig::new(2, 32, 99);
        cfg.functionals = vec![mean_x()];
        cfg.estimator = EstimatorKind::Resampled;
        let run = run_swarm(&sv_model(), &prior, &cfg, &ys).unwrap();

        let stream = member_stream(99, 1);
        let theta = prior.sample(&mut stream.split(0));
        let single = run_filter(&sv_model(), &theta, 32, &ys, &cfg.functionals, &stream).unwrap();
        for (t_idx, est) in run.estimates.iter().enumerate() {
            assert_eq!(est.per_filter[0][1], single.estimates[t_idx].resampled[0]);
        }
    }

    #[test]
    fn overclaimed_density_ratio_bound_is_rejected() {
        // Proposal is U[0, 1] but the prior claims to be U[0, 0.5] with a
        // declared ratio bound of 1: the true ratio is 2 on half the box.
        let prior = PriorSpec::custom(
            1,
            |th: &[f64]| if th[0] <= 0.5 { 2.0f64.ln() } else { f64::NEG_INFINITY },
            |rng: &mut RngStream| vec![rand::Rng::random::<f64>(rng)],
            |th: &[f64]| if th[0] <= 0.5 { 2.0f64.ln() } else { f64::NEG_INFINITY },
            1.0,
        );
        let model = fate_model();
        let err = instantiate_swarm(&model, &prior, &SwarmConfig::new(32, 4, 5), &[0.0]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn marginal_likelihood_is_none_unless_requested() {
        let ys = sv_series(2, 71);
        let mut cfg = SwarmConfig::new(4, 16, 11);
        cfg.functionals = vec![mean_x()];
        let run = run_swarm(&sv_model(), &sv_prior(), &cfg, &ys).unwrap();
        assert!(run.estimates.iter().all(|e| e.log_marginal_lik.is_none()));
        cfg.report_marginal_likelihood = true;
        let run = run_swarm(&sv_model(), &sv_prior(), &cfg, &ys).unwrap();
        assert!(run.estimates.iter().all(|e| e.log_marginal_lik.unwrap().is_finite()));
        // The reported value is the pooled statistic of the final state.
        assert_eq!(
            run.estimates.last().unwrap().log_marginal_lik.unwrap(),
            swarm_marginal_likelihood(&run.state)
        );
    }

    #[test]
    fn forecast_interval_cases() {
        assert_eq!(forecast_interval(0.0, 0.25).unwrap(), (0.0, 1.0));
        assert_eq!(forecast_interval(0.0, 0.0).unwrap(), (0.0, 0.0));
        let err = forecast_interval(1.0, 0.5);
        match err {
            Err(Error::NegativeVarianceEstimate { mean, second_moment }) => {
                assert_eq!(mean, 1.0);
                assert_eq!(second_moment, 0.5);
            }
            other => panic!("expected NegativeVarianceEstimate, got {other:?}"),
        }
        // Nonzero center.
        let (center, halfwidth) = forecast_interval(3.0, 13.0).unwrap();
        assert_eq!(center, 3.0);
        assert_relative_eq!(halfwidth, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let ys = sv_series(2, 5);
        let err = run_swarm(&sv_model(), &sv_prior(), &SwarmConfig::new(0, 8, 1), &ys);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        let err = run_swarm(&sv_model(), &sv_prior(), &SwarmConfig::new(8, 0, 1), &ys);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        // Prior dimension mismatch.
        let err = run_swarm(
            &sv_model(),
            &PriorSpec::uniform_box(vec![(0.0, 1.0)]),
            &SwarmConfig::new(2, 8, 1),
            &ys,
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        // Empty series.
        let err = run_swarm(
            &sv_model(),
            &sv_prior(),
            &SwarmConfig::new(2, 8, 1),
            &TimeSeries::new(1),
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
