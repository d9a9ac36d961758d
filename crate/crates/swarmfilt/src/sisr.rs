//! Sequential importance sampling with resampling (SISR) for one fixed
//! parameter vector.
//!
//! Each time step performs, in order:
//!
//! 1. **Mutation** — every particle proposes a new state from the model's
//!    proposal kernel, each on its own child RNG stream;
//! 2. **Weighting** — the proposal is scored by the model's unnormalised
//!    log-weight (observation density times model/proposal ratio);
//! 3. **Estimation** — the *weighted* estimate of every registered
//!    functional is taken over the mutated, weighted cloud, and the log
//!    conditional likelihood factor `ln(n^{-1} sum W)` is recorded;
//! 4. **Resampling** — particle indices are redrawn in proportion to the
//!    weights (multinomial by default), after which the *resampled* estimate
//!    is the plain average over the new cloud.
//!
//! Resampling happens every step, unconditionally. The weighted estimate is
//! the one to prefer: the resampled estimate measures the same quantity but
//! carries the extra Monte Carlo noise of the resampling draw — a fact the
//! test suite checks empirically against the exact Kalman filter.
//!
//! Everything here is deterministic given the filter's [`RngStream`]: the
//! stream is split by time step, then by purpose (mutation vs resampling),
//! then by particle, so no call order or thread schedule can change a draw.
//!
//! ```
//! use swarmfilt::model::FilterFunctional;
//! use swarmfilt::models::{simulate, sv_model};
//! use swarmfilt::rng::RngStream;
//! use swarmfilt::sisr::run_filter;
//!
//! let model = sv_model();
//! let theta = [0.91, 0.5, 1.0];
//! let root = RngStream::new(7);
//! let (_xs, ys) = simulate(&model, &theta, 20, &mut root.split(0)).unwrap();
//!
//! let mean_state = FilterFunctional::new("x", |_th: &[f64], x: &[f64]| x[0]);
//! let run = run_filter(&model, &theta, 200, &ys, &[mean_state], &root.split(1)).unwrap();
//! assert_eq!(run.estimates.len(), 20);
//! assert!(run.log_lik.is_finite());
//! ```

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{FilterFunctional, ModelSpec, TimeSeries};
use crate::numerics::{log_sum_exp, KahanSum};
use crate::rng::RngStream;

/// How resampling indices are drawn.
///
/// Multinomial is the default and the variant the variance theory in this
/// crate's tests assumes; systematic resampling is offered for callers who
/// want the lower-variance scheme and accept that the resampled-estimator
/// variance analysis no longer applies exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    /// Independent categorical draws, one per output slot.
    #[default]
    Multinomial,
    /// One uniform offset, then a stride of `total/n` across the cumulative
    /// weights.
    Systematic,
}

/// A population of particles at one time step.
///
/// Between steps the cloud is always in its post-resampling state: uniform
/// log-weights (all zero) and `log_weight_sum = ln n`. During a step the
/// weights hold the freshly computed unnormalised values; they are reset by
/// the resampling stage.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    t: usize,
    state_dim: usize,
    states: Vec<f64>,
    log_weights: Vec<f64>,
    log_weight_sum: f64,
}

impl ParticleCloud {
    pub(crate) fn new(n: usize, state_dim: usize) -> Self {
        Self {
            t: 0,
            state_dim,
            states: vec![0.0; n * state_dim],
            log_weights: vec![0.0; n],
            log_weight_sum: (n as f64).ln(),
        }
    }

    /// Time index of the last processed observation (1-based).
    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of particles.
    pub fn n_particles(&self) -> usize {
        self.log_weights.len()
    }

    /// Dimension of each particle's state.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// State of particle `j`.
    pub fn particle(&self, j: usize) -> &[f64] {
        &self.states[j * self.state_dim..(j + 1) * self.state_dim]
    }

    /// Current unnormalised log-weights (uniform between steps).
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Cached log-sum-exp of the current log-weights.
    pub fn log_weight_sum(&self) -> f64 {
        self.log_weight_sum
    }
}

/// Per-step output of the filter: one estimate per registered functional,
/// evaluated both before and after resampling, plus the conditional
/// likelihood factor.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEstimates {
    /// Time index of the step (1-based).
    pub t: usize,
    /// Weighted (pre-resampling) estimates, one per functional.
    pub weighted: Vec<f64>,
    /// Unweighted post-resampling estimates, one per functional.
    pub resampled: Vec<f64>,
    /// `ln( n^{-1} sum_j W_t^j )`, the log conditional likelihood factor of
    /// this step.
    pub log_cond_lik: f64,
}

/// A whole filtering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    /// Per-step estimates in time order.
    pub estimates: Vec<FilterEstimates>,
    /// Total log-likelihood estimate, the sum of the per-step factors.
    pub log_lik: f64,
}

/// Initialises a filter on the first observation with multinomial
/// resampling. See [`init_filter_with`] to choose the scheme.
pub fn init_filter(
    spec: &ModelSpec,
    theta: &[f64],
    n_particles: usize,
    y1: &[f64],
    functionals: &[FilterFunctional],
    rng: &RngStream,
) -> Result<(ParticleCloud, FilterEstimates)> {
    init_filter_with(spec, theta, n_particles, y1, functionals, rng, Resampling::Multinomial)
}

/// Initialises a filter: draws `n_particles` initial proposals, weights them
/// against `y1`, estimates, and resamples.
///
/// `rng` is the *filter* stream; the step derives its own per-time child
/// (`rng.split(1)` for this first step), so the same stream value can be
/// passed to every subsequent [`step_filter_with`] call.
pub fn init_filter_with(
    spec: &ModelSpec,
    theta: &[f64],
    n_particles: usize,
    y1: &[f64],
    functionals: &[FilterFunctional],
    rng: &RngStream,
    scheme: Resampling,
) -> Result<(ParticleCloud, FilterEstimates)> {
    if n_particles == 0 {
        return Err(Error::InvalidConfig("n_particles must be at least 1".into()));
    }
    if theta.len() != spec.param_dim() {
        return Err(Error::InvalidConfig(format!(
            "theta has {} entries but model '{}' declares {}",
            theta.len(),
            spec.name,
            spec.param_dim()
        )));
    }
    let mut cloud = ParticleCloud::new(n_particles, spec.state_dim);
    let estimates = advance(spec, theta, &mut cloud, y1, functionals, rng, scheme, true)?;
    Ok((cloud, estimates))
}

/// Advances an initialised filter by one observation with multinomial
/// resampling. See [`step_filter_with`] to choose the scheme.
pub fn step_filter(
    spec: &ModelSpec,
    theta: &[f64],
    cloud: &mut ParticleCloud,
    y: &[f64],
    functionals: &[FilterFunctional],
    rng: &RngStream,
) -> Result<FilterEstimates> {
    step_filter_with(spec, theta, cloud, y, functionals, rng, Resampling::Multinomial)
}

/// Advances an initialised filter by one observation: mutation, weighting,
/// estimation, resampling.
///
/// `rng` must be the same filter stream passed at initialisation; the step
/// derives its child stream from the new time index.
pub fn step_filter_with(
    spec: &ModelSpec,
    theta: &[f64],
    cloud: &mut ParticleCloud,
    y: &[f64],
    functionals: &[FilterFunctional],
    rng: &RngStream,
    scheme: Resampling,
) -> Result<FilterEstimates> {
    advance(spec, theta, cloud, y, functionals, rng, scheme, false)
}

/// Runs a filter over a whole series with multinomial resampling. See
/// [`run_filter_with`] to choose the scheme.
pub fn run_filter(
    spec: &ModelSpec,
    theta: &[f64],
    n_particles: usize,
    obs: &TimeSeries,
    functionals: &[FilterFunctional],
    rng: &RngStream,
) -> Result<FilterRun> {
    run_filter_with(spec, theta, n_particles, obs, functionals, rng, Resampling::Multinomial)
}

/// Runs a filter over a whole series: [`init_filter_with`] on the first
/// observation, then one [`step_filter_with`] per remaining observation,
/// accumulating the total log-likelihood estimate.
pub fn run_filter_with(
    spec: &ModelSpec,
    theta: &[f64],
    n_particles: usize,
    obs: &TimeSeries,
    functionals: &[FilterFunctional],
    rng: &RngStream,
    scheme: Resampling,
) -> Result<FilterRun> {
    if obs.is_empty() {
        return Err(Error::InvalidConfig("observation series is empty".into()));
    }
    if obs.dim() != spec.obs_dim {
        return Err(Error::InvalidConfig(format!(
            "observations have width {} but model '{}' declares {}",
            obs.dim(),
            spec.name,
            spec.obs_dim
        )));
    }
    let mut estimates = Vec::with_capacity(obs.len());
    let mut log_lik = KahanSum::new();
    let (mut cloud, first) =
        init_filter_with(spec, theta, n_particles, obs.row(0), functionals, rng, scheme)?;
    log_lik.add(first.log_cond_lik);
    estimates.push(first);
    for i in 1..obs.len() {
        let step = step_filter_with(spec, theta, &mut cloud, obs.row(i), functionals, rng, scheme)?;
        log_lik.add(step.log_cond_lik);
        estimates.push(step);
    }
    Ok(FilterRun { estimates, log_lik: log_lik.total() })
}

/// One full step: mutation, weighting, estimation, resampling.
#[allow(clippy::too_many_arguments)]
fn advance(
    spec: &ModelSpec,
    theta: &[f64],
    cloud: &mut ParticleCloud,
    y: &[f64],
    functionals: &[FilterFunctional],
    rng: &RngStream,
    scheme: Resampling,
    init: bool,
) -> Result<FilterEstimates> {
    let t = cloud.t + 1;
    let n = cloud.n_particles();
    let d = cloud.state_dim;
    debug_assert_eq!(y.len(), spec.obs_dim);

    let step_stream = rng.split(t as u64);
    let mutation_parent = step_stream.split(0);

    // Mutation and weighting, each particle on its own child stream.
    let mut proposals = vec![0.0; n * d];
    for j in 0..n {
        let mut particle_rng = mutation_parent.split(j as u64);
        let out = &mut proposals[j * d..(j + 1) * d];
        let lw = if init {
            (spec.propose_initial)(theta, &mut particle_rng, out);
            (spec.log_unnorm_weight)(theta, &[], out, y)
        } else {
            let prev = &cloud.states[j * d..(j + 1) * d];
            (spec.propose_transition)(theta, prev, &mut particle_rng, out);
            (spec.log_unnorm_weight)(theta, prev, out, y)
        };
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::InvalidLogWeight { t, particle: j });
        }
        cloud.log_weights[j] = lw;
    }

    let lse = log_sum_exp(&cloud.log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero { t, n });
    }
    cloud.log_weight_sum = lse;

    // Normalised weights; their sum is 1 up to rounding and is used as the
    // denominator so that a constant functional estimates to exactly 1.
    let mut weights = vec![0.0; n];
    let mut weight_sum = 0.0;
    for (w, &lw) in weights.iter_mut().zip(&cloud.log_weights) {
        *w = (lw - lse).exp();
        weight_sum += *w;
    }

    // Weighted estimates; functional values are cached for reuse on the
    // resampled cloud (resampling only ever selects positive-weight
    // particles, and exactly those have cached values).
    let mut fvals = vec![0.0; functionals.len() * n];
    let mut weighted = Vec::with_capacity(functionals.len());
    for (k, f) in functionals.iter().enumerate() {
        let cache = &mut fvals[k * n..(k + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            if weights[j] > 0.0 {
                let v = f.eval(theta, &proposals[j * d..(j + 1) * d]);
                if !v.is_finite() {
                    return Err(Error::FunctionalOverflow { name: f.name().to_string(), t });
                }
                cache[j] = v;
                acc += weights[j] * v;
            }
        }
        weighted.push(acc / weight_sum);
    }

    let log_cond_lik = lse - (n as f64).ln();

    // Resampling on the step's dedicated child stream.
    let mut resample_rng = step_stream.split(1);
    let indices = resample_indices(&weights, weight_sum, n, &mut resample_rng, scheme);

    for (slot, &src) in indices.iter().enumerate() {
        cloud.states[slot * d..(slot + 1) * d]
            .copy_from_slice(&proposals[src * d..(src + 1) * d]);
    }

    let mut resampled = Vec::with_capacity(functionals.len());
    for k in 0..functionals.len() {
        let cache = &fvals[k * n..(k + 1) * n];
        let acc: f64 = indices.iter().map(|&src| cache[src]).sum();
        resampled.push(acc / n as f64);
    }

    cloud.log_weights.fill(0.0);
    cloud.log_weight_sum = (n as f64).ln();
    cloud.t = t;

    Ok(FilterEstimates { t, weighted, resampled, log_cond_lik })
}

/// Draws `n_out` indices proportional to `weights` (which need not be
/// normalised; `total` is their sum). Zero-weight cells are never selected.
fn resample_indices(
    weights: &[f64],
    total: f64,
    n_out: usize,
    rng: &mut RngStream,
    scheme: Resampling,
) -> Vec<usize> {
    let n = weights.len();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        cum.push(acc);
        if w > 0.0 {
            last_positive = j;
        }
    }

    let mut indices = Vec::with_capacity(n_out);
    match scheme {
        Resampling::Multinomial => {
            for _ in 0..n_out {
                let target = rng.random::<f64>() * total;
                let idx = cum.partition_point(|&c| c <= target);
                indices.push(idx.min(last_positive));
            }
        }
        Resampling::Systematic => {
            let offset = rng.random::<f64>();
            let stride = total / n_out as f64;
            let mut j = 0;
            for k in 0..n_out {
                let target = (k as f64 + offset) * stride;
                while j < last_positive && cum[j] <= target {
                    j += 1;
                }
                indices.push(j);
            }
        }
    }
    indices
}

/// Draws `n_out` iid indices with probability proportional to the
/// (log-space) weights.
///
/// A log-weight of `-inf` marks a zero-probability cell that will never be
/// selected. Errors with [`AllWeightsZero`](Error::AllWeightsZero) (reported
/// at `t = 0`, since no time step is in scope here) when every cell is
/// zero.
pub fn resample_multinomial(
    log_weights: &[f64],
    n_out: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    resample_standalone(log_weights, n_out, rng, Resampling::Multinomial)
}

/// Systematic counterpart of [`resample_multinomial`]: one uniform offset
/// and a fixed stride across the cumulative weights. Lower variance, but
/// draws are not independent across slots.
pub fn resample_systematic(
    log_weights: &[f64],
    n_out: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    resample_standalone(log_weights, n_out, rng, Resampling::Systematic)
}

fn resample_standalone(
    log_weights: &[f64],
    n_out: usize,
    rng: &mut RngStream,
    scheme: Resampling,
) -> Result<Vec<usize>> {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero { t: 0, n: log_weights.len() });
    }
    let mut total = 0.0;
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&lw| {
            let w = (lw - lse).exp();
            total += w;
            w
        })
        .collect();
    Ok(resample_indices(&weights, total, n_out, rng, scheme))
}

/// Importance-weighted average of `values` under log-space weights:
/// `sum_j w_j v_j / sum_j w_j` with `w_j = exp(log_weights[j])`, evaluated
/// stably by normalising through the max.
///
/// Degenerate input (all weights zero, or a non-finite value carrying
/// positive weight) yields `NaN`; the filter's own stepping functions report
/// those conditions as errors instead.
///
/// ```
/// use swarmfilt::sisr::estimate_from_log_weights;
///
/// let lw: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0]
///     .iter()
///     .map(|w| w.ln())
///     .chain([f64::NEG_INFINITY])
///     .collect();
/// let est = estimate_from_log_weights(&lw, &[1.0, 1.0, 2.0, 2.0, 3.0]);
/// assert!((est - 1.7).abs() < 1e-14); // (1 + 2 + 6 + 8 + 0) / 10
/// ```
pub fn estimate_from_log_weights(log_weights: &[f64], values: &[f64]) -> f64 {
    assert_eq!(log_weights.len(), values.len(), "one value per weight");
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return f64::NAN;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&lw, &v) in log_weights.iter().zip(values) {
        let w = (lw - lse).exp();
        if w > 0.0 {
            num += w * v;
            den += w;
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{kalman_run, LgParams};
    use crate::model::FilterFunctional;
    use crate::models::{lg_model, simulate, sv_model};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn mean_x() -> FilterFunctional {
        FilterFunctional::new("x", |_th: &[f64], x: &[f64]| x[0])
    }

    fn ones() -> FilterFunctional {
        FilterFunctional::new("one", |_th: &[f64], _x: &[f64]| 1.0)
    }

    /// A model whose proposal writes a uniform draw and whose weight is a
    /// caller-chosen function of the proposed state — handy for exercising
    /// the weighting/resampling plumbing with controlled weights.
    fn synthetic_model(
        weight: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> ModelSpec {
        let mut m = ModelSpec::bootstrap(
            "synthetic",
            vec![],
            1,
            1,
            |_th, rng, out| out[0] = rng.random::<f64>(),
            |_th, _xp, rng, out| out[0] = rng.random::<f64>(),
            |_th, _x, _rng, out| out[0] = 0.0,
            |_th, _x, _y| 0.0,
        );
        m.log_unnorm_weight = Arc::new(move |_th, _xp, x, _y| weight(x[0]));
        m
    }

    #[test]
    fn constant_functional_is_exactly_one() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(3);
        let (_, ys) = simulate(&model, &theta, 10, &mut root.split(0)).unwrap();
        let run = run_filter(&model, &theta, 64, &ys, &[ones()], &root.split(1)).unwrap();
        for step in &run.estimates {
            assert_eq!(step.weighted[0], 1.0);
            assert_eq!(step.resampled[0], 1.0);
        }
    }

    #[test]
    fn single_particle_filter_degenerates_gracefully() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(5);
        let (cloud, est) =
            init_filter(&model, &theta, 1, &[0.4], &[mean_x()], &root).unwrap();
        // The lone particle is the estimate, before and after resampling.
        assert_eq!(est.weighted[0], cloud.particle(0)[0]);
        assert_eq!(est.resampled[0], cloud.particle(0)[0]);
    }

    #[test]
    fn run_is_a_pure_function_of_its_stream() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(11);
        let (_, ys) = simulate(&model, &theta, 15, &mut root.split(0)).unwrap();
        let a = run_filter(&model, &theta, 50, &ys, &[mean_x()], &root.split(1)).unwrap();
        let b = run_filter(&model, &theta, 50, &ys, &[mean_x()], &root.split(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_observation_run_equals_init() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(13);
        let ys = TimeSeries::from_column(vec![0.7]);
        let run = run_filter(&model, &theta, 40, &ys, &[mean_x()], &root).unwrap();
        let (_, est) = init_filter(&model, &theta, 40, &[0.7], &[mean_x()], &root).unwrap();
        assert_eq!(run.estimates.len(), 1);
        assert_eq!(run.estimates[0], est);
        assert_relative_eq!(run.log_lik, est.log_cond_lik);
    }

    #[test]
    fn cloud_is_uniform_after_every_step() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(17);
        let (mut cloud, _) = init_filter(&model, &theta, 32, &[0.1], &[], &root).unwrap();
        assert!(cloud.log_weights().iter().all(|&w| w == 0.0));
        assert_relative_eq!(cloud.log_weight_sum(), 32.0f64.ln());
        let _ = step_filter(&model, &theta, &mut cloud, &[-0.3], &[], &root).unwrap();
        assert_eq!(cloud.t(), 2);
        assert!(cloud.log_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn linearity_of_the_weighted_estimate() {
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(19);
        let (_, ys) = simulate(&model, &theta, 8, &mut root.split(0)).unwrap();
        let f = FilterFunctional::new("f", |_th: &[f64], x: &[f64]| x[0]);
        let g = FilterFunctional::new("g", |_th: &[f64], x: &[f64]| (x[0] * 0.7).sin());
        let combo = FilterFunctional::new("combo", |_th: &[f64], x: &[f64]| {
            2.5 * x[0] - 1.25 * (x[0] * 0.7).sin()
        });
        let run =
            run_filter(&model, &theta, 128, &ys, &[f, g, combo], &root.split(1)).unwrap();
        for step in &run.estimates {
            let expect = 2.5 * step.weighted[0] - 1.25 * step.weighted[1];
            assert_relative_eq!(step.weighted[2], expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn all_zero_weights_is_an_error_with_time_attached() {
        // Weight is -inf everywhere: the filter must fail at t=1.
        let model = synthetic_model(|_| f64::NEG_INFINITY);
        let err = init_filter(&model, &[], 16, &[0.0], &[], &RngStream::new(1));
        match err {
            Err(Error::AllWeightsZero { t, n }) => {
                assert_eq!(t, 1);
                assert_eq!(n, 16);
            }
            other => panic!("expected AllWeightsZero, got {other:?}"),
        }
        // And at a later step when only the second observation is cursed.
        let model = synthetic_model(|x| if x < 2.0 { 0.0 } else { f64::NEG_INFINITY });
        let (mut cloud, _) = init_filter(&model, &[], 16, &[0.0], &[], &RngStream::new(1)).unwrap();
        // Force state >= 2 via a doctored transition that shifts by +10.
        let mut cursed = model.clone();
        cursed.propose_transition = Arc::new(|_th, _xp, rng, out| {
            out[0] = 10.0 + rng.random::<f64>();
        });
        let err = step_filter(&cursed, &[], &mut cloud, &[0.0], &[], &RngStream::new(1));
        match err {
            Err(Error::AllWeightsZero { t, .. }) => assert_eq!(t, 2),
            other => panic!("expected AllWeightsZero, got {other:?}"),
        }
    }

    #[test]
    fn nan_weight_is_reported_per_particle() {
        let model = synthetic_model(|x| if x > 0.5 { f64::NAN } else { 0.0 });
        let err = init_filter(&model, &[], 64, &[0.0], &[], &RngStream::new(2));
        assert!(matches!(err, Err(Error::InvalidLogWeight { t: 1, .. })));
    }

    #[test]
    fn overflowing_functional_is_reported() {
        let model = synthetic_model(|_| 0.0);
        let explode = FilterFunctional::new("explode", |_th: &[f64], x: &[f64]| {
            if x[0] > 0.5 {
                f64::INFINITY
            } else {
                x[0]
            }
        });
        let err = init_filter(&model, &[], 64, &[0.0], &[explode], &RngStream::new(3));
        match err {
            Err(Error::FunctionalOverflow { name, t }) => {
                assert_eq!(name, "explode");
                assert_eq!(t, 1);
            }
            other => panic!("expected FunctionalOverflow, got {other:?}"),
        }
    }

    #[test]
    fn zero_weight_particles_never_survive_resampling() {
        // Half the particles get zero weight; after resampling none of the
        // surviving states may come from the dead half.
        let model = synthetic_model(|x| if x < 0.5 { 0.0 } else { f64::NEG_INFINITY });
        let (cloud, _) = init_filter(&model, &[], 256, &[0.0], &[], &RngStream::new(4)).unwrap();
        for j in 0..cloud.n_particles() {
            assert!(cloud.particle(j)[0] < 0.5);
        }
    }

    #[test]
    fn dominant_particle_collapses_the_cloud() {
        // One particle carries essentially all weight: every resampled slot
        // must hold it, and the resampled estimate is f at that particle.
        let model = synthetic_model(|x| 1e6 * x);
        let f = mean_x();
        let (cloud, est) = init_filter(&model, &[], 64, &[0.0], &[f], &RngStream::new(5)).unwrap();
        let winner = cloud.particle(0)[0];
        for j in 0..cloud.n_particles() {
            assert_eq!(cloud.particle(j)[0], winner);
        }
        // The resampled estimate is a mean of identical values; equal up to
        // the rounding of the sequential sum.
        assert_relative_eq!(est.resampled[0], winner, epsilon = 1e-14);
    }

    #[test]
    fn weight_shift_leaves_estimates_invariant() {
        // Two synthetic models, identical except the second adds a constant
        // to every log-weight. Normalisation must cancel the shift: the
        // estimates agree to rounding noise and the conditional likelihood
        // factor moves by exactly the shift.
        let levels = |x: f64| (x * 4.0).floor() - 1.0;
        let base = synthetic_model(levels);
        let shifted = synthetic_model(move |x| levels(x) + 0.5);
        let root = RngStream::new(6);
        let ys = TimeSeries::from_column(vec![0.0, 0.0, 0.0]);
        let a = run_filter(&base, &[], 128, &ys, &[mean_x()], &root).unwrap();
        let b = run_filter(&shifted, &[], 128, &ys, &[mean_x()], &root).unwrap();
        for (sa, sb) in a.estimates.iter().zip(&b.estimates) {
            assert_relative_eq!(sa.weighted[0], sb.weighted[0], epsilon = 1e-12);
            assert_relative_eq!(sa.resampled[0], sb.resampled[0], epsilon = 1e-12);
            assert_relative_eq!(sb.log_cond_lik, sa.log_cond_lik + 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_weight_case_through_the_estimate_helper() {
        // Raw weights [1,2,3,4,0] and values [1,1,2,2,3]: estimate 17/10.
        let lw: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0]
            .iter()
            .map(|w| w.ln())
            .chain([f64::NEG_INFINITY])
            .collect();
        let est = estimate_from_log_weights(&lw, &[1.0, 1.0, 2.0, 2.0, 3.0]);
        assert_relative_eq!(est, 1.7, epsilon = 1e-14);
        // Degenerate cases yield NaN.
        assert!(estimate_from_log_weights(&[f64::NEG_INFINITY], &[1.0]).is_nan());
    }

    #[test]
    fn multinomial_point_mass_selects_the_single_survivor() {
        let lw = [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let idx = resample_multinomial(&lw, 50, &mut RngStream::new(7)).unwrap();
        assert!(idx.iter().all(|&i| i == 0));
        let idx = resample_systematic(&lw, 50, &mut RngStream::new(8)).unwrap();
        assert!(idx.iter().all(|&i| i == 0));
    }

    #[test]
    fn resample_single_output_is_in_range() {
        let lw = [0.0, 0.0, 0.0];
        let idx = resample_multinomial(&lw, 1, &mut RngStream::new(9)).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(idx[0] < 3);
    }

    #[test]
    fn resample_all_zero_is_an_error() {
        let lw = [f64::NEG_INFINITY, f64::NEG_INFINITY];
        assert!(matches!(
            resample_multinomial(&lw, 4, &mut RngStream::new(10)),
            Err(Error::AllWeightsZero { .. })
        ));
    }

    #[test]
    fn multinomial_counts_pass_chi_square() {
        // Three categories with weights 1:2:3 over 1e5 draws; the statistic
        // is compared against the chi-square(2) 0.999 quantile from an
        // independent distribution oracle.
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let lw = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
        let n = 100_000usize;
        let idx = resample_multinomial(&lw, n, &mut RngStream::new(11)).unwrap();
        let mut counts = [0.0f64; 3];
        for i in idx {
            counts[i] += 1.0;
        }
        let expected = [n as f64 / 6.0, n as f64 / 3.0, n as f64 / 2.0];
        let stat: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&o, &e)| (o - e) * (o - e) / e)
            .sum();
        let cutoff = ChiSquared::new(2.0).unwrap().inverse_cdf(0.999);
        assert!(stat < cutoff, "chi-square stat {stat} vs cutoff {cutoff}");
    }

    #[test]
    fn systematic_resampling_of_uniform_weights_is_the_identity() {
        let lw = vec![0.0; 10];
        let idx = resample_systematic(&lw, 10, &mut RngStream::new(12)).unwrap();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn systematic_counts_are_within_one_of_expectation() {
        let lw = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
        let n = 60_000usize;
        let idx = resample_systematic(&lw, n, &mut RngStream::new(13)).unwrap();
        let mut counts = [0.0f64; 3];
        for i in idx {
            counts[i] += 1.0;
        }
        let expected = [n as f64 / 6.0, n as f64 / 3.0, n as f64 / 2.0];
        for (o, e) in counts.iter().zip(&expected) {
            assert!((o - e).abs() <= 1.0, "count {o} vs expected {e}");
        }
    }

    #[test]
    fn filter_tracks_kalman_at_time_one() {
        // LG model, first step only: the weighted estimate of x must land
        // within 4 self-assessed standard errors of the exact posterior
        // mean.
        let p = LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1.0, m1: 0.0, p1: 1.0 };
        let theta = p.to_theta();
        let y1 = 1.0;
        let exact = {
            let ys = TimeSeries::from_column(vec![y1]);
            kalman_run(&p, &ys).steps[0].filtered.mean
        };
        let n = 10_000;
        let root = RngStream::new(123);
        let (cloud, est) =
            init_filter(&lg_model(), &theta, n, &[y1], &[mean_x()], &root).unwrap();
        // Self-assessed standard error of a weighted mean (uniform cloud
        // post-resampling, so the plain formula applies to the cached
        // weights pre-reset; recompute from the resampled cloud instead).
        let mean: f64 = (0..n).map(|j| cloud.particle(j)[0]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|j| (cloud.particle(j)[0] - mean).powi(2)).sum::<f64>()
            / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (est.weighted[0] - exact).abs() < 4.0 * se.max(1e-4),
            "estimate {} vs exact {exact} (se {se})",
            est.weighted[0]
        );
    }

    #[test]
    fn likelihood_estimate_is_unbiased_on_lg() {
        // Mean over 100 independent filters of exp(loglik_hat - loglik) must
        // sit within 3 empirical standard errors of 1.
        let p = LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1.0, m1: 0.0, p1: 1.0 };
        let theta = p.to_theta();
        let root = RngStream::new(2024);
        let (_, ys) = simulate(&lg_model(), &theta, 10, &mut root.split(0)).unwrap();
        let exact = kalman_run(&p, &ys).log_lik;
        let reps = 100;
        let ratios: Vec<f64> = (0..reps)
            .map(|r| {
                let run = run_filter(&lg_model(), &theta, 200, &ys, &[], &root.split(1 + r))
                    .unwrap();
                (run.log_lik - exact).exp()
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / reps as f64;
        let var = ratios.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "mean likelihood ratio {mean} (se {se})"
        );
    }

    #[test]
    fn systematic_flag_changes_draws_but_not_the_target() {
        // Same filter under both schemes: estimates differ (different
        // resampling noise) but track the same posterior; here just check
        // both run and the weighted estimates agree (they are computed
        // before resampling from identical mutation streams).
        let model = sv_model();
        let theta = [0.91, 0.5, 1.0];
        let root = RngStream::new(31);
        let (_, ys) = simulate(&model, &theta, 6, &mut root.split(0)).unwrap();
        let a = run_filter_with(
            &model, &theta, 100, &ys, &[mean_x()], &root.split(1), Resampling::Multinomial,
        )
        .unwrap();
        let b = run_filter_with(
            &model, &theta, 100, &ys, &[mean_x()], &root.split(1), Resampling::Systematic,
        )
        .unwrap();
        assert_eq!(a.estimates[0].weighted, b.estimates[0].weighted);
        assert_ne!(a.estimates[1].resampled, b.estimates[1].resampled);
    }
}
