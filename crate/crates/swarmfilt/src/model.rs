//! State-space model abstraction.
//!
//! A state-space model, for the purposes of the filters in this crate, is a
//! bundle of closures over flat `&[f64]` slices: samplers for the state
//! recursion and the observation channel, a proposal used by the filter for
//! mutation, and the log-densities needed to weight proposed particles. The
//! filter never inspects states; it only moves slices around and calls these
//! closures, so models with any state dimension plug in unchanged.
//!
//! Parameters travel as a flat [`ParamVec`] whose layout each model fixes by
//! its `param_names`. Parameter uncertainty is described by a [`PriorSpec`],
//! which pairs the prior density the caller wants to integrate against with
//! the (possibly different) proposal distribution parameters are actually
//! drawn from.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A parameter vector, laid out according to the owning model's
/// [`ModelSpec::param_names`].
pub type ParamVec = Vec<f64>;

/// Samples a state without a predecessor: `(theta, rng, x_out)`.
pub type InitialSampler = Arc<dyn Fn(&[f64], &mut RngStream, &mut [f64]) + Send + Sync>;

/// Samples a state given its predecessor: `(theta, x_prev, rng, x_out)`.
pub type TransitionSampler = Arc<dyn Fn(&[f64], &[f64], &mut RngStream, &mut [f64]) + Send + Sync>;

/// Samples an observation given the current state: `(theta, x, rng, y_out)`.
pub type ObsSampler = Arc<dyn Fn(&[f64], &[f64], &mut RngStream, &mut [f64]) + Send + Sync>;

/// Log observation density: `(theta, x, y) -> ln g(y | x)`.
pub type LogObsDensity = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// Log unnormalised importance weight of a proposed particle:
/// `(theta, x_prev, x, y) -> ln W`, where `x_prev` is empty at the first
/// step. `W` is the observation density times the transition/proposal
/// density ratio, so for a bootstrap proposal it reduces to the observation
/// density alone.
pub type LogWeight = Arc<dyn Fn(&[f64], &[f64], &[f64], &[f64]) -> f64 + Send + Sync>;

/// A state-space model, described operationally.
///
/// `sim_*` closures define the data-generating process (used by
/// [`simulate`](crate::models::simulate) and available to users). `propose_*`
/// closures define the filter's mutation kernel; [`log_unnorm_weight`] must
/// be the density ratio that corrects for the mismatch between proposal and
/// model. The bundled [`bootstrap`](ModelSpec::bootstrap) constructor wires
/// the common case where the proposal *is* the model transition.
///
/// All closures must be pure given their inputs: any randomness must come
/// from the provided [`RngStream`], never from interior state. The filters
/// rely on this for reproducibility and thread-safety.
///
/// [`log_unnorm_weight`]: ModelSpec::log_unnorm_weight
#[derive(Clone)]
pub struct ModelSpec {
    /// Short identifier used in logs and error messages (e.g. `"sv"`).
    pub name: &'static str,
    /// Names of the parameters, fixing the [`ParamVec`] layout.
    pub param_names: Vec<&'static str>,
    /// Dimension of the state vector.
    pub state_dim: usize,
    /// Dimension of one observation.
    pub obs_dim: usize,
    /// Draws the initial state `x_1`.
    pub sim_initial: InitialSampler,
    /// Draws `x_t` given `x_{t-1}`.
    pub sim_transition: TransitionSampler,
    /// Draws `y_t` given `x_t`.
    pub sim_obs: ObsSampler,
    /// Draws the filter's initial proposal.
    pub propose_initial: InitialSampler,
    /// Draws the filter's mutation proposal given the parent particle.
    pub propose_transition: TransitionSampler,
    /// Evaluates `ln g(y_t | x_t)`.
    pub log_obs_density: LogObsDensity,
    /// Evaluates the log unnormalised particle weight.
    pub log_unnorm_weight: LogWeight,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("param_names", &self.param_names)
            .field("state_dim", &self.state_dim)
            .field("obs_dim", &self.obs_dim)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// Builds a bootstrap model: the filter proposes from the model's own
    /// transition kernel, and the unnormalised weight is exactly the
    /// observation density (the transition densities cancel).
    ///
    /// The weight closure aliases the observation-density closure, so the
    /// bootstrap identity `log_unnorm_weight == log_obs_density` holds to the
    /// last bit, not merely up to rounding.
    pub fn bootstrap(
        name: &'static str,
        param_names: Vec<&'static str>,
        state_dim: usize,
        obs_dim: usize,
        sim_initial: impl Fn(&[f64], &mut RngStream, &mut [f64]) + Send + Sync + 'static,
        sim_transition: impl Fn(&[f64], &[f64], &mut RngStream, &mut [f64]) + Send + Sync + 'static,
        sim_obs: impl Fn(&[f64], &[f64], &mut RngStream, &mut [f64]) + Send + Sync + 'static,
        log_obs_density: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let sim_initial: InitialSampler = Arc::new(sim_initial);
        let sim_transition: TransitionSampler = Arc::new(sim_transition);
        let log_obs: LogObsDensity = Arc::new(log_obs_density);
        let weight_obs = log_obs.clone();
        Self {
            name,
            param_names,
            state_dim,
            obs_dim,
            propose_initial: sim_initial.clone(),
            propose_transition: sim_transition.clone(),
            sim_initial,
            sim_transition,
            sim_obs: Arc::new(sim_obs),
            log_obs_density: log_obs,
            log_unnorm_weight: Arc::new(move |theta, _x_prev, x, y| weight_obs(theta, x, y)),
        }
    }

    /// Number of parameters.
    pub fn param_dim(&self) -> usize {
        self.param_names.len()
    }

    /// Position of a named parameter in the [`ParamVec`] layout.
    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|&p| p == name)
    }
}

/// Prior density of a parameter: `theta -> ln pi(theta)`.
pub type LogParamDensity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Parameter proposal sampler: `rng -> theta`.
pub type ParamSampler = Arc<dyn Fn(&mut RngStream) -> ParamVec + Send + Sync>;

/// A prior over parameters, together with the proposal it is importance
/// re-weighted from.
///
/// The swarm integrates against a prior `pi` but draws parameters from a
/// proposal `rho` (a "working prior" — often just `pi` itself, sometimes an
/// earlier posterior sample). Each draw is corrected by the density ratio
/// `d pi / d rho`, carried here in log form along with a declared upper
/// bound; a finite bound on the ratio is what keeps the swarm average well
/// behaved.
///
/// The common constructions are:
///
/// * [`uniform_box`](PriorSpec::uniform_box) — independent uniforms with
///   `rho = pi`, so the ratio is identically 1. A coordinate with `lo == hi`
///   degenerates to a point mass, which samples exactly that point and
///   contributes nothing to the density (the density is taken with respect
///   to Lebesgue measure on the non-degenerate coordinates only).
/// * [`point`](PriorSpec::point) — every coordinate is a point mass.
/// * [`custom`](PriorSpec::custom) — caller-supplied density, sampler, ratio
///   and bound, for working priors that are not uniform boxes.
///
/// ```
/// use swarmfilt::model::PriorSpec;
/// use swarmfilt::rng::RngStream;
///
/// let prior = PriorSpec::uniform_box(vec![(0.5, 0.99), (1.0, 1.0)]);
/// let theta = prior.sample(&mut RngStream::new(1));
/// assert!(theta[0] >= 0.5 && theta[0] < 0.99);
/// assert_eq!(theta[1], 1.0); // point mass
/// assert!((prior.log_pi_density(&theta) - (-(0.49f64).ln())).abs() < 1e-12);
/// // rho = pi: the correction ratio is exactly 1.
/// assert_eq!(prior.log_rn_derivative(&theta), 0.0);
/// ```
#[derive(Clone)]
pub struct PriorSpec {
    dim: usize,
    log_pi_density: LogParamDensity,
    sample_rho: ParamSampler,
    log_rn_derivative: LogParamDensity,
    rn_upper_bound: f64,
}

impl fmt::Debug for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriorSpec")
            .field("dim", &self.dim)
            .field("rn_upper_bound", &self.rn_upper_bound)
            .finish_non_exhaustive()
    }
}

impl PriorSpec {
    /// Builds a box of independent uniforms with the proposal equal to the
    /// prior. Coordinates with `lo == hi` are point masses and consume no
    /// randomness when sampled.
    ///
    /// # Panics
    ///
    /// Panics if any bound is non-finite or `lo > hi`; bounds originating in
    /// user input should be validated before they get here.
    pub fn uniform_box(bounds: Vec<(f64, f64)>) -> Self {
        for &(lo, hi) in &bounds {
            assert!(
                lo.is_finite() && hi.is_finite() && lo <= hi,
                "invalid prior bounds ({lo}, {hi})"
            );
        }
        let dim = bounds.len();
        let log_density = {
            let bounds = bounds.clone();
            move |theta: &[f64]| -> f64 {
                assert_eq!(theta.len(), bounds.len(), "parameter dimension mismatch");
                let mut total = 0.0;
                for (&v, &(lo, hi)) in theta.iter().zip(&bounds) {
                    if hi > lo {
                        if v < lo || v > hi {
                            return f64::NEG_INFINITY;
                        }
                        total -= (hi - lo).ln();
                    } else if v != lo {
                        return f64::NEG_INFINITY;
                    }
                }
                total
            }
        };
        let sampler = move |rng: &mut RngStream| -> ParamVec {
            use rand::Rng;
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    if hi > lo {
                        lo + rng.random::<f64>() * (hi - lo)
                    } else {
                        lo
                    }
                })
                .collect()
        };
        Self {
            dim,
            log_pi_density: Arc::new(log_density),
            sample_rho: Arc::new(sampler),
            log_rn_derivative: Arc::new(|_| 0.0),
            rn_upper_bound: 1.0,
        }
    }

    /// A prior that is a point mass at `theta` in every coordinate.
    pub fn point(theta: &[f64]) -> Self {
        Self::uniform_box(theta.iter().map(|&v| (v, v)).collect())
    }

    /// Full control: an arbitrary prior density, proposal sampler, and
    /// correction ratio. `rn_upper_bound` must dominate
    /// `exp(log_rn_derivative)` on the proposal's support; that is the
    /// caller's promise, checked only empirically by
    /// [`validate_model`].
    ///
    /// # Panics
    ///
    /// Panics if `dim == 0` or the bound is not a positive finite number.
    pub fn custom(
        dim: usize,
        log_pi_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        sample_rho: impl Fn(&mut RngStream) -> ParamVec + Send + Sync + 'static,
        log_rn_derivative: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        rn_upper_bound: f64,
    ) -> Self {
        assert!(dim > 0, "parameter dimension must be positive");
        assert!(
            rn_upper_bound.is_finite() && rn_upper_bound > 0.0,
            "rn_upper_bound must be positive and finite"
        );
        Self {
            dim,
            log_pi_density: Arc::new(log_pi_density),
            sample_rho: Arc::new(sample_rho),
            log_rn_derivative: Arc::new(log_rn_derivative),
            rn_upper_bound,
        }
    }

    /// Number of parameter coordinates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draws one parameter vector from the proposal `rho`.
    pub fn sample(&self, rng: &mut RngStream) -> ParamVec {
        (self.sample_rho)(rng)
    }

    /// Log prior density `ln pi(theta)`; `-inf` outside the support.
    pub fn log_pi_density(&self, theta: &[f64]) -> f64 {
        (self.log_pi_density)(theta)
    }

    /// Log correction ratio `ln (d pi / d rho)(theta)`.
    pub fn log_rn_derivative(&self, theta: &[f64]) -> f64 {
        (self.log_rn_derivative)(theta)
    }

    /// Declared upper bound on `d pi / d rho`.
    pub fn rn_upper_bound(&self) -> f64 {
        self.rn_upper_bound
    }
}

/// A named functional of the state, `f(theta, x)`, whose filtering
/// expectation the filter estimates at every step.
///
/// ```
/// use swarmfilt::model::FilterFunctional;
///
/// let first = FilterFunctional::new("x0", |_theta: &[f64], x: &[f64]| x[0]);
/// assert_eq!(first.name(), "x0");
/// assert_eq!(first.eval(&[], &[2.5]), 2.5);
/// ```
#[derive(Clone)]
pub struct FilterFunctional {
    name: String,
    f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl FilterFunctional {
    /// Wraps a closure `(theta, x) -> value` as a named functional.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// The functional's name, used in error reports and output columns.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Evaluates the functional at a parameter/state pair.
    #[inline]
    pub fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        (self.f)(theta, x)
    }
}

impl fmt::Debug for FilterFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterFunctional")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

/// Restricts a functional to the state ball `max_j |x_j| <= m`, returning 0
/// outside it.
///
/// This is the classical truncation device for heavy-tailed functionals
/// (exponential moments of the state, say): on the region the state process
/// actually visits the functional is untouched, while stray particles far in
/// the tail contribute 0 instead of astronomically large values. The wrapped
/// functional keeps the original name.
///
/// ```
/// use swarmfilt::model::{truncate, FilterFunctional};
///
/// let f2 = FilterFunctional::new("f2", |_th: &[f64], x: &[f64]| x[0].exp());
/// let trunc = truncate(f2, 50.0);
/// assert_eq!(trunc.eval(&[], &[3.0]), 3.0f64.exp()); // |x| <= 50: unchanged
/// assert_eq!(trunc.eval(&[], &[60.0]), 0.0); // |x| > 50: zeroed
/// ```
pub fn truncate(f: FilterFunctional, m: f64) -> FilterFunctional {
    assert!(m > 0.0, "truncation bound must be positive");
    let name = f.name.clone();
    FilterFunctional::new(name, move |theta: &[f64], x: &[f64]| {
        if x.iter().all(|v| v.abs() <= m) {
            f.eval(theta, x)
        } else {
            0.0
        }
    })
}

/// A dense series of fixed-width rows: observations `y_1..y_T` or states
/// `x_1..x_T`, stored flat in row-major order.
///
/// Row indices are zero-based (`row(0)` is the series value at `t = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    dim: usize,
    data: Vec<f64>,
}

impl TimeSeries {
    /// An empty series of `dim`-dimensional rows.
    ///
    /// # Panics
    ///
    /// Panics if `dim == 0`.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "row width must be positive");
        Self { dim, data: Vec::new() }
    }

    /// An empty series with space reserved for `rows` rows.
    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        let mut s = Self::new(dim);
        s.data.reserve(rows * dim);
        s
    }

    /// A one-dimensional series from a plain vector.
    pub fn from_column(values: Vec<f64>) -> Self {
        Self { dim: 1, data: values }
    }

    /// Appends one row.
    ///
    /// # Panics
    ///
    /// Panics if `row.len() != self.dim()`.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "row width mismatch");
        self.data.extend_from_slice(row);
    }

    /// Width of each row.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// True if the series has no rows.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The row at zero-based index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterates over rows in time order.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// The underlying flat storage.
    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// One probe of [`validate_model`]: a `(theta, x, y)` triple pushed through
/// every model callback, with any contract violations recorded.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    /// Index of the probe (also its RNG path index).
    pub probe: usize,
    /// Violations observed on this probe; empty means the probe passed.
    pub violations: Vec<String>,
}

/// Outcome of [`validate_model`]: one record per probe.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    records: Vec<ProbeRecord>,
}

impl ValidationReport {
    /// True if no probe recorded a violation.
    pub fn is_ok(&self) -> bool {
        self.records.iter().all(|r| r.violations.is_empty())
    }

    /// Per-probe records, one per requested probe.
    pub fn records(&self) -> &[ProbeRecord] {
        &self.records
    }

    /// All violations across probes, deduplicated, with probe indices.
    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            for v in &r.violations {
                let msg = format!("probe {}: {}", r.probe, v);
                if !out.contains(&msg) {
                    out.push(msg);
                }
            }
        }
        out
    }

    /// Converts the report into a `Result`, listing violations in the error.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let mut summary: Vec<String> = Vec::new();
            for r in &self.records {
                for v in &r.violations {
                    if !summary.contains(v) {
                        summary.push(v.clone());
                    }
                }
            }
            Err(Error::InvalidModel(summary.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "model ok ({} probes)", self.records.len())
        } else {
            let v = self.violations();
            write!(f, "model failed {} probe checks: {}", v.len(), v.join("; "))
        }
    }
}

/// Probes a model with parameters drawn from the prior's proposal: samplers
/// must fill their buffers with finite values and be pure functions of their
/// stream; densities and weights must never return `NaN` or `+inf`; and the
/// prior's correction ratio must respect its declared upper bound.
///
/// This catches the common wiring mistakes — mismatched dimensions, hidden
/// RNG state, densities evaluated in the wrong argument order, an optimistic
/// `rn_upper_bound` — before they turn into silent bias inside a filter. It
/// is purely diagnostic: it cannot prove the densities *match* the samplers.
/// The exact-oracle tests in this crate show how to check that where a
/// closed form exists.
///
/// # Panics
///
/// Panics if `probe_count == 0`.
pub fn validate_model(
    spec: &ModelSpec,
    prior: &PriorSpec,
    probe_count: usize,
    rng: &RngStream,
) -> ValidationReport {
    assert!(probe_count >= 1, "probe_count must be at least 1");

    let mut records = Vec::with_capacity(probe_count);
    let structural: Vec<String> = [
        (spec.state_dim > 0, "state_dim must be positive"),
        (spec.obs_dim > 0, "obs_dim must be positive"),
        (
            prior.dim() == spec.param_dim(),
            "prior dimension must match param_names",
        ),
    ]
    .iter()
    .filter(|(ok, _)| !ok)
    .map(|(_, msg)| msg.to_string())
    .collect();
    if !structural.is_empty() {
        records.push(ProbeRecord { probe: 0, violations: structural });
        return ValidationReport { records };
    }

    let mut x = vec![0.0; spec.state_dim];
    let mut x_next = vec![0.0; spec.state_dim];
    let mut y = vec![0.0; spec.obs_dim];
    let all_finite = |buf: &[f64]| buf.iter().all(|v| v.is_finite());
    let valid_log = |v: f64| !v.is_nan() && v != f64::INFINITY;

    for probe in 0..probe_count {
        let s = rng.split(probe as u64);
        let mut violations = Vec::new();
        let check = |ok: bool, what: &str, violations: &mut Vec<String>| {
            if !ok {
                violations.push(what.to_string());
            }
        };

        let theta = prior.sample(&mut s.split(0));
        check(theta.len() == spec.param_dim(), "sampled theta has wrong length", &mut violations);
        check(all_finite(&theta), "sampled theta is non-finite", &mut violations);
        let log_rn = prior.log_rn_derivative(&theta);
        check(!log_rn.is_nan(), "log_rn_derivative returned NaN", &mut violations);
        check(
            log_rn <= prior.rn_upper_bound().ln() + 1e-12,
            "log_rn_derivative exceeds the declared rn_upper_bound",
            &mut violations,
        );
        if !violations.is_empty() {
            records.push(ProbeRecord { probe, violations });
            continue;
        }

        // Purity: the same stream must reproduce the same draw.
        (spec.sim_initial)(&theta, &mut s.split(1), &mut x);
        (spec.sim_initial)(&theta, &mut s.split(1), &mut x_next);
        check(x == x_next, "sim_initial is not a pure function of its stream", &mut violations);
        check(all_finite(&x), "sim_initial produced a non-finite state", &mut violations);

        (spec.sim_transition)(&theta, &x, &mut s.split(2), &mut x_next);
        let replay = x_next.clone();
        (spec.sim_transition)(&theta, &x, &mut s.split(2), &mut x_next);
        check(
            replay == x_next,
            "sim_transition is not a pure function of its stream",
            &mut violations,
        );
        check(all_finite(&x_next), "sim_transition produced a non-finite state", &mut violations);

        (spec.sim_obs)(&theta, &x_next, &mut s.split(3), &mut y);
        check(all_finite(&y), "sim_obs produced a non-finite observation", &mut violations);

        (spec.propose_initial)(&theta, &mut s.split(4), &mut x);
        check(all_finite(&x), "propose_initial produced a non-finite state", &mut violations);
        (spec.propose_transition)(&theta, &x, &mut s.split(5), &mut x_next);
        check(
            all_finite(&x_next),
            "propose_transition produced a non-finite state",
            &mut violations,
        );

        let g = (spec.log_obs_density)(&theta, &x_next, &y);
        check(valid_log(g), "log_obs_density returned NaN or +inf", &mut violations);
        let w1 = (spec.log_unnorm_weight)(&theta, &[], &x, &y);
        check(
            valid_log(w1),
            "log_unnorm_weight returned NaN or +inf at the initial step",
            &mut violations,
        );
        let wt = (spec.log_unnorm_weight)(&theta, &x, &x_next, &y);
        check(valid_log(wt), "log_unnorm_weight returned NaN or +inf", &mut violations);

        records.push(ProbeRecord { probe, violations });
    }

    ValidationReport { records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_log_pdf;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn toy_model() -> ModelSpec {
        ModelSpec::bootstrap(
            "toy",
            vec!["loc"],
            1,
            1,
            |theta, rng, out| {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = theta[0] + z;
            },
            |theta, x_prev, rng, out| {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = 0.5 * x_prev[0] + theta[0] + z;
            },
            |_theta, x, rng, out| {
                let z: f64 = rng.sample(StandardNormal);
                out[0] = x[0] + z;
            },
            |_theta, x, y| normal_log_pdf(y[0], x[0], 1.0),
        )
    }

    fn toy_prior() -> PriorSpec {
        PriorSpec::uniform_box(vec![(-0.5, 0.5)])
    }

    #[test]
    fn bootstrap_weight_is_bitwise_obs_density() {
        let m = toy_model();
        let theta = [0.3];
        let mut rng = RngStream::new(5);
        let mut x = [0.0];
        (m.sim_initial)(&theta, &mut rng, &mut x);
        for y in [-2.0, 0.0, 0.17, 3.5] {
            let g = (m.log_obs_density)(&theta, &x, &[y]);
            let w = (m.log_unnorm_weight)(&theta, &[], &x, &[y]);
            let wt = (m.log_unnorm_weight)(&theta, &[9.9], &x, &[y]);
            assert_eq!(g.to_bits(), w.to_bits());
            assert_eq!(g.to_bits(), wt.to_bits());
        }
    }

    #[test]
    fn toy_model_validates() {
        let report = validate_model(&toy_model(), &toy_prior(), 100, &RngStream::new(7));
        assert!(report.is_ok(), "{report}");
        assert_eq!(report.records().len(), 100);
        assert!(report.into_result().is_ok());
    }

    #[test]
    fn single_probe_yields_single_record() {
        let report = validate_model(&toy_model(), &toy_prior(), 1, &RngStream::new(7));
        assert_eq!(report.records().len(), 1);
        assert_eq!(report.records()[0].probe, 0);
    }

    #[test]
    fn validation_catches_impure_sampler() {
        let mut m = toy_model();
        // A sampler that ignores its stream and leaks global state.
        let counter = std::sync::atomic::AtomicU64::new(0);
        m.sim_initial = Arc::new(move |_theta, _rng, out| {
            out[0] = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) as f64;
        });
        let report = validate_model(&m, &toy_prior(), 8, &RngStream::new(7));
        assert!(!report.is_ok());
        assert!(
            report.violations().iter().any(|f| f.contains("pure")),
            "{report}"
        );
        assert!(report.into_result().is_err());
    }

    #[test]
    fn validation_catches_infinite_weight() {
        let mut m = toy_model();
        m.log_unnorm_weight = Arc::new(|_, _, _, _| f64::INFINITY);
        let report = validate_model(&m, &toy_prior(), 4, &RngStream::new(7));
        assert!(!report.is_ok());
        assert!(report.violations().iter().any(|f| f.contains("log_unnorm_weight")));
    }

    #[test]
    fn validation_catches_nan_density() {
        let mut m = toy_model();
        m.log_obs_density = Arc::new(|_, _, _| f64::NAN);
        let report = validate_model(&m, &toy_prior(), 4, &RngStream::new(7));
        assert!(!report.is_ok());
        assert!(report.violations().iter().any(|f| f.contains("log_obs_density")));
    }

    #[test]
    fn validation_catches_overclaimed_rn_bound() {
        // A proposal narrower than the prior it claims to dominate: the true
        // ratio is 2 on half the box, but the bound promises 1.5.
        let prior = PriorSpec::custom(
            1,
            |theta| if (0.0..=1.0).contains(&theta[0]) { 0.0 } else { f64::NEG_INFINITY },
            |rng| {
                use rand::Rng;
                vec![rng.random::<f64>() * 0.5]
            },
            |_theta| 2.0f64.ln(),
            1.5,
        );
        let report = validate_model(&toy_model(), &prior, 4, &RngStream::new(7));
        assert!(!report.is_ok());
        assert!(report.violations().iter().any(|f| f.contains("rn_upper_bound")));
    }

    #[test]
    fn validation_catches_bad_dims() {
        let mut m = toy_model();
        m.state_dim = 0;
        let report = validate_model(&m, &toy_prior(), 4, &RngStream::new(7));
        assert!(!report.is_ok());
    }

    #[test]
    fn prior_point_mass_convention() {
        let p = PriorSpec::uniform_box(vec![(0.5, 0.99), (1.0, 1.0)]);
        assert_eq!(p.dim(), 2);
        // In-box density only counts the non-degenerate coordinate.
        assert!((p.log_pi_density(&[0.7, 1.0]) - (-(0.49f64).ln())).abs() < 1e-12);
        // Outside the box, or off the point, density is zero.
        assert_eq!(p.log_pi_density(&[0.2, 1.0]), f64::NEG_INFINITY);
        assert_eq!(p.log_pi_density(&[0.7, 1.5]), f64::NEG_INFINITY);

        let point = PriorSpec::point(&[0.91, 0.5]);
        assert_eq!(point.log_pi_density(&[0.91, 0.5]), 0.0);
        assert_eq!(point.sample(&mut RngStream::new(3)), vec![0.91, 0.5]);
        assert_eq!(point.log_rn_derivative(&[0.91, 0.5]), 0.0);
    }

    #[test]
    fn prior_samples_fill_the_box() {
        let p = PriorSpec::uniform_box(vec![(-1.0, 3.0)]);
        let mut rng = RngStream::new(11);
        let n = 20_000;
        let mut mean = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for _ in 0..n {
            let v = p.sample(&mut rng)[0];
            assert!((-1.0..3.0).contains(&v));
            mean += v / n as f64;
            min = min.min(v);
            max = max.max(v);
        }
        // Mean 1.0 with se = 4/sqrt(12 n) ~ 0.008; range should be covered.
        assert!((mean - 1.0).abs() < 0.05);
        assert!(min < -0.99 && max > 2.99);
    }

    #[test]
    fn uniform_box_rn_derivative_is_identically_zero() {
        let p = PriorSpec::uniform_box(vec![(0.0, 1.0), (2.0, 5.0)]);
        let mut rng = RngStream::new(9);
        for _ in 0..100 {
            let theta = p.sample(&mut rng);
            assert_eq!(p.log_rn_derivative(&theta), 0.0);
        }
        assert_eq!(p.rn_upper_bound(), 1.0);
    }

    #[test]
    #[should_panic(expected = "invalid prior bounds")]
    fn prior_rejects_inverted_bounds() {
        let _ = PriorSpec::uniform_box(vec![(1.0, 0.0)]);
    }

    #[test]
    fn truncate_is_an_indicator_on_the_state() {
        let f2 = truncate(
            FilterFunctional::new("f2", |_th: &[f64], x: &[f64]| x[0].exp()),
            50.0,
        );
        assert_eq!(f2.name(), "f2");
        // Inside the ball the functional is untouched, even where it is huge.
        assert_eq!(f2.eval(&[], &[49.0]), 49.0f64.exp());
        assert_eq!(f2.eval(&[], &[0.0]), 1.0);
        // Outside it is exactly zero, not clamped.
        assert_eq!(f2.eval(&[], &[50.5]), 0.0);
        assert_eq!(f2.eval(&[], &[-50.5]), 0.0);
    }

    #[test]
    fn time_series_layout() {
        let mut ts = TimeSeries::with_capacity(2, 3);
        assert!(ts.is_empty());
        ts.push_row(&[1.0, 2.0]);
        ts.push_row(&[3.0, 4.0]);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.row(1), &[3.0, 4.0]);
        assert_eq!(ts.rows().count(), 2);
        assert_eq!(ts.values(), &[1.0, 2.0, 3.0, 4.0]);

        let col = TimeSeries::from_column(vec![5.0, 6.0]);
        assert_eq!(col.dim(), 1);
        assert_eq!(col.row(0), &[5.0]);
    }
}
