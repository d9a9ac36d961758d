//! Error type shared across the filtering APIs.

/// Errors produced by filters, swarms, and model plumbing.
///
/// Weight degeneracy gets dedicated variants because callers react to it
/// differently: a single filter treats it as fatal, while a swarm may be
/// configured to drop the offending member and carry on.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is structurally invalid (zero particle counts,
    /// mismatched dimensions, malformed prior boxes, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A model failed validation probes.
    #[error("model validation failed: {0}")]
    InvalidModel(String),

    /// Simulation produced a non-finite state or observation.
    #[error("simulation produced a non-finite value at t={t}")]
    NonFiniteSimulation { t: usize },

    /// Every one of the `n` particle weights underflowed to zero at step `t`:
    /// the filter has lost track of the state and its output is no longer
    /// meaningful.
    #[error("all {n} particle weights vanished at t={t}")]
    AllWeightsZero { t: usize, n: usize },

    /// A log-weight came back `NaN` or `+inf`; `-inf` (zero weight) is legal,
    /// anything else indicates a broken density.
    #[error("log-weight of particle {particle} at t={t} is not a valid log-density")]
    InvalidLogWeight { t: usize, particle: usize },

    /// A functional evaluated to a non-finite value on a particle that
    /// carries positive weight, so the estimate itself would be non-finite.
    #[error("functional '{name}' overflowed on a positively weighted particle at t={t}")]
    FunctionalOverflow { name: String, t: usize },

    /// One swarm member lost all its particles (see
    /// [`AllWeightsZero`](Error::AllWeightsZero)) and the swarm is configured
    /// to abort in that case. Carries the member's parameter draw, since a
    /// weight collapse is usually the fault of a particular corner of the
    /// prior box.
    #[error(
        "swarm filter {filter} (parameters {theta:?}) died at t={t}: \
         all particle weights vanished"
    )]
    DeadFilter {
        filter: usize,
        t: usize,
        theta: Vec<f64>,
    },

    /// Every member of the swarm has died; no estimate can be formed even
    /// under the drop policy.
    #[error("all swarm filters are dead at t={t}")]
    AllFiltersDead { t: usize },

    /// A second-moment estimate fell below the squared mean estimate, so the
    /// implied predictive variance is negative (a Monte Carlo noise artifact
    /// near-degenerate cases can produce).
    #[error(
        "negative variance estimate: second moment {second_moment} < squared mean of {mean}"
    )]
    NegativeVarianceEstimate { mean: f64, second_moment: f64 },
}

/// Result alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;
