//! Ready-made state-space models and forward simulation.
//!
//! Two models ship with the crate:
//!
//! * [`sv_model`] — the Taylor stochastic volatility model, the working
//!   example for swarm filtering of financial returns;
//! * [`lg_model`] — a scalar linear-Gaussian model whose only purpose is to
//!   make the exact [`kalman`](crate::kalman) oracle applicable, so Monte
//!   Carlo output can be tested against closed forms.
//!
//! Both are bootstrap models: the filter proposes from the model transition
//! and weights by the observation density.

mod lg;
mod sv;

pub use lg::{lg_f1, lg_f2, lg_model};
pub use sv::{sv_f1, sv_f2, sv_model, SvParams};

pub use crate::kalman::LgParams;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, TimeSeries};
use crate::rng::RngStream;

/// Simulates `t_max` steps of states and observations under the generative
/// model (never the proposal), consuming draws sequentially from `rng`.
///
/// Returns `(states, observations)`, both of length `t_max`. The simulation
/// is a pure function of `(spec, theta, t_max, rng)`: the same stream
/// reproduces the same series bit for bit.
///
/// ```
/// use swarmfilt::models::{simulate, sv_model};
/// use swarmfilt::rng::RngStream;
///
/// let model = sv_model();
/// let theta = [0.91, 0.5, 1.0];
/// let (xs, ys) = simulate(&model, &theta, 5, &mut RngStream::new(3)).unwrap();
/// assert_eq!(xs.len(), 5);
/// assert_eq!(ys.len(), 5);
/// let (xs2, _) = simulate(&model, &theta, 5, &mut RngStream::new(3)).unwrap();
/// assert_eq!(xs, xs2);
/// ```
pub fn simulate(
    spec: &ModelSpec,
    theta: &[f64],
    t_max: usize,
    rng: &mut RngStream,
) -> Result<(TimeSeries, TimeSeries)> {
    if t_max == 0 {
        return Err(Error::InvalidConfig("simulation length must be at least 1".into()));
    }
    let mut states = TimeSeries::with_capacity(spec.state_dim, t_max);
    let mut obs = TimeSeries::with_capacity(spec.obs_dim, t_max);
    let mut x = vec![0.0; spec.state_dim];
    let mut y = vec![0.0; spec.obs_dim];
    for t in 1..=t_max {
        if t == 1 {
            (spec.sim_initial)(theta, rng, &mut x);
        } else {
            let x_prev = x.clone();
            (spec.sim_transition)(theta, &x_prev, rng, &mut x);
        }
        (spec.sim_obs)(theta, &x, rng, &mut y);
        if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteSimulation { t });
        }
        states.push_row(&x);
        obs.push_row(&y);
    }
    Ok((states, obs))
}
