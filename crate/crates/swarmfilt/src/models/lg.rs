//! A scalar linear-Gaussian state-space model.
//!
//! ```text
//! x_1 ~ N(m1, p1),   x_t = a x_{t-1} + e_t,  e_t ~ N(0, q)
//! y_t = c x_t + v_t,  v_t ~ N(0, r)
//! ```
//!
//! with parameters `theta = [a, q, c, r, m1, p1]`. The model exists to be
//! exactly solvable: every filtering quantity the particle machinery
//! estimates here can be checked against the [`kalman`](crate::kalman)
//! module. All six parameters travel in `theta` (rather than being baked
//! into the closures) so that the swarm can place priors on any of them;
//! [`LgParams`](crate::kalman::LgParams) converts to and from the flat
//! layout.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{FilterFunctional, ModelSpec};
use crate::numerics::normal_log_pdf;

/// Builds the linear-Gaussian model as a bootstrap [`ModelSpec`].
///
/// Variance parameters must be nonnegative; a zero variance degenerates the
/// corresponding draw to its mean.
///
/// ```
/// use swarmfilt::models::lg_model;
///
/// let model = lg_model();
/// let theta = [0.9, 1.0, 1.0, 1.0, 0.0, 1.0]; // a, q, c, r, m1, p1
/// let lp = (model.log_obs_density)(&theta, &[0.0], &[0.0]);
/// assert!((lp - (-0.9189385332046727)).abs() < 1e-15); // N(0; 0, 1)
/// ```
pub fn lg_model() -> ModelSpec {
    ModelSpec::bootstrap(
        "lg",
        vec!["a", "q", "c", "r", "m1", "p1"],
        1,
        1,
        |theta, rng, out| {
            let (m1, p1) = (theta[4], theta[5]);
            let z: f64 = rng.sample(StandardNormal);
            out[0] = m1 + p1.sqrt() * z;
        },
        |theta, x_prev, rng, out| {
            let (a, q) = (theta[0], theta[1]);
            let z: f64 = rng.sample(StandardNormal);
            out[0] = a * x_prev[0] + q.sqrt() * z;
        },
        |theta, x, rng, out| {
            let (c, r) = (theta[2], theta[3]);
            let z: f64 = rng.sample(StandardNormal);
            out[0] = c * x[0] + r.sqrt() * z;
        },
        |theta, x, y| normal_log_pdf(y[0], theta[2] * x[0], theta[3]),
    )
}

/// One-step-ahead forecast mean of the observation,
/// `E[y_{t+1} | x_t] = c a x_t`.
pub fn lg_f1() -> FilterFunctional {
    FilterFunctional::new("f1", |theta: &[f64], x: &[f64]| theta[2] * theta[0] * x[0])
}

/// One-step-ahead forecast second moment of the observation,
/// `E[y_{t+1}^2 | x_t] = (c a x_t)^2 + c^2 q + r`.
pub fn lg_f2() -> FilterFunctional {
    FilterFunctional::new("f2", |theta: &[f64], x: &[f64]| {
        let (a, q, c, r) = (theta[0], theta[1], theta[2], theta[3]);
        let mean = c * a * x[0];
        mean * mean + c * c * q + r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{kalman_forecast_obs, KalmanState, LgParams};
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    const THETA: [f64; 6] = [0.9, 1.0, 1.0, 1.0, 0.0, 1.0];

    #[test]
    fn obs_density_is_gaussian_in_the_obs() {
        let model = lg_model();
        let theta = [0.9, 1.0, 2.0, 0.5, 0.0, 1.0];
        for (x, y) in [(0.0, 0.0), (1.0, 2.3), (-0.7, -1.0)] {
            let got = (model.log_obs_density)(&theta, &[x], &[y]);
            assert_relative_eq!(got, normal_log_pdf(y, 2.0 * x, 0.5), max_relative = 1e-15);
        }
    }

    #[test]
    fn forecast_functionals_match_kalman_predictive_at_a_point() {
        // For a point belief (var = 0) at x, the Kalman observation forecast
        // moments coincide with the functional values: mean c a x and
        // variance c^2 q + r.
        let p = LgParams::from_theta(&THETA);
        for x in [-1.5, 0.0, 2.0] {
            let (mean, var) = kalman_forecast_obs(KalmanState { mean: x, var: 0.0 }, &p);
            assert_relative_eq!(lg_f1().eval(&THETA, &[x]), mean, max_relative = 1e-14);
            assert_relative_eq!(
                lg_f2().eval(&THETA, &[x]),
                mean * mean + var,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn transition_mean_and_spread() {
        let model = lg_model();
        let mut rng = RngStream::new(21);
        let mut x = [0.0];
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            (model.sim_transition)(&THETA, &[2.0], &mut rng, &mut x);
            sum += x[0];
            sum_sq += x[0] * x[0];
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        // E = a * 2 = 1.8 (se 0.003), Var = q = 1 (se 0.0045).
        assert!((mean - 1.8).abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }
}
