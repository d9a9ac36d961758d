//! The Taylor stochastic volatility model.
//!
//! Log-volatility follows a stationary AR(1) and scales the observation
//! noise:
//!
//! ```text
//! x_1 ~ N(0, sigma^2 / (1 - phi^2))
//! x_t = phi x_{t-1} + sigma w_t,   w_t ~ N(0, 1)
//! y_t = beta exp(x_t / 2) e_t,     e_t ~ N(0, 1)
//! ```
//!
//! with parameters `theta = [phi, beta, sigma]`. The initial state is drawn
//! from the stationary law of the AR(1), so the state process starts in
//! equilibrium.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{FilterFunctional, ModelSpec, ParamVec};
use crate::numerics::LN_2PI;

/// Parameters of the stochastic volatility model, in `ParamVec` order
/// `[phi, beta, sigma]`.
///
/// `phi` must satisfy `|phi| < 1` for the stationary initial law to exist;
/// `sigma` must be positive; `beta >= 0` scales the observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvParams {
    /// AR coefficient of the log-volatility.
    pub phi: f64,
    /// Volatility scale of the observations.
    pub beta: f64,
    /// Standard deviation of the state noise.
    pub sigma: f64,
}

impl SvParams {
    /// Reads parameters from the flat layout `[phi, beta, sigma]`.
    ///
    /// # Panics
    ///
    /// Panics if `theta` does not have exactly three entries.
    pub fn from_theta(theta: &[f64]) -> Self {
        assert_eq!(theta.len(), 3, "stochastic volatility theta must be [phi, beta, sigma]");
        Self { phi: theta[0], beta: theta[1], sigma: theta[2] }
    }

    /// Writes the parameters back to the flat layout.
    pub fn to_theta(&self) -> ParamVec {
        vec![self.phi, self.beta, self.sigma]
    }
}

/// Builds the stochastic volatility model as a bootstrap [`ModelSpec`].
///
/// The observation log-density is evaluated in the algebraically reduced
/// form `-(ln 2pi + ln beta^2 + x + y^2 e^{-x} / beta^2) / 2`, which stays
/// finite-by-construction even where `beta^2 exp(x)` would underflow; a
/// variance that is exactly zero (possible only at `beta = 0`) yields `-inf`
/// — a zero-weight particle — rather than `NaN`.
///
/// ```
/// use swarmfilt::models::sv_model;
///
/// let model = sv_model();
/// let lp = (model.log_obs_density)(&[0.91, 0.5, 1.0], &[0.0], &[0.0]);
/// // N(0; 0, 0.25): -ln(2 pi * 0.25) / 2.
/// assert!((lp - (-0.22579135264472741)).abs() < 1e-12);
/// ```
pub fn sv_model() -> ModelSpec {
    ModelSpec::bootstrap(
        "sv",
        vec!["phi", "beta", "sigma"],
        1,
        1,
        |theta, rng, out| {
            let (phi, sigma) = (theta[0], theta[2]);
            let z: f64 = rng.sample(StandardNormal);
            out[0] = sigma / (1.0 - phi * phi).sqrt() * z;
        },
        |theta, x_prev, rng, out| {
            let (phi, sigma) = (theta[0], theta[2]);
            let z: f64 = rng.sample(StandardNormal);
            out[0] = phi * x_prev[0] + sigma * z;
        },
        |theta, x, rng, out| {
            let beta = theta[1];
            let z: f64 = rng.sample(StandardNormal);
            out[0] = beta * (0.5 * x[0]).exp() * z;
        },
        |theta, x, y| {
            let beta2 = theta[1] * theta[1];
            if beta2 == 0.0 {
                return f64::NEG_INFINITY;
            }
            -0.5 * (LN_2PI + beta2.ln() + x[0] + y[0] * y[0] * (-x[0]).exp() / beta2)
        },
    )
}

/// One-step-ahead forecast mean of the observation: identically zero, since
/// the observation noise is centred whatever the volatility does.
pub fn sv_f1() -> FilterFunctional {
    FilterFunctional::new("f1", |_theta: &[f64], _x: &[f64]| 0.0)
}

/// One-step-ahead forecast second moment of the observation,
/// `E[y_{t+1}^2 | x_t] = beta^2 exp(phi x_t + sigma^2 / 2)`.
///
/// The value overflows to `+inf` for extreme states; the filter reports that
/// as a [`FunctionalOverflow`](crate::Error::FunctionalOverflow) if such a
/// particle carries positive weight. Callers worried about heavy tails can
/// wrap the functional in [`truncate`](crate::model::truncate).
pub fn sv_f2() -> FilterFunctional {
    FilterFunctional::new("f2", |theta: &[f64], x: &[f64]| {
        let (phi, beta, sigma) = (theta[0], theta[1], theta[2]);
        beta * beta * (phi * x[0] + 0.5 * sigma * sigma).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_log_pdf;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;

    const REF_THETA: [f64; 3] = [0.91, 0.5, 1.0];

    #[test]
    fn obs_density_matches_plain_gaussian() {
        let model = sv_model();
        for (x, y) in [(0.0f64, 0.0f64), (1.3, -0.4), (-2.0, 0.9), (4.0, 2.0)] {
            let var = 0.25 * x.exp();
            let expect = normal_log_pdf(y, 0.0, var);
            let got = (model.log_obs_density)(&REF_THETA, &[x], &[y]);
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
        // The worked value at the origin.
        let got = (model.log_obs_density)(&REF_THETA, &[0.0], &[0.0]);
        assert_relative_eq!(got, -0.5 * (2.0 * std::f64::consts::PI * 0.25).ln());
    }

    #[test]
    fn obs_density_is_never_nan_at_the_edges() {
        let model = sv_model();
        // beta = 0 (the edge of the study's prior box).
        let lp = (model.log_obs_density)(&[0.91, 0.0, 1.0], &[0.5], &[0.3]);
        assert_eq!(lp, f64::NEG_INFINITY);
        // State so negative that the variance underflows.
        let lp = (model.log_obs_density)(&REF_THETA, &[-800.0], &[0.3]);
        assert_eq!(lp, f64::NEG_INFINITY);
        // State so positive that exp(x) overflows: density tends to 0 from
        // the 0.5 * x term, never to NaN.
        let lp = (model.log_obs_density)(&REF_THETA, &[1e6], &[0.3]);
        assert!(lp.is_finite() || lp == f64::NEG_INFINITY);
        assert!(!lp.is_nan());
    }

    #[test]
    fn initial_state_variance_is_stationary() {
        // sigma^2 / (1 - phi^2) at the reference parameters is 5.8173; check
        // the sampler empirically against it.
        let model = sv_model();
        let mut rng = RngStream::new(8);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut x = [0.0];
        for _ in 0..n {
            (model.sim_initial)(&REF_THETA, &mut rng, &mut x);
            sum += x[0];
            sum_sq += x[0] * x[0];
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let expect = 1.0 / (1.0 - 0.91 * 0.91);
        assert_relative_eq!(expect, 5.8173, max_relative = 1e-4);
        // se(var) ~ expect * sqrt(2/n) ~ 0.018; allow 5 se.
        assert!((var - expect).abs() < 0.1, "sample variance {var} vs {expect}");
    }

    #[test]
    fn forecast_functionals_match_their_formulas() {
        let f1 = sv_f1();
        let f2 = sv_f2();
        for x in [-3.0, 0.0, 2.0] {
            assert_eq!(f1.eval(&REF_THETA, &[x]), 0.0);
            let expect = 0.25 * (0.91 * x + 0.5).exp();
            assert_relative_eq!(f2.eval(&REF_THETA, &[x]), expect, max_relative = 1e-14);
        }
        // Worked values at the reference parameters.
        assert_relative_eq!(
            f2.eval(&REF_THETA, &[0.0]),
            0.25 * 0.5f64.exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            f2.eval(&REF_THETA, &[2.0]),
            0.25 * 2.32f64.exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn f2_is_positive_where_finite() {
        let f2 = sv_f2();
        let mut rng = RngStream::new(4);
        use rand::Rng;
        for _ in 0..1000 {
            let x = (rng.random::<f64>() - 0.5) * 40.0;
            let v = f2.eval(&REF_THETA, &[x]);
            if v.is_finite() {
                assert!(v > 0.0);
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let p = SvParams::from_theta(&REF_THETA);
        assert_eq!(p.to_theta(), REF_THETA.to_vec());
        assert_eq!(p.phi, 0.91);
        assert_eq!(p.beta, 0.5);
        assert_eq!(p.sigma, 1.0);
    }
}
