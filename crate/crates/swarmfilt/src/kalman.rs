//! Exact filtering for the scalar linear-Gaussian model.
//!
//! The model is
//!
//! ```text
//! x_1 ~ N(m1, p1),   x_t = a x_{t-1} + e_t,  e_t ~ N(0, q)
//! y_t = c x_t + v_t,  v_t ~ N(0, r)
//! ```
//!
//! for which the filtering distributions and the likelihood have closed
//! forms. This module is kept deliberately free of any Monte Carlo machinery:
//! it shares no code with [`sisr`](crate::sisr) or [`swarm`](crate::swarm),
//! so it can serve as an independent oracle when testing them. Its own
//! correctness is pinned in tests against brute-force grid quadrature of the
//! filtering recursion.
//!
//! Time convention: `(m1, p1)` is the *predictive* distribution of `x_1`
//! before any data, so the first step is an update alone
//! ([`kalman_update`]), and each later step predicts from the previous
//! filtered belief and then updates ([`kalman_step`]). [`kalman_run`] wires
//! this for a whole series.

use crate::model::{ParamVec, TimeSeries};
use crate::numerics::normal_log_pdf;

/// Parameters of the scalar linear-Gaussian model, in the `ParamVec` order
/// `[a, q, c, r, m1, p1]` used by [`lg_model`](crate::models::lg_model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgParams {
    /// State transition coefficient.
    pub a: f64,
    /// State noise variance.
    pub q: f64,
    /// Observation coefficient.
    pub c: f64,
    /// Observation noise variance.
    pub r: f64,
    /// Mean of the initial state.
    pub m1: f64,
    /// Variance of the initial state.
    pub p1: f64,
}

impl LgParams {
    /// Reads parameters from the flat layout `[a, q, c, r, m1, p1]`.
    ///
    /// # Panics
    ///
    /// Panics if `theta` does not have exactly six entries.
    pub fn from_theta(theta: &[f64]) -> Self {
        assert_eq!(theta.len(), 6, "linear-Gaussian theta must be [a, q, c, r, m1, p1]");
        Self {
            a: theta[0],
            q: theta[1],
            c: theta[2],
            r: theta[3],
            m1: theta[4],
            p1: theta[5],
        }
    }

    /// Writes the parameters back to the flat layout.
    pub fn to_theta(&self) -> ParamVec {
        vec![self.a, self.q, self.c, self.r, self.m1, self.p1]
    }
}

/// A Gaussian state belief, `x ~ N(mean, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    /// Mean of the belief.
    pub mean: f64,
    /// Variance of the belief.
    pub var: f64,
}

/// Everything the filter knows after processing one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanStep {
    /// Time index, starting at 1.
    pub t: usize,
    /// Predictive belief about `x_t` before seeing `y_t`.
    pub predicted: KalmanState,
    /// Filtered belief about `x_t` after seeing `y_t`.
    pub filtered: KalmanState,
    /// `ln p(y_t | y_1..y_{t-1})`.
    pub log_cond_lik: f64,
}

/// A full filtering pass over a series.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanRun {
    /// Per-step beliefs and conditional likelihoods.
    pub steps: Vec<KalmanStep>,
    /// Total log-likelihood, the sum of the per-step terms.
    pub log_lik: f64,
}

/// Conditions a predictive belief on one observation.
///
/// Returns the filtered belief and `ln p(y | predictive)`. This is the whole
/// first step of a run, since the prior `(m1, p1)` *is* the predictive for
/// `t = 1`.
///
/// ```
/// use swarmfilt::kalman::{kalman_update, KalmanState, LgParams};
///
/// let p = LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1.0, m1: 0.0, p1: 1.0 };
/// let prior = KalmanState { mean: p.m1, var: p.p1 };
/// let (post, _ll) = kalman_update(prior, &p, 1.0);
/// // With c = 1 the posterior mean is y * p1/(p1+r).
/// assert!((post.mean - 0.5).abs() < 1e-15);
/// assert!((post.var - 0.5).abs() < 1e-15);
/// ```
pub fn kalman_update(predicted: KalmanState, p: &LgParams, y: f64) -> (KalmanState, f64) {
    let innovation_var = p.c * p.c * predicted.var + p.r;
    let log_cond_lik = normal_log_pdf(y, p.c * predicted.mean, innovation_var);
    let gain = predicted.var * p.c / innovation_var;
    let filtered = KalmanState {
        mean: predicted.mean + gain * (y - p.c * predicted.mean),
        var: (1.0 - gain * p.c) * predicted.var,
    };
    (filtered, log_cond_lik)
}

/// Propagates a filtered belief about `x_t` to the predictive for `x_{t+1}`.
pub fn kalman_predict(filtered: KalmanState, p: &LgParams) -> KalmanState {
    KalmanState {
        mean: p.a * filtered.mean,
        var: p.a * p.a * filtered.var + p.q,
    }
}

/// One full predict-update cycle: from the filtered belief about `x_{t-1}`
/// to the filtered belief about `x_t`, given `y_t`.
///
/// Returns the new belief and the conditional log-likelihood increment.
pub fn kalman_step(p: &LgParams, filtered_prev: KalmanState, y: f64) -> (KalmanState, f64) {
    kalman_update(kalman_predict(filtered_prev, p), p, y)
}

/// Predictive mean and variance of the next observation `y_{t+1}` given the
/// filtered belief about `x_t`.
pub fn kalman_forecast_obs(filtered: KalmanState, p: &LgParams) -> (f64, f64) {
    let next = kalman_predict(filtered, p);
    (p.c * next.mean, p.c * p.c * next.var + p.r)
}

/// Runs the filter over a scalar series: an update at `t = 1` from the prior
/// predictive, then predict-update cycles.
///
/// # Panics
///
/// Panics if the series is not one-dimensional.
pub fn kalman_run(p: &LgParams, ys: &TimeSeries) -> KalmanRun {
    assert_eq!(ys.dim(), 1, "the linear-Gaussian model is scalar");
    let mut predicted = KalmanState { mean: p.m1, var: p.p1 };
    let mut steps = Vec::with_capacity(ys.len());
    let mut log_lik = 0.0;
    for (i, row) in ys.rows().enumerate() {
        let (filtered, log_cond_lik) = kalman_update(predicted, p, row[0]);
        steps.push(KalmanStep {
            t: i + 1,
            predicted,
            filtered,
            log_cond_lik,
        });
        log_lik += log_cond_lik;
        predicted = kalman_predict(filtered, p);
    }
    KalmanRun { steps, log_lik }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn test_params() -> LgParams {
        LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1.0, m1: 0.3, p1: 2.0 }
    }

    fn simulate_lg(p: &LgParams, t_max: usize, seed: u64) -> TimeSeries {
        let mut rng = RngStream::new(seed);
        let mut draw = |mean: f64, var: f64| -> f64 {
            let z: f64 = rng.sample(StandardNormal);
            mean + var.sqrt() * z
        };
        let mut ys = TimeSeries::with_capacity(1, t_max);
        let mut x = draw(p.m1, p.p1);
        ys.push_row(&[draw(p.c * x, p.r)]);
        for _ in 1..t_max {
            x = draw(p.a * x, p.q);
            ys.push_row(&[draw(p.c * x, p.r)]);
        }
        ys
    }

    #[test]
    fn first_update_matches_conjugate_posterior() {
        // Gaussian prior N(m1, p1), likelihood N(y; c x, r): the posterior
        // follows from completing the square. Worked by hand for
        // m1=0.3, p1=2, c=1, r=1, y=1.7:
        //   posterior var  = 1/(1/2 + 1/1)      = 2/3
        //   posterior mean = (0.3/2 + 1.7/1)*2/3 = 37/30
        let p = test_params();
        let (filtered, ll) = kalman_update(KalmanState { mean: p.m1, var: p.p1 }, &p, 1.7);
        assert_relative_eq!(filtered.var, 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(filtered.mean, 37.0 / 30.0, max_relative = 1e-14);
        // Marginal of y_1 is N(c m1, c^2 p1 + r) = N(0.3, 3).
        assert_relative_eq!(ll, normal_log_pdf(1.7, 0.3, 3.0), max_relative = 1e-14);
    }

    #[test]
    fn textbook_one_step_update() {
        // a=0.9, q=1, c=1, r=1, m1=0, p1=1, y=1: posterior mean
        // p1/(p1+r) * y = 0.5, posterior var = 0.5.
        let p = LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1.0, m1: 0.0, p1: 1.0 };
        let (filtered, _) = kalman_update(KalmanState { mean: p.m1, var: p.p1 }, &p, 1.0);
        assert_relative_eq!(filtered.mean, 0.5, max_relative = 1e-15);
        assert_relative_eq!(filtered.var, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn zero_observation_coefficient_gives_zero_gain() {
        // c=0: the observation carries no information, so the posterior is
        // the predictive and the likelihood term is N(y; 0, r).
        let p = LgParams { a: 0.9, q: 1.0, c: 0.0, r: 1.3, m1: 0.0, p1: 1.0 };
        let prev = KalmanState { mean: 0.7, var: 0.4 };
        let (next, ll) = kalman_step(&p, prev, 2.2);
        let predicted = kalman_predict(prev, &p);
        assert_eq!(next, predicted);
        assert_relative_eq!(ll, normal_log_pdf(2.2, 0.0, 1.3), max_relative = 1e-15);
    }

    #[test]
    fn exact_observation_limit() {
        // r -> 0 with c=1: the update pins the state to the observation.
        let p = LgParams { a: 0.9, q: 1.0, c: 1.0, r: 1e-12, m1: 0.0, p1: 1.0 };
        let (next, _) = kalman_step(&p, KalmanState { mean: 0.0, var: 1.0 }, 3.4);
        assert!((next.mean - 3.4).abs() < 1e-6);
        assert!(next.var < 1e-6);
    }

    #[test]
    fn predict_propagates_moments() {
        let p = test_params();
        let next = kalman_predict(KalmanState { mean: 2.0, var: 0.5 }, &p);
        assert_relative_eq!(next.mean, 1.8, max_relative = 1e-15);
        assert_relative_eq!(next.var, 0.81 * 0.5 + 1.0, max_relative = 1e-15);
        let (fy, fv) = kalman_forecast_obs(KalmanState { mean: 2.0, var: 0.5 }, &p);
        assert_relative_eq!(fy, 1.8, max_relative = 1e-15);
        assert_relative_eq!(fv, 1.405 + 1.0, max_relative = 1e-15);
    }

    #[test]
    fn run_accumulates_conditional_likelihoods() {
        let p = test_params();
        let ys = simulate_lg(&p, 40, 31);
        let run = kalman_run(&p, &ys);
        assert_eq!(run.steps.len(), 40);
        let total: f64 = run.steps.iter().map(|s| s.log_cond_lik).sum();
        assert_relative_eq!(run.log_lik, total, max_relative = 1e-14);
        // The first predictive is the prior.
        assert_eq!(run.steps[0].predicted, KalmanState { mean: p.m1, var: p.p1 });
        // Updating shrinks the variance at every step, and both stay positive.
        for s in &run.steps {
            assert!(s.filtered.var < s.predicted.var);
            assert!(s.filtered.var > 0.0);
        }
    }

    #[test]
    fn two_step_likelihood_matches_joint_gaussian() {
        // For T=2 the data are jointly Gaussian with moments that can be
        // written down directly:
        //   y1 ~ N(c m1, c^2 p1 + r)
        //   y2 | y1 from the bivariate normal with
        //     cov(y1, y2) = c^2 a p1, var(y2) = c^2 (a^2 p1 + q) + r.
        let p = test_params();
        let (y1, y2) = (1.1, -0.4);
        let mut ys = TimeSeries::new(1);
        ys.push_row(&[y1]);
        ys.push_row(&[y2]);
        let run = kalman_run(&p, &ys);

        let v1 = p.c * p.c * p.p1 + p.r;
        let cov = p.c * p.c * p.a * p.p1;
        let v2 = p.c * p.c * (p.a * p.a * p.p1 + p.q) + p.r;
        let mu1 = p.c * p.m1;
        let mu2 = p.c * p.a * p.m1;
        let cond_mean = mu2 + cov / v1 * (y1 - mu1);
        let cond_var = v2 - cov * cov / v1;
        let expect = normal_log_pdf(y1, mu1, v1) + normal_log_pdf(y2, cond_mean, cond_var);
        assert_relative_eq!(run.log_lik, expect, max_relative = 1e-13);
    }

    #[test]
    fn sign_symmetry_of_the_likelihood() {
        // Flipping y -> -y together with c -> -c leaves the likelihood
        // unchanged (the Gaussian innovation density is even).
        let p = test_params();
        let ys = simulate_lg(&p, 30, 123);
        let flipped = TimeSeries::from_column(ys.values().iter().map(|v| -v).collect());
        let mut p_neg = p;
        p_neg.c = -p.c;
        let run = kalman_run(&p, &ys);
        let run_neg = kalman_run(&p_neg, &flipped);
        assert_relative_eq!(run.log_lik, run_neg.log_lik, max_relative = 1e-13);
    }

    /// Brute-force oracle: filter the same data by numerically integrating
    /// the Bayes recursion on a dense grid, with no Kalman algebra involved.
    ///
    /// Each predictive density is mixed explicitly from the previous
    /// posterior's grid weights, so the only shared ingredient is the
    /// Gaussian pdf itself. A 2000-point grid spanning +-10 predictive
    /// standard deviations holds the discretisation error far below the
    /// 1e-4 comparison tolerance.
    #[test]
    fn grid_quadrature_oracle_agrees() {
        let p = test_params();
        let t_max = 20;
        let ys = simulate_lg(&p, t_max, 77);
        let run = kalman_run(&p, &ys);

        let n_grid = 2000;
        let span = 10.0;
        let grid_points = |center: f64, sd: f64| -> (Vec<f64>, f64) {
            let lo = center - span * sd;
            let h = 2.0 * span * sd / n_grid as f64;
            ((0..n_grid).map(|i| lo + (i as f64 + 0.5) * h).collect(), h)
        };

        // Predictive density values for x_1 on the prior's grid.
        let (mut grid, mut h) = grid_points(p.m1, p.p1.sqrt());
        let mut pred: Vec<f64> =
            grid.iter().map(|&x| normal_log_pdf(x, p.m1, p.p1).exp()).collect();
        let mut log_lik_grid = 0.0;

        for (i, row) in ys.rows().enumerate() {
            let y = row[0];
            // Update: unnormalised posterior on the grid.
            let joint: Vec<f64> = grid
                .iter()
                .zip(&pred)
                .map(|(&x, &pd)| pd * normal_log_pdf(y, p.c * x, p.r).exp())
                .collect();
            let mass: f64 = joint.iter().sum::<f64>() * h;
            log_lik_grid += mass.ln();
            let weights: Vec<f64> = joint.iter().map(|&j| j * h / mass).collect();
            let mean: f64 = grid.iter().zip(&weights).map(|(&x, &w)| x * w).sum();
            let var: f64 =
                grid.iter().zip(&weights).map(|(&x, &w)| w * (x - mean) * (x - mean)).sum();

            let step = &run.steps[i];
            assert!(
                (mean - step.filtered.mean).abs() < 1e-4,
                "t={}: grid mean {mean} vs kalman {}",
                i + 1,
                step.filtered.mean
            );
            assert!(
                (var - step.filtered.var).abs() < 1e-4,
                "t={}: grid var {var} vs kalman {}",
                i + 1,
                step.filtered.var
            );

            // Propagate: next predictive mixed directly from the posterior.
            let center = p.a * mean;
            let sd = (p.a * p.a * var + p.q).sqrt();
            let (next_grid, next_h) = grid_points(center, sd);
            let norm = 1.0 / (2.0 * std::f64::consts::PI * p.q).sqrt();
            let inv_2q = 1.0 / (2.0 * p.q);
            let old_grid = std::mem::replace(&mut grid, next_grid);
            h = next_h;
            pred = grid
                .iter()
                .map(|&xn| {
                    let mut acc = 0.0;
                    for (&xo, &w) in old_grid.iter().zip(&weights) {
                        let d = xn - p.a * xo;
                        acc += w * (-d * d * inv_2q).exp();
                    }
                    acc * norm
                })
                .collect();
        }

        assert!(
            (run.log_lik - log_lik_grid).abs() < 1e-4,
            "log-lik: kalman {} vs grid {log_lik_grid}",
            run.log_lik
        );
    }

    #[test]
    fn theta_round_trip() {
        let p = test_params();
        assert_eq!(LgParams::from_theta(&p.to_theta()), p);
    }
}
