//! Sequential Monte Carlo with parameter swarms.
//!
//! This crate implements a sequential importance sampling / resampling (SISR)
//! particle filter over pluggable state-space models, and a *swarm* layer that
//! averages many independent filters — one per parameter draw — to integrate
//! parameter uncertainty into filtering, forecasting, and marginal-likelihood
//! estimates.
//!
//! The pieces fit together like this:
//!
//! * [`model`] describes a state-space model as a set of closures: state
//!   simulation, proposal simulation, and log-densities. Models are opaque to
//!   the filter; only dimensions and densities matter.
//! * [`models`] ships two ready-made models: a scalar linear-Gaussian model
//!   (exactly solvable, used as a test oracle) and the Taylor stochastic
//!   volatility model.
//! * [`sisr`] runs one particle filter for one fixed parameter vector and
//!   reports weighted (pre-resampling) and unweighted (post-resampling)
//!   estimates of state functionals together with conditional likelihoods.
//! * [`swarm`] runs many filters at parameters drawn from a working prior and
//!   combines their outputs by importance reweighting to the model prior.
//! * [`kalman`] is the exact filter for the linear-Gaussian model, kept
//!   deliberately independent of the Monte Carlo code so it can serve as an
//!   oracle in tests.
//! * [`rng`] provides counter-based splittable random streams so that every
//!   particle, filter, and time step owns a statistically independent stream
//!   addressed by path — which makes parallel runs reproducible bit for bit.
//!
//! All probability computations are carried out in log space: model callbacks
//! return log-densities, importance weights live as log-weights until they are
//! normalised through [`numerics::log_sum_exp`], and likelihoods accumulate as
//! sums of logs.
//!
//! # Quick start
//!
//! Simulate a short stochastic volatility series and filter it with a swarm:
//!
//! ```
//! use swarmfilt::model::{FilterFunctional, PriorSpec};
//! use swarmfilt::models::{simulate, sv_model};
//! use swarmfilt::rng::RngStream;
//! use swarmfilt::swarm::{run_swarm, SwarmConfig};
//!
//! let theta = vec![0.91, 0.5, 1.0]; // phi, beta, sigma
//! let model = sv_model();
//! let rng = RngStream::new(7);
//! let (_states, obs) = simulate(&model, &theta, 50, &mut rng.split(0)).unwrap();
//!
//! // Filter under parameter uncertainty in the persistence phi.
//! let prior = PriorSpec::uniform_box(vec![(0.85, 0.95), (0.5, 0.5), (1.0, 1.0)]);
//! let mut cfg = SwarmConfig::new(20, 100, 42);
//! cfg.functionals = vec![FilterFunctional::new("mean_x", |_th: &[f64], x: &[f64]| x[0])];
//! cfg.report_marginal_likelihood = true;
//!
//! let out = run_swarm(&model, &prior, &cfg, &obs).unwrap();
//! assert_eq!(out.estimates.len(), 50);
//! assert!(out.estimates[49].log_marginal_lik.unwrap().is_finite());
//! ```

pub mod error;
pub mod kalman;
pub mod model;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod sisr;
pub mod swarm;

pub use error::{Error, Result};
