//! Numerical primitives shared by the filtering code.
//!
//! Everything probabilistic in this crate travels in log space; these helpers
//! are the few places where exponentials are allowed to happen. They are
//! written to be safe at the extremes the filters actually produce: weight
//! vectors whose elements range over hundreds of orders of magnitude, and
//! likelihood averages where a single term dominates the rest.

/// ln(2*pi), used by Gaussian densities.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log of a sum of exponentials, `ln(sum_i exp(x[i]))`, computed without
/// overflow by factoring out the maximum.
///
/// Conventions at the edges: an empty slice and a slice of all `-inf` both
/// return `-inf` (the log of an empty/zero sum). `NaN` inputs propagate.
///
/// ```
/// use swarmfilt::numerics::log_sum_exp;
///
/// let x = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
/// assert!((log_sum_exp(&x) - 6.0f64.ln()).abs() < 1e-12);
/// // A tiny term cannot underflow the result...
/// assert_eq!(log_sum_exp(&[-1e300, 0.0]), 0.0);
/// // ...and an empty sum is zero.
/// assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
/// ```
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x.is_nan() {
            return f64::NAN;
        }
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        // Empty, or every term is exp(-inf) = 0.
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Streaming compensated summation (Kahan–Babuška–Neumaier).
///
/// Tracks a running correction term so that catastrophic cancellation between
/// large intermediate values does not destroy small contributions. Unlike
/// plain Kahan summation, the Neumaier variant also survives the case where
/// an addend is larger than the running sum:
///
/// ```
/// use swarmfilt::numerics::KahanSum;
///
/// let mut acc = KahanSum::new();
/// for x in [1.0, 1e100, 1.0, -1e100] {
///     acc.add(x);
/// }
/// assert_eq!(acc.total(), 2.0); // a naive loop returns 0.0
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    /// An empty sum.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// The compensated total.
    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of a slice; see [`KahanSum`].
pub fn kahan_sum(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.total()
}

/// Log-density of a scalar Gaussian with the given mean and variance.
///
/// `var` must be strictly positive; a non-positive variance yields `-inf`
/// (a point the model gives zero probability) rather than a `NaN`, which is
/// the useful convention when parameters come from the edge of a prior box.
///
/// ```
/// use swarmfilt::numerics::normal_log_pdf;
///
/// assert!((normal_log_pdf(0.0, 0.0, 1.0) - (-0.9189385332046727)).abs() < 1e-15);
/// ```
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}
