//! Property tests for the numeric and sampling kernels.
//!
//! These complement the example-based unit tests with randomized checks of
//! the algebraic invariants the filter relies on: stability identities of
//! `log_sum_exp`, convexity of importance-weighted estimates, range and
//! support guarantees of the resamplers, and purity of stream splitting.

use proptest::prelude::*;
use rand::Rng;
use swarmfilt::numerics::{kahan_sum, log_sum_exp, normal_log_pdf};
use swarmfilt::rng::{derive_key, RngStream};
use swarmfilt::sisr::{estimate_from_log_weights, resample_multinomial, resample_systematic};

/// Strategy for a non-empty vector of moderate finite floats.
fn finite_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..64)
}

/// Strategy for log-weights where each cell is either finite or `-inf`
/// (a zero-probability cell), with at least one finite entry.
fn log_weights_with_holes() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![3 => (-30.0f64..5.0).boxed(), 1 => Just(f64::NEG_INFINITY).boxed()],
        1..64,
    )
    .prop_filter("at least one positive weight", |ws| {
        ws.iter().any(|w| w.is_finite())
    })
}

proptest! {
    /// `log_sum_exp` of finite inputs is bracketed by `max` and
    /// `max + ln n`, the tight bounds for sums of positives.
    #[test]
    fn log_sum_exp_is_bracketed_by_max(xs in finite_vec()) {
        let lse = log_sum_exp(&xs);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lse >= max - 1e-12);
        prop_assert!(lse <= max + (xs.len() as f64).ln() + 1e-12);
    }

    /// Adding a constant to every log-weight shifts `log_sum_exp` by that
    /// constant: the identity that makes unnormalised log-weights usable.
    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in finite_vec(), c in -40.0f64..40.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let lhs = log_sum_exp(&shifted);
        let rhs = log_sum_exp(&xs) + c;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    /// A weighted average lies in the convex hull of the values, and
    /// zero-probability cells do not pull it outside the hull of the
    /// positively weighted ones.
    #[test]
    fn weighted_estimate_stays_in_the_convex_hull(
        (lw, values) in log_weights_with_holes().prop_flat_map(|lw| {
            let n = lw.len();
            (Just(lw), prop::collection::vec(-100.0f64..100.0, n..=n))
        }),
    ) {
        let est = estimate_from_log_weights(&lw, &values);
        let supported: Vec<f64> = lw
            .iter()
            .zip(&values)
            .filter(|(w, _)| w.is_finite())
            .map(|(_, &v)| v)
            .collect();
        let lo = supported.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = supported.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est >= lo - 1e-9);
        prop_assert!(est <= hi + 1e-9);
    }

    /// Both resamplers return exactly `n_out` indices, every index is in
    /// range, and `-inf` (zero-weight) cells are never selected.
    #[test]
    fn resamplers_respect_the_support(
        lw in log_weights_with_holes(),
        n_out in 1usize..256,
        seed in any::<u64>(),
        systematic in any::<bool>(),
    ) {
        let mut rng = RngStream::new(seed);
        let indices = if systematic {
            resample_systematic(&lw, n_out, &mut rng).unwrap()
        } else {
            resample_multinomial(&lw, n_out, &mut rng).unwrap()
        };
        prop_assert_eq!(indices.len(), n_out);
        for &j in &indices {
            prop_assert!(j < lw.len());
            prop_assert!(lw[j].is_finite(), "selected a zero-weight cell");
        }
    }

    /// Systematic resampling with equal weights keeps per-cell counts
    /// within one of the exact proportional share.
    #[test]
    fn systematic_resampling_is_balanced_under_equal_weights(
        n_cells in 1usize..32,
        per_cell in 1usize..16,
        seed in any::<u64>(),
    ) {
        let lw = vec![0.0; n_cells];
        let n_out = n_cells * per_cell;
        let mut rng = RngStream::new(seed);
        let indices = resample_systematic(&lw, n_out, &mut rng).unwrap();
        let mut counts = vec![0usize; n_cells];
        for &j in &indices {
            counts[j] += 1;
        }
        for &c in &counts {
            prop_assert!(c.abs_diff(per_cell) <= 1);
        }
    }

    /// Compensated summation agrees with plain summation to within a
    /// tolerance set by the naive method's own error bound.
    #[test]
    fn kahan_sum_matches_naive_summation(xs in finite_vec()) {
        let naive: f64 = xs.iter().sum();
        let compensated = kahan_sum(&xs);
        let scale: f64 = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!((compensated - naive).abs() <= 1e-10 * scale);
    }

    /// The normal log-density is symmetric about its mean and maximised
    /// there.
    #[test]
    fn normal_log_pdf_is_symmetric_and_peaked(
        mean in -20.0f64..20.0,
        var in 0.01f64..25.0,
        d in 0.0f64..30.0,
    ) {
        let up = normal_log_pdf(mean + d, mean, var);
        let down = normal_log_pdf(mean - d, mean, var);
        let peak = normal_log_pdf(mean, mean, var);
        prop_assert!((up - down).abs() <= 1e-9 * (1.0 + up.abs()));
        prop_assert!(up <= peak + 1e-12);
    }

    /// `split(i)` depends only on the parent's identity and the index:
    /// drawing from the parent first must not change the child, and equal
    /// parents yield equal children.
    #[test]
    fn stream_splitting_is_pure(seed in any::<u64>(), index in any::<u64>(), draws in 0usize..8) {
        let mut parent = RngStream::new(seed);
        let mut child_before = parent.split(index);
        for _ in 0..draws {
            let _ = parent.random::<u64>();
        }
        let mut child_after = parent.split(index);
        prop_assert_eq!(child_before.random::<u64>(), child_after.random::<u64>());
    }

    /// Distinct indices yield distinct children and distinct derived keys:
    /// the state update is a composition of bijections, so this holds
    /// exactly, not just with high probability.
    #[test]
    fn splitting_and_key_derivation_are_injective_in_the_index(
        seed in any::<u64>(),
        i in any::<u64>(),
        j in any::<u64>(),
    ) {
        prop_assume!(i != j);
        let root = RngStream::new(seed);
        prop_assert_ne!(root.split(i), root.split(j));
        prop_assert_ne!(derive_key(seed, i), derive_key(seed, j));
    }
}
