//! Counter-based splittable random number streams.
//!
//! Monte Carlo experiments in this crate are organised as trees of work:
//! a swarm owns filters, a filter owns time steps, a time step owns particle
//! mutations and one resampling pass. Every node in that tree gets its own
//! [`RngStream`], derived from its parent by [`RngStream::split`] with the
//! node's index. Because a stream's output is a pure function of its key, its
//! split path, and a draw counter — and never of *when* or *on which thread*
//! it is consumed — results are reproducible bit for bit regardless of
//! scheduling, and remain stable when unrelated parts of a program change how
//! much randomness they consume.
//!
//! The generator is a SplitMix64 variant: each draw hashes
//! `state + counter * gamma` through a 64-bit finaliser, where `gamma` is a
//! per-stream odd increment derived at split time (the same construction as
//! Java's `SplittableRandom`). `split` does not consume draws from the parent,
//! so `s.split(i)` is a pure function of `(s, i)` and siblings
//! `s.split(0), s.split(1), ...` are mutually independent for practical
//! purposes.
//!
//! ```
//! use swarmfilt::rng::RngStream;
//! use rand::Rng;
//!
//! let root = RngStream::new(11);
//! // Splitting is pure: the same path always yields the same stream.
//! let mut a = root.split(3);
//! let mut b = root.split(3);
//! assert_eq!(a.random::<u64>(), b.random::<u64>());
//! // Siblings differ.
//! assert_ne!(root.split(0).random::<u64>(), root.split(1).random::<u64>());
//! ```

use rand::RngCore;

/// Odd constant used as the default sequence increment (2^64 / golden ratio).
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Domain constant folded into root keys so that `RngStream::new(k)` and
/// `stream.split(k)` never coincide by accident (first 64 bits of pi).
const ROOT_DOMAIN: u64 = 0x243f_6a88_85a3_08d3;

/// Stafford's "Mix13" variant of the SplitMix64 finaliser: a bijective,
/// avalanching 64-bit hash.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a per-stream increment: odd, and with enough bit transitions that
/// the low bits of successive `state + n * gamma` values change irregularly.
#[inline]
fn mix_gamma(z: u64) -> u64 {
    let g = mix64(z) | 1;
    if (g ^ (g >> 1)).count_ones() < 24 {
        g ^ 0xaaaa_aaaa_aaaa_aaaa
    } else {
        g
    }
}

/// A splittable, counter-based random stream.
///
/// The stream's identity is its `state`/`gamma` pair; the draw position is the
/// `counter`. Draw `n` of a stream is `mix64(state + (n+1) * gamma)`, so
/// output depends only on `(identity, n)`. Cloning a stream replays it.
///
/// Streams implement [`rand::RngCore`], so the full `rand` / `rand_distr`
/// ecosystem works on top of them:
///
/// ```
/// use swarmfilt::rng::RngStream;
/// use rand_distr::{Distribution, StandardNormal};
///
/// let mut s = RngStream::new(1).split(4).split(2);
/// let z: f64 = StandardNormal.sample(&mut s);
/// assert!(z.is_finite());
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
    gamma: u64,
    counter: u64,
}

impl RngStream {
    /// Creates the root stream for a user-facing seed key.
    pub fn new(key: u64) -> Self {
        let state = mix64(key ^ ROOT_DOMAIN);
        Self {
            state,
            gamma: mix_gamma(state.wrapping_add(GOLDEN_GAMMA)),
            counter: 0,
        }
    }

    /// Returns the child stream at `index`.
    ///
    /// Pure in `(self's identity, index)`: it ignores and does not disturb the
    /// draw counter, so a parent may be split before, after, or between its
    /// own draws with identical results.
    #[must_use]
    pub fn split(&self, index: u64) -> Self {
        let state = mix64(self.state ^ mix64(index.wrapping_add(GOLDEN_GAMMA)));
        Self {
            state,
            gamma: mix_gamma(state.wrapping_add(GOLDEN_GAMMA)),
            counter: 0,
        }
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }
}

/// Derives an independent root key, for seeding a child experiment (e.g. one
/// replicate of a study) that itself wants to build a whole stream tree from
/// a plain `u64` seed.
pub fn derive_key(key: u64, index: u64) -> u64 {
    RngStream::new(key).split(index).state
}

impl RngCore for RngStream {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.state.wrapping_add(self.counter.wrapping_mul(self.gamma)))
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
