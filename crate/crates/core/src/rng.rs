//! Deterministic random-number streams.
//!
//! Every randomized operation in this crate takes an [`RngStream`] — a
//! `(seed, stream_id)` pair — instead of a live generator. The pair fully
//! determines the draw sequence, so any run can be replayed bit-for-bit from
//! its logged seed. Streams are split counter-style: a parent stream derives
//! child streams by mixing tag words into its `stream_id`, so concurrent
//! trials never share a generator and the result of a run does not depend on
//! execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used to spread tag words over the full 64-bit
/// stream-id space so sibling streams are decorrelated.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifier for a reproducible stream of random draws.
///
/// The same `(seed, stream_id)` always yields the same generator. Derive
/// distinct child streams with [`RngStream::substream`] or
/// [`RngStream::fork`]; never hand the same stream to two concurrent tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Instantiate the generator for this stream. Calling twice returns
    /// generators that produce identical draw sequences.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream for tag `child`. Children of the same parent with
    /// different tags are distinct; the derivation is a pure function of
    /// `(seed, stream_id, child)`.
    pub fn substream(&self, child: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(child.wrapping_add(1))),
        }
    }

    /// Fold a path of tag words into a child stream. Equivalent to chained
    /// [`RngStream::substream`] calls; convenient for indexing trials as
    /// `fork(&[eps_idx, alg_idx, trial, purpose])`.
    pub fn fork(&self, tags: &[u64]) -> RngStream {
        let mut s = *self;
        for &t in tags {
            s = s.substream(t);
        }
        s
    }
}
