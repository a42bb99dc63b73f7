//! Seeded, splittable sources of Gaussian randomness.
//!
//! Every Monte Carlo particle draws from its own ChaCha8 stream keyed by
//! `(seed, index)`, so results do not depend on how particles are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Anything that hands out standard normal variates.
pub trait NormalSource {
    fn next_normal(&mut self) -> f64;

    fn fill_normals(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_normal();
        }
    }
}

/// A counter-based stream: ChaCha8 seeded from `seed`, stream id `index`.
#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl Stream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Stream(rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

impl NormalSource for Stream {
    #[inline]
    fn next_normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

/// Stub source returning zeros; useful to switch noise off.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroSource;

impl NormalSource for ZeroSource {
    fn next_normal(&mut self) -> f64 {
        0.0
    }
}

/// Family of streams sharing one root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamFamily {
    seed: u64,
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        StreamFamily { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, index: u64) -> Stream {
        Stream::new(self.seed, index)
    }

    /// Independent family for another purpose (initial samples, a second
    /// estimator, ...). The tag is mixed into the seed with splitmix64.
    pub fn split(&self, tag: u64) -> StreamFamily {
        StreamFamily {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
