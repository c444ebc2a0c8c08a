//! Seedable counter-based random streams and deterministic parallel drivers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

pub const ALGORITHM: &str = "chacha20";

/// Samples per parallel work unit. Each chunk owns a split stream, so results do
/// not depend on the number of threads.
pub const CHUNK: usize = 2048;

/// A ChaCha20 keystream addressed by `(seed, stream, counter)`.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomStream { seed, stream, rng }
    }

    /// An independent child stream: same key, a distinct nonce derived from the
    /// parent's nonce and `index`, counter reset to zero.
    pub fn split(&self, index: u64) -> Self {
        Self::with_stream(
            self.seed,
            splitmix(self.stream ^ splitmix(index.wrapping_add(1))),
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn set_counter(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }

    /// Uniform on `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        self.rng.random_range(0..bound)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// 53 uniform bits, so that `k / 2^53` is uniform on a dyadic grid of `[0, 1)`.
    pub fn bits53(&mut self) -> u64 {
        self.rng.next_u64() >> 11
    }

    pub fn to_json(&self) -> Value {
        json!({
            "algorithm": ALGORITHM,
            "seed": self.seed,
            "stream": self.stream,
            "counter": self.counter().to_string(),
        })
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Runs `f` for `count` draws split into chunks of [`CHUNK`], chunk `c` using
/// `stream.split(c)`, and concatenates the results in chunk order.
pub fn par_draws<T, F>(stream: &RandomStream, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RandomStream) -> T + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rs = stream.split(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| f(&mut rs)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}
