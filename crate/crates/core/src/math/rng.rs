/// Seeded PRNG with xoshiro256** semantics.
///
/// The algorithm is fixed here (no external crate) so the exact draw
/// sequence is part of the engine's contract: the same seed yields the
/// same bits on every platform. State is seeded by running splitmix64
/// over the seed, per the xoshiro authors' recommendation.
///
/// Every stochastic choice in the engine (weight init, dataset split,
/// epoch shuffles, negative-label draws) uses a child stream derived from
/// one root seed via [`SeededRng::derive_stream`]; derivation mixes the
/// stream id into the seed through splitmix64, so streams are independent
/// and adding draws to one stream never perturbs another.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        SeededRng { state }
    }

    /// Child generator for an independent named stream of the same root
    /// seed. `stream` values used by the engine are the `STREAM_*`
    /// constants in this module, with the epoch index mixed in for
    /// per-epoch streams.
    pub fn derive_stream(root_seed: u64, stream: u64) -> Self {
        let mut sm = root_seed;
        let a = splitmix64(&mut sm);
        let mut sm2 = stream ^ 0xa0761d6478bd642f;
        let b = splitmix64(&mut sm2);
        SeededRng::new(a ^ b.rotate_left(17))
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n), unbiased via rejection.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller. Each call consumes exactly two
    /// uniform draws; the second Box-Muller output is discarded to keep
    /// the draw count per call fixed.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

// Stream ids for the engine's stochastic choices.
pub const STREAM_INIT: u64 = 1;
pub const STREAM_SPLIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_NEGATIVE: u64 = 4;
pub const STREAM_FIXTURE: u64 = 5;

/// Per-epoch stream id, so resuming at epoch k replays the exact shuffle
/// and negative draws an uninterrupted run would have used.
pub fn epoch_stream(base: u64, epoch: usize) -> u64 {
    (base << 32) | epoch as u64
}
