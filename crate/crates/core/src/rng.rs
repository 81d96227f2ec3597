//! Counter-based random streams for reproducible parallel sampling.
//!
//! Every stream is a pure function of `(master_seed, stream_id, counter)`,
//! so an ensemble sliced across any number of workers produces the same
//! numbers as a sequential run. The mixer is the splitmix64 finalizer.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One decorrelated stream. Cheap to construct; holds only the derived
/// key, a counter, and a cached spare normal draw.
#[derive(Debug, Clone)]
pub struct CounterStream {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl CounterStream {
    /// Stream `stream_id` of the family identified by `master_seed`.
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(master_seed).wrapping_add(GOLDEN) ^ mix64(stream_id.wrapping_mul(GOLDEN).wrapping_add(1)));
        Self {
            key,
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw in the half-open interval (0, 1].
    pub fn uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller; pairs are generated together and
    /// the second is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_normal = Some(mag * s);
        mag * c
    }
}
