//! Seeded random streams.
//!
//! Every random quantity is drawn from its own ChaCha8 stream. The key is the
//! root seed and the 64-bit stream id is a hash of `(domain, a, b, c)`, for
//! example `(Domain::AccessChannel, trial, k, m)`. Results therefore do not
//! depend on the order in which work items are scheduled.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    UserDrop = 1,
    Symbols = 2,
    AccessChannel = 3,
    UxnbNoise = 4,
    HapsNoise = 5,
    Reemission = 6,
    DropSeed = 7,
    Test = 99,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit id for a `(domain, a, b, c)` tuple.
pub fn stream_id(domain: Domain, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(domain as u64);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.rotate_left(21));
    splitmix64(h ^ c.rotate_left(42))
}

pub fn stream(seed: u64, domain: Domain, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, a, b, c));
    rng
}

/// Child seed for an independent work item (e.g. one random drop).
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    splitmix64(seed ^ stream_id(domain, index, 0, 0))
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}
