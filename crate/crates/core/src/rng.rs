//! Labelled, seeded random streams.
//!
//! Every consumer draws from its own ChaCha20 stream keyed by
//! `SHA-256(seed ‖ label)`, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Independent generator for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha20Rng::from_seed(digest)
}

/// Draws a circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: rand::Rng>(rng: &mut R, var: f64) -> crate::numerics::C64 {
    use rand_distr::{Distribution, StandardNormal};
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    crate::numerics::C64::new(s * re, s * im)
}
