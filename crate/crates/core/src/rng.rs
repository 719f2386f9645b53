//! Seeding conventions. All stochastic code in the crate draws from
//! ChaCha12 streams created here, so a (seed, stream) pair pins every
//! result bit-for-bit within this implementation.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Root generator for a seed.
pub fn chacha(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator for `seed`. Used for
/// per-trajectory and per-sample parallel-safe streams.
pub fn chacha_stream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_deterministic() {
        let a: f64 = chacha_stream(1, 0).random();
        let b: f64 = chacha_stream(1, 1).random();
        let a2: f64 = chacha_stream(1, 0).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }
}
