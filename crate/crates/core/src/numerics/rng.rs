use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Identifier of the pinned generator: ChaCha20 keyed by a SplitMix64
/// expansion of the seed, 64-bit stream selector, Box–Muller normals
/// computed with `libm`.
pub const ALGORITHM_ID: &str = "chacha20-splitmix64-boxmuller-v1";

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Deterministic Gaussian source identified by `(seed, stream)`.
///
/// Every run-time draw in the engine comes from one of these. Distinct streams
/// of one seed are independent ChaCha20 streams under the same key.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
    spare: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
            spare: None,
        }
    }

    /// A generator on stream 0 of a seed taken from process entropy, for
    /// resolving `-1` seeds.
    pub fn from_entropy() -> Self {
        use std::hash::BuildHasher;
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        SeededRng::new(
            std::collections::hash_map::RandomState::new().hash_one(nanos),
            0,
        )
    }

    pub fn algorithm_id(&self) -> &'static str {
        ALGORITHM_ID
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 2^32)`, the range used for freshly drawn seeds.
    pub fn next_seed(&mut self) -> u64 {
        self.next_u64() >> 32
    }

    /// Standard normal draw. Pairs are generated together; the second value
    /// is returned by the next call.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite, u2 in [0, 1).
        let u1 = ((self.inner.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53;
        let u2 = (self.inner.next_u64() >> 11) as f64 * TWO_POW_NEG_53;
        let radius = (-2.0 * libm::log(u1)).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_sequence() {
        let mut a = SeededRng::new(7, 3);
        let mut b = SeededRng::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_gaussian().to_bits(), b.next_gaussian().to_bits());
        }
    }

    #[test]
    fn streams_and_seeds_differ() {
        let draw = |seed, stream| {
            let mut r = SeededRng::new(seed, stream);
            (0..8).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        assert_ne!(draw(7, 0), draw(7, 1));
        assert_ne!(draw(7, 0), draw(8, 0));
    }

    // Frozen outputs of the pinned generator, cross-checked against an
    // independent ChaCha20 implementation (OpenSSL via Python `cryptography`,
    // IV = 64-bit block counter || 64-bit stream). Changing any of these
    // breaks replay of every stored job.
    #[test]
    fn golden_values() {
        let mut r = SeededRng::new(0, 0);
        assert_eq!(r.next_u64(), 15125330937937539462);
        let mut r = SeededRng::new(7, 3);
        assert_eq!(
            [r.next_u64(), r.next_u64()],
            [9554569394127798066, 5655994276741873234]
        );
        let mut r = SeededRng::new(3485530643, 0);
        let g: Vec<u64> = (0..4).map(|_| r.next_gaussian().to_bits()).collect();
        assert_eq!(
            g,
            [
                0x3fb5fff3184c3a67,
                0x3ff48ab5c003c6f3,
                0xbff4fe6f497b2cc6,
                0x3fbd257b93cb1d4c
            ]
        );
    }
}
