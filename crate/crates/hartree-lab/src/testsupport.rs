//! Small deterministic helpers shared by the unit tests.

/// Deterministic pseudo-random values in (−1, 1) from a xorshift64* stream.
/// Good enough for exercising bilinear identities; not a statistical RNG.
pub fn xorshift_vec(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(0x2545f4914f6cdd1d);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}
