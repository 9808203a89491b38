//! Stable hashing used for feature fallbacks and bag-of-words titles.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes several words into one 64-bit seed.
pub fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Deterministic pseudo-random vector in `[-1, 1)` derived from `key`.
pub fn hashed_vector(key: &str, dim: usize) -> Vec<f64> {
    let mut state = fnv1a(key.as_bytes());
    (0..dim)
        .map(|_| {
            state = splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Whitespace-tokenised, lower-cased bag of words hashed into `dim`
/// buckets with a sign hash; the result is L2-normalised (all zeros for
/// empty text).
pub fn hash_bag_of_words(text: &str, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for token in text.split_whitespace() {
        let h = fnv1a(token.to_lowercase().as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (splitmix64(h) & 1) == 0 { 1.0 } else { -1.0 };
        out[bucket] += sign;
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_vectors_are_stable_and_bounded() {
        let a = hashed_vector("node-1/title", 16);
        assert_eq!(a, hashed_vector("node-1/title", 16));
        assert_ne!(a, hashed_vector("node-2/title", 16));
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn bag_of_words_ignores_case_and_order() {
        let a = hash_bag_of_words("Quantum spin Chains", 64);
        let b = hash_bag_of_words("chains quantum SPIN", 64);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(hash_bag_of_words("", 8).iter().all(|&v| v == 0.0));
    }
}
