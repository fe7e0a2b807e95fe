//! Small numeric helpers shared across modules.

use alloc::vec::Vec;

/// Shannon entropy (nats) of the distribution proportional to `counts`.
pub fn entropy_of_counts(counts: impl IntoIterator<Item = f64>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().filter(|&c| c > 0.0).collect();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h = -counts
        .iter()
        .map(|&c| {
            let p = c / total;
            p * libm::log(p)
        })
        .sum::<f64>();
    h.max(0.0)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Normalizes in place; returns `false` (leaving input untouched) when the
/// sum is not positive.
pub fn normalize(values: &mut [f64]) -> bool {
    let s: f64 = values.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return false;
    }
    values.iter_mut().for_each(|v| *v /= s);
    true
}

/// Jensen-Shannon divergence in bits between two count vectors over the
/// same support. Each input is normalized first; an empty side counts as a
/// point mass nowhere and yields 1 against any non-empty side.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    match (sp > 0.0, sq > 0.0) {
        (false, false) => return 0.0,
        (true, false) | (false, true) => return 1.0,
        _ => {}
    }
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * libm::log2(a / m);
        }
        if b > 0.0 {
            js += 0.5 * b * libm::log2(b / m);
        }
    }
    js.clamp(0.0, 1.0)
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded generator used throughout the crate.
pub fn rng_from(seed: u64, tag: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, tag))
}
