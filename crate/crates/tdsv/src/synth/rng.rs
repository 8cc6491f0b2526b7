//! Counter-based deterministic random generation.
//!
//! Every entity draws from its own stream keyed on `(seed, scope string)`,
//! so parallel generation and re-generation of a single entity are both
//! reproducible, independent of iteration order and platform.

/// FNV-1a over the scope bytes; stable across platforms.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// SplitMix64 finalizer: a bijective 64-bit mixer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// A keyed counter stream: draw `i` is a pure function of `(key, i)`.
#[derive(Debug, Clone)]
pub struct KeyedRng {
    key: u64,
    counter: u64,
    cached_gaussian: Option<f64>,
}

impl KeyedRng {
    pub fn new(seed: u64, scope: &str) -> Self {
        KeyedRng {
            key: splitmix64(seed ^ fnv1a64(scope.as_bytes())),
            counter: 0,
            cached_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let draw = splitmix64(
            self.key
                .wrapping_add(self.counter.wrapping_mul(0x9e3779b97f4a7c15)),
        );
        self.counter += 1;
        draw
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe to feed into a logarithm.
    fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_gaussian.take() {
            return z;
        }
        let u1 = self.next_open_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the small n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = KeyedRng::new(7, "spk/3");
        let mut b = KeyedRng::new(7, "spk/3");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn scopes_decorrelate() {
        let mut a = KeyedRng::new(7, "spk/3");
        let mut b = KeyedRng::new(7, "spk/4");
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_is_in_range() {
        let mut rng = KeyedRng::new(1, "u");
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn gaussian_moments_are_sane() {
        let mut rng = KeyedRng::new(42, "gauss");
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean = {mean}");
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn range_covers_all_values() {
        let mut rng = KeyedRng::new(3, "range");
        let mut seen = [false; 10];
        for _ in 0..1000 {
            seen[rng.next_range(10) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
