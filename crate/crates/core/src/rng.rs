//! Seeded random number generation with a pinned algorithm.
//!
//! Every random quantity in this crate (synthetic data, random weight
//! initialization, shuffles) flows through the two generators defined here,
//! so a seed pins the byte stream independently of any external crate
//! version. The algorithms:
//!
//! * `SplitMix64` — the standard 64-bit mixer. State advances by the odd
//!   constant `0x9E3779B97F4A7C15`; each output is the finalized mix
//!   `z ^= z>>30, z *= 0xBF58476D1CE4E5B9, z ^= z>>27, z *= 0x94D049BB133111EB,
//!   z ^= z>>31`. Reference vector: seed 0 yields
//!   `0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F, ...`.
//! * `GaussianSource` — Box–Muller over SplitMix64. Each pair of outputs
//!   `(a, b)` maps to `u1 = ((a >> 11) + 1) * 2^-53` in (0, 1] and
//!   `u2 = (b >> 11) * 2^-53` in [0, 1); the pair of normals is
//!   `r*cos(2*pi*u2), r*sin(2*pi*u2)` with `r = sqrt(-2*ln(u1))`, consumed
//!   cosine first.
//!
//! The integer stream is bit-exact everywhere. The Gaussian stream is
//! deterministic within a build; across platforms `ln`/`cos`/`sin` may
//! differ in the last ulp.

/// SplitMix64 pseudorandom generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform sample in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound) by rejection, bias-free.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Child generator seeded from this stream's next output.
    pub fn split(&mut self) -> SplitMix64 {
        SplitMix64::new(self.next_u64())
    }
}

/// Standard normal sampler (Box–Muller over SplitMix64).
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        GaussianSource {
            rng: SplitMix64::new(seed),
            spare: None,
        }
    }

    pub fn from_rng(rng: SplitMix64) -> Self {
        GaussianSource { rng, spare: None }
    }

    /// Next standard normal sample.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fill a slice with standard normal samples.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next_normal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen vectors, computed with an independent implementation of the
    // same algorithm. The seed-0 sequence matches the widely published
    // SplitMix64 reference output.
    #[test]
    fn splitmix64_reference_vectors() {
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
        assert_eq!(g.next_u64(), 0xF88B_B8A8_724C_81EC);
        assert_eq!(g.next_u64(), 0x1B39_896A_51A8_749B);

        let mut g = SplitMix64::new(42);
        assert_eq!(g.next_u64(), 0xBDD7_3226_2FEB_6E95);
        assert_eq!(g.next_u64(), 0x28EF_E333_B266_F103);

        let mut g = SplitMix64::new(0x0123_4567_89AB_CDEF);
        assert_eq!(g.next_u64(), 0x157A_3807_A48F_AA9D);
    }

    #[test]
    fn uniform_reference_vectors() {
        let mut g = SplitMix64::new(42);
        assert_eq!(g.next_f64(), 0.7415648787718233);
        assert_eq!(g.next_f64(), 0.1599103928769201);
        assert_eq!(g.next_f64(), 0.27860113025513866);
    }

    #[test]
    fn gaussian_reference_vectors() {
        let mut g = GaussianSource::new(42);
        let expect = [
            0.4147197504315305,
            0.6526812221519427,
            -0.8918862136277562,
            1.3268335628141064,
            1.7295930879374015,
            -1.883416788902816,
        ];
        for e in expect {
            let got = g.next_normal();
            assert!(
                (got - e).abs() <= 1e-15 * e.abs().max(1.0),
                "got {got}, expected {e}"
            );
        }

        let mut g = GaussianSource::new(7);
        let expect = [
            1.3649922974572282,
            0.14452122126941494,
            -0.39652397525381783,
            -0.22759631143286652,
        ];
        for e in expect {
            let got = g.next_normal();
            assert!((got - e).abs() <= 1e-15 * e.abs().max(1.0));
        }
    }

    #[test]
    fn determinism_across_instances() {
        let a: Vec<u64> = {
            let mut g = SplitMix64::new(123);
            (0..100).map(|_| g.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut g = SplitMix64::new(123);
            (0..100).map(|_| g.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn next_below_is_in_range() {
        let mut g = SplitMix64::new(9);
        for bound in [1u64, 2, 3, 7, 1000] {
            for _ in 0..200 {
                assert!(g.next_below(bound) < bound);
            }
        }
    }
}
