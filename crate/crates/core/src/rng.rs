//! Counter-based deterministic random streams.
//!
//! Every scenario carries a [`RandomStream`]: the random numbers that
//! determinize transitions and observations are pure functions of
//! `(seed, depth, slot)`. Any depth's numbers can be queried without stepping
//! through earlier depths, which leaf expansion relies on when it replays a
//! node's pending action out of order, and which makes every backend produce
//! bit-identical draws.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SLOT_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const NORMAL_SALT_A: u64 = 0x8CB9_2BA7_2F3D_8DD7;
const NORMAL_SALT_B: u64 = 0x3C79_AC49_2BA7_B653;

/// SplitMix64 finalizer. Full-avalanche 64-bit mix.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and a salt index.
#[inline]
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    splitmix64(base ^ GOLDEN.wrapping_mul(salt.wrapping_add(1)))
}

/// A deterministic, randomly-addressable stream of numbers.
///
/// `raw(depth, slot)` is a pure function; two slots of the same step are
/// independent draws, and the same is true across depths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The raw 64-bit draw for `(depth, slot)`.
    #[inline]
    pub fn raw(&self, depth: u32, slot: u32) -> u64 {
        let a = splitmix64(self.seed ^ GOLDEN.wrapping_mul(u64::from(depth).wrapping_add(1)));
        splitmix64(a ^ SLOT_SALT.wrapping_mul(u64::from(slot).wrapping_add(1)))
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, depth: u32, slot: u32) -> f64 {
        to_unit(self.raw(depth, slot))
    }

    /// Bernoulli draw with success probability `p`.
    #[inline]
    pub fn bernoulli(&self, depth: u32, slot: u32, p: f64) -> bool {
        self.uniform(depth, slot) < p
    }

    /// Uniform index in `[0, n)`. `n` must be nonzero.
    #[inline]
    pub fn index(&self, depth: u32, slot: u32, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform(depth, slot)) * n as f64) as usize % n
    }

    /// Standard normal draw (Box-Muller over two sub-draws of one slot).
    #[inline]
    pub fn normal(&self, depth: u32, slot: u32) -> f64 {
        let r = self.raw(depth, slot);
        // (0, 1] for the log argument, [0, 1) for the angle.
        let u1 = to_unit(splitmix64(r ^ NORMAL_SALT_A)) + f64::EPSILON;
        let u2 = to_unit(splitmix64(r ^ NORMAL_SALT_B));
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[inline]
fn to_unit(x: u64) -> f64 {
    // 53 high bits -> [0, 1)
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_is_pure() {
        let s = RandomStream::new(42);
        for depth in [1u32, 2, 7, 1000] {
            for slot in [0u32, 1, 31] {
                assert_eq!(s.raw(depth, slot), s.raw(depth, slot));
            }
        }
    }

    #[test]
    fn distinct_coordinates_decorrelate() {
        let s = RandomStream::new(7);
        assert_ne!(s.raw(1, 0), s.raw(1, 1));
        assert_ne!(s.raw(1, 0), s.raw(2, 0));
        assert_ne!(
            RandomStream::new(1).raw(3, 3),
            RandomStream::new(2).raw(3, 3)
        );
    }

    #[test]
    fn uniform_in_unit_interval() {
        let s = RandomStream::new(99);
        for i in 0..10_000 {
            let u = s.uniform(i % 50, i);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_has_sane_moments() {
        let s = RandomStream::new(123);
        let n = 50_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for i in 0..n {
            let z = s.normal(1, i);
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
