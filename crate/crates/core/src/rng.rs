//! Counter-based random streams for determinized scenarios.
//!
//! A [`ScenarioStream`] is a pure function of `(seed, cursor)`: the value at a
//! given position never depends on what was drawn before it, so a stream can
//! be copied, replayed from any point and split into independent
//! sub-streams. The planner keys sub-streams by `(scenario index, depth)` so
//! sibling branches of the search tree see identical noise for the same
//! scenario at the same depth.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScenarioStream {
    seed: u64,
    cursor: u64,
}

impl ScenarioStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, cursor: 0 }
    }

    pub fn at(seed: u64, cursor: u64) -> Self {
        Self { seed, cursor }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Raw 64-bit value at the current cursor; advances the cursor by one.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.cursor = self.cursor.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.cursor.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform draw on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller, consumes two positions).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_uniform(); // (0, 1]
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Inverse-CDF draw from a categorical distribution. Falls back to the
    /// last index if rounding leaves the cumulative sum short of the draw.
    pub fn next_categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.next_uniform();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len().saturating_sub(1)
    }

    /// Independent child stream keyed by `key`. Does not advance `self`.
    pub fn split(&self, key: u64) -> ScenarioStream {
        let child = mix64(self.seed ^ mix64(key.wrapping_add(GOLDEN_GAMMA)).rotate_left(17));
        ScenarioStream::new(child)
    }
}

/// Sub-stream key used when drawing a scenario's initial intentions, kept
/// disjoint from the per-depth transition keys.
pub const SAMPLING_KEY: u64 = u64::MAX;

/// Stream consumed by the transition from `depth` to `depth + 1` of a
/// scenario.
pub fn transition_stream(scenario: &ScenarioStream, depth: usize) -> ScenarioStream {
    scenario.split(depth as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copies_replay_identically() {
        let mut a = ScenarioStream::at(42, 17);
        let mut b = a;
        assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        assert_eq!(a.cursor(), 18);
    }

    #[test]
    fn uniform_mean_is_half() {
        let mut s = ScenarioStream::new(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.next_uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn distinct_seeds_give_distinct_first_values() {
        let mut firsts: Vec<u64> = (0..1000u64)
            .map(|seed| ScenarioStream::new(seed).next_u64())
            .collect();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), 1000);
    }

    #[test]
    fn values_lie_in_unit_interval() {
        let mut s = ScenarioStream::new(3);
        for _ in 0..10_000 {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn split_streams_differ_from_parent_and_each_other() {
        let root = ScenarioStream::new(99);
        let mut a = root.split(0);
        let mut b = root.split(1);
        let mut r = root;
        let (x, y, z) = (a.next_u64(), b.next_u64(), r.next_u64());
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_eq!(root.cursor(), 0);
        assert_eq!(root.split(0), root.split(0));
    }

    #[test]
    fn gaussian_moments() {
        let mut s = ScenarioStream::new(11);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| s.next_gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }
}
