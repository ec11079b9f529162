//! Shannon entropy in bits, computed directly or maintained incrementally.

/// `c · log2(c)`, with `0 · log2(0) = 0`.
#[inline]
pub fn xlog2x(c: u64) -> f64 {
    if c <= 1 {
        0.0
    } else {
        let c = c as f64;
        c * c.log2()
    }
}

/// Entropy of a histogram given as its counts. Zero counts are ignored;
/// an empty histogram has entropy 0.
pub fn shannon_entropy<I: IntoIterator<Item = u64>>(counts: I) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Running entropy of a histogram under count changes.
///
/// Keeps the total `N`, the number of non-zero keys and `S = Σ c·log2 c`
/// (compensated), so that `H = log2 N − S/N`. Callers report each key's
/// old and new count; the histogram itself lives elsewhere.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntropyAccumulator {
    total: u64,
    distinct: u64,
    sum: f64,
    compensation: f64,
}

impl EntropyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the summary of a complete histogram.
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Self {
        let mut acc = Self::new();
        for c in counts {
            acc.change(0, c);
        }
        acc
    }

    fn add(&mut self, x: f64) {
        // Neumaier summation
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// One key's count moves from `old` to `new`.
    pub fn change(&mut self, old: u64, new: u64) {
        if old == new {
            return;
        }
        self.total = self.total - old + new;
        match (old, new) {
            (0, _) => self.distinct += 1,
            (_, 0) => self.distinct -= 1,
            _ => {}
        }
        self.add(xlog2x(new) - xlog2x(old));
    }

    /// One more observation of a key previously seen `old` times.
    pub fn increment(&mut self, old: u64) {
        self.change(old, old + 1);
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> u64 {
        self.distinct
    }

    pub fn entropy(&self) -> f64 {
        if self.distinct <= 1 {
            return 0.0;
        }
        let n = self.total as f64;
        let s = self.sum + self.compensation;
        let h = n.log2() - s / n;
        h.clamp(0.0, (self.distinct as f64).log2())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(shannon_entropy([4]), 0.0);
        assert_eq!(shannon_entropy([1; 8]), 3.0);
        assert_eq!(shannon_entropy([2, 1, 1]), 1.5);
        assert_eq!(shannon_entropy(std::iter::empty()), 0.0);
        assert_eq!(shannon_entropy([0, 0, 5]), 0.0);
    }

    #[test]
    fn accumulator_exact_cases() {
        assert_eq!(EntropyAccumulator::from_counts([1; 8]).entropy(), 3.0);
        assert_eq!(EntropyAccumulator::from_counts([7]).entropy(), 0.0);
        assert_eq!(EntropyAccumulator::new().entropy(), 0.0);
    }

    #[test]
    fn accumulator_tracks_changes() {
        let mut counts = [0u64; 5];
        let mut acc = EntropyAccumulator::new();
        for (i, k) in [0usize, 1, 1, 2, 4, 4, 4, 0, 3].iter().enumerate() {
            acc.increment(counts[*k]);
            counts[*k] += 1;
            let direct = shannon_entropy(counts.iter().copied());
            assert!((acc.entropy() - direct).abs() < 1e-12, "step {i}");
        }
        acc.change(counts[4], 0);
        counts[4] = 0;
        assert_eq!(acc.distinct(), 4);
        assert!((acc.entropy() - shannon_entropy(counts.iter().copied())).abs() < 1e-12);
    }
}
