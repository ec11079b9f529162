use crate::detection::{Base, Classifier, Combiner};

/// Verdict counts: attacked windows give TP/FN, benign windows FP/TN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Confusion { tp, fp, tn, fn_ }
    }

    /// Adds one verdict.
    pub fn record(&mut self, attacked: bool, fired: bool) {
        match (attacked, fired) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// No positive verdicts at all, so precision is 0 by convention.
    pub fn precision_undefined(&self) -> bool {
        self.tp + self.fp == 0
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    /// As many attacked as benign windows were judged.
    pub fn is_balanced(&self) -> bool {
        self.tp + self.fn_ == self.tn + self.fp
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One grid point of a sweep. Only the threshold of the evaluated
/// classifier is set.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub classifier: Classifier,
    pub base: Base,
    pub combiner: Combiner,
    pub frame_length: f64,
    pub gap: usize,
    pub entropy_count: usize,
    pub entropy_threshold: Option<f64>,
    pub ratio_threshold: Option<f64>,
    pub magnitude: f64,
    pub subnet_size: u32,
    pub confusion: Confusion,
}

impl SweepResult {
    pub fn precision(&self) -> f64 {
        self.confusion.precision()
    }

    pub fn recall(&self) -> f64 {
        self.confusion.recall()
    }

    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    /// `(g + e)·l` seconds.
    pub fn latency(&self) -> f64 {
        (self.gap + self.entropy_count) as f64 * self.frame_length
    }
}

/// Mean accuracy of the results passing `keep`; `None` if there are none.
pub fn mean_accuracy<'a>(
    results: impl IntoIterator<Item = &'a SweepResult>,
    keep: impl Fn(&SweepResult) -> bool,
) -> Option<f64> {
    let (sum, n) = results.into_iter().filter(|r| keep(r)).fold((0.0, 0usize), |(s, n), r| (s + r.accuracy(), n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        let c = Confusion::new(8, 2, 6, 4);
        assert_eq!(c.precision(), 0.8);
        assert_eq!(c.recall(), 8.0 / 12.0);
        assert_eq!(c.accuracy(), 14.0 / 20.0);
        assert!(!c.is_balanced());
        let none = Confusion::new(0, 0, 10, 10);
        assert_eq!(none.precision(), 0.0);
        assert!(none.precision_undefined());
        assert!(none.is_balanced());
    }

    #[test]
    fn record_matches_counts() {
        let mut c = Confusion::default();
        for (attacked, fired) in [(true, true), (true, false), (false, true), (false, false), (true, true)] {
            c.record(attacked, fired);
        }
        assert_eq!(c, Confusion::new(2, 1, 1, 1));
    }
}
