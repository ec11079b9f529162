use std::fmt;
use std::str::FromStr;

use super::DetectionError;

/// What the source-port histogram counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    Flows,
    Packets,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Combiner {
    Mean,
    Median,
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Base::Flows => "flows",
            Base::Packets => "packets",
        })
    }
}

impl FromStr for Base {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flows" | "flow" => Ok(Base::Flows),
            "packets" | "packet" => Ok(Base::Packets),
            _ => Err(format!("unknown entropy base `{s}`")),
        }
    }
}

impl fmt::Display for Combiner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combiner::Mean => "mean",
            Combiner::Median => "median",
        })
    }
}

impl FromStr for Combiner {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Combiner::Mean),
            "median" => Ok(Combiner::Median),
            _ => Err(format!("unknown combiner `{s}`")),
        }
    }
}

/// Mean or median of a non-empty slice; the median of an even count is the
/// mean of the middle two.
pub fn combine(values: &[f64], combiner: Combiner) -> f64 {
    assert!(!values.is_empty(), "combine needs at least one value");
    match combiner {
        Combiner::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Combiner::Median => {
            let mut small = [0.0; 8];
            let mut large = Vec::new();
            let v: &mut [f64] = if values.len() <= small.len() {
                small[..values.len()].copy_from_slice(values);
                &mut small[..values.len()]
            } else {
                large.extend_from_slice(values);
                &mut large
            };
            v.sort_unstable_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                (v[m - 1] + v[m]) / 2.0
            }
        }
    }
}

/// Fires when the entropy dropped by at least `|t_h|`.
pub fn classify_entropy(reference: f64, current: f64, t_h: f64) -> bool {
    current - reference <= t_h
}

/// Fires when the UDP share rose by at least `t_r`.
pub fn classify_ratio(reference: f64, current: f64, t_r: f64) -> bool {
    current - reference >= t_r
}

/// Detector tunables. Entropies are in bits.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    /// Frame length `l` in seconds.
    pub frame_length: f64,
    /// Frames between the reference frame and the first current frame.
    pub gap: usize,
    /// Frames combined into the current value.
    pub entropy_count: usize,
    pub entropy_threshold: f64,
    pub ratio_threshold: f64,
    /// Hosts the attack is spread over; a traffic-model parameter.
    pub subnet_size: u32,
    pub base: Base,
    pub combiner: Combiner,
    /// Also require the destination-IP or ratio classifier to fire.
    pub prescreen: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            frame_length: 10.0,
            gap: 5,
            entropy_count: 1,
            entropy_threshold: -3.0,
            ratio_threshold: 0.05,
            subnet_size: 1,
            base: Base::Flows,
            combiner: Combiner::Mean,
            prescreen: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::InvalidConfig(m.to_string()));
        if !(self.frame_length > 0.0 && self.frame_length.is_finite()) {
            return bad("frame length l must be positive");
        }
        if self.gap < 1 {
            return bad("gap g must be at least 1");
        }
        if self.entropy_count < 1 {
            return bad("entropy count e must be at least 1");
        }
        if !(self.entropy_threshold < 0.0) {
            return bad("entropy threshold T_h must be negative");
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return bad("ratio threshold T_r must lie in (0, 1)");
        }
        if !self.subnet_size.is_power_of_two() {
            return bad("subnet size s must be a power of two");
        }
        Ok(())
    }

    /// Frames needed before the first evaluation.
    pub fn history(&self) -> usize {
        self.gap + self.entropy_count
    }

    /// Seconds of traffic behind one verdict, `(g + e)·l`.
    pub fn latency(&self) -> f64 {
        self.history() as f64 * self.frame_length
    }
}
