use std::collections::VecDeque;
use std::net::Ipv4Addr;

use rustc_hash::FxHashMap;

use super::classify::{classify_entropy, classify_ratio, combine, Base, Combiner, DetectorConfig};
use super::frames::FrameStats;
use super::DetectionError;

/// The three per-frame indicators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classifier {
    SourcePort,
    DestinationIp,
    UdpRatio,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::SourcePort => "src_port",
            Classifier::DestinationIp => "dst_ip",
            Classifier::UdpRatio => "udp_ratio",
        }
    }
}

impl std::str::FromStr for Classifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "src_port" => Ok(Classifier::SourcePort),
            "dst_ip" => Ok(Classifier::DestinationIp),
            "udp_ratio" => Ok(Classifier::UdpRatio),
            other => Err(format!("unknown classifier `{other}`")),
        }
    }
}

impl std::fmt::Display for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inputs and outcome of one classifier at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evidence {
    pub reference: f64,
    pub current: f64,
    pub delta: f64,
    pub threshold: f64,
    pub fired: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackReport {
    pub target_ip: Ipv4Addr,
    pub attack_port: u16,
    /// End of the last frame of the current window.
    pub detected_at: f64,
    pub frame_index: u64,
    pub source_port: Evidence,
    pub destination_ip: Evidence,
    pub udp_ratio: Evidence,
}

/// The values of one frame the classifiers look at.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameIndicators {
    pub src_port_flows: f64,
    pub src_port_packets: f64,
    pub dst_ip: f64,
    pub udp_ratio: f64,
    pub udp_empty: bool,
    pub empty: bool,
}

impl FrameIndicators {
    pub fn of(frame: &FrameStats) -> Self {
        FrameIndicators {
            src_port_flows: frame.entropy_src_port_flows,
            src_port_packets: frame.entropy_src_port_packets,
            dst_ip: frame.entropy_dst_ip,
            udp_ratio: frame.udp_ratio,
            udp_empty: frame.udp_packet_count == 0,
            empty: frame.udp_packet_count + frame.tcp_packet_count == 0,
        }
    }

    pub fn src_port(&self, base: Base) -> f64 {
        match base {
            Base::Flows => self.src_port_flows,
            Base::Packets => self.src_port_packets,
        }
    }
}

/// Reference and combined current value of one classifier, before any
/// threshold is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowValue {
    pub reference: f64,
    pub current: f64,
    /// Reference frame or whole current window empty: never fires.
    pub skip: bool,
}

impl WindowValue {
    pub fn delta(&self) -> f64 {
        self.current - self.reference
    }

    pub fn fires_entropy(&self, t_h: f64) -> bool {
        !self.skip && classify_entropy(self.reference, self.current, t_h)
    }

    pub fn fires_ratio(&self, t_r: f64) -> bool {
        !self.skip && classify_ratio(self.reference, self.current, t_r)
    }

    fn evidence(&self, threshold: f64, fired: bool) -> Evidence {
        Evidence { reference: self.reference, current: self.current, delta: self.delta(), threshold, fired }
    }
}

fn combine_by(current: &[FrameIndicators], get: impl Fn(&FrameIndicators) -> f64, combiner: Combiner) -> f64 {
    let mut small = [0.0; 8];
    if current.len() <= small.len() {
        for (slot, f) in small.iter_mut().zip(current) {
            *slot = get(f);
        }
        combine(&small[..current.len()], combiner)
    } else {
        combine(&current.iter().map(get).collect::<Vec<_>>(), combiner)
    }
}

/// Source-port, destination-IP and ratio values for one reference frame and
/// current window.
pub fn window_values(
    reference: &FrameIndicators,
    current: &[FrameIndicators],
    base: Base,
    combiner: Combiner,
) -> [WindowValue; 3] {
    let udp_empty = reference.udp_empty || current.iter().all(|f| f.udp_empty);
    let empty = reference.empty || current.iter().all(|f| f.empty);
    let value = |get: &dyn Fn(&FrameIndicators) -> f64, skip: bool| WindowValue {
        reference: get(reference),
        current: combine_by(current, get, combiner),
        skip,
    };
    [value(&|f| f.src_port(base), udp_empty), value(&|f| f.dst_ip, udp_empty), value(&|f| f.udp_ratio, empty)]
}

/// Runs all three classifiers for one reference frame and current window.
/// A classifier never fires when its reference or current window is empty.
pub fn evaluate_window(
    reference: &FrameIndicators,
    current: &[FrameIndicators],
    config: &DetectorConfig,
) -> [Evidence; 3] {
    let [src, dst, ratio] = window_values(reference, current, config.base, config.combiner);
    let t_h = config.entropy_threshold;
    let t_r = config.ratio_threshold;
    [
        src.evidence(t_h, src.fires_entropy(t_h)),
        dst.evidence(t_h, dst.fires_entropy(t_h)),
        ratio.evidence(t_r, ratio.fires_ratio(t_r)),
    ]
}

/// Most common UDP source port over `frames` by flow count (lowest port on
/// ties), and the most common destination among flows from that port.
pub fn modal_target(frames: &[&FrameStats]) -> Option<(u16, Ipv4Addr)> {
    let mut ports: FxHashMap<u16, u64> = FxHashMap::default();
    for f in frames {
        for (&p, &c) in &f.src_port_flows {
            *ports.entry(p).or_insert(0) += c;
        }
    }
    let port = ports.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?.0;
    let mut dsts: FxHashMap<Ipv4Addr, u64> = FxHashMap::default();
    for f in frames {
        for (key, _) in f.udp_flows.iter().filter(|(k, _)| k.src_port == port) {
            *dsts.entry(key.dst_ip).or_insert(0) += 1;
        }
    }
    let ip = dsts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?.0;
    Some((port, ip))
}

/// Streaming detector: feed frames in order, get a report whenever the
/// source-port classifier fires.
#[derive(Debug)]
pub struct Detector {
    config: DetectorConfig,
    history: VecDeque<FrameIndicators>,
    recent: VecDeque<FrameStats>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        Ok(Detector { config, history: VecDeque::new(), recent: VecDeque::new() })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// True once enough frames have been seen to evaluate.
    pub fn is_warm(&self) -> bool {
        self.history.len() == self.config.history()
    }

    pub fn push(&mut self, frame: FrameStats) -> Option<AttackReport> {
        self.history.push_back(FrameIndicators::of(&frame));
        if self.history.len() > self.config.history() {
            self.history.pop_front();
        }
        self.recent.push_back(frame);
        if self.recent.len() > self.config.entropy_count {
            self.recent.pop_front();
        }
        if !self.is_warm() {
            return None;
        }
        let (reference, current) = {
            let h = self.history.make_contiguous();
            (h[0], h[self.config.gap..].to_vec())
        };
        let [src, dst, ratio] = evaluate_window(&reference, &current, &self.config);
        if !src.fired || (self.config.prescreen && !(dst.fired || ratio.fired)) {
            return None;
        }
        let frames: Vec<&FrameStats> = self.recent.iter().collect();
        let (attack_port, target_ip) = modal_target(&frames)?;
        let last = frames.last().expect("window is non-empty");
        Some(AttackReport {
            target_ip,
            attack_port,
            detected_at: last.end(),
            frame_index: last.index,
            source_port: src,
            destination_ip: dst,
            udp_ratio: ratio,
        })
    }
}

/// Verdicts for every evaluation point of a finished frame sequence; entry
/// `i` uses frame `i` as reference.
pub fn detect(frames: &[FrameStats], config: &DetectorConfig) -> Result<Vec<Option<AttackReport>>, DetectionError> {
    config.validate()?;
    let needed = config.history();
    if frames.len() < needed {
        return Err(DetectionError::InsufficientHistory { needed, available: frames.len() });
    }
    let mut det = Detector::new(config.clone())?;
    let mut out = Vec::with_capacity(frames.len() - needed + 1);
    for f in frames {
        let report = det.push(f.clone());
        if det.is_warm() {
            out.push(report);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::frames::{assign_frames, FrameAggregator};
    use crate::packet::PacketHeaderView;

    fn frame_with(ports: &[(u16, u64)], dst: Ipv4Addr, index: u64) -> FrameStats {
        let mut agg = FrameAggregator::with_origin(1.0, index as f64);
        let mut n = 0u32;
        for &(port, flows) in ports {
            for _ in 0..flows {
                n += 1;
                let src = Ipv4Addr::from(0x0a00_0000 + n);
                let p = PacketHeaderView::udp_packet(index as f64 + 0.5, (src, port), (dst, 40000));
                agg.push(&p, &mut |_| {}).unwrap();
            }
        }
        let mut f = FrameStats::from_flows(&agg.finish().unwrap());
        f.index = index;
        f
    }

    #[test]
    fn insufficient_history() {
        let cfg = DetectorConfig { gap: 3, entropy_count: 2, ..Default::default() };
        let frames: Vec<_> = (0..4).map(|i| frame_with(&[(1, 1)], Ipv4Addr::LOCALHOST, i)).collect();
        assert_eq!(detect(&frames, &cfg).unwrap_err(), DetectionError::InsufficientHistory { needed: 5, available: 4 });
    }

    #[test]
    fn reports_modal_port_and_target() {
        let victim = Ipv4Addr::new(192, 0, 2, 10);
        let other = Ipv4Addr::new(10, 9, 9, 9);
        let benign: Vec<(u16, u64)> = (0..256).map(|p| (1024 + p, 1)).collect();
        let mut attacked = benign.clone();
        attacked.push((53, 256));
        let cfg = DetectorConfig {
            frame_length: 1.0,
            gap: 2,
            entropy_count: 1,
            entropy_threshold: -1.0,
            ..Default::default()
        };
        let frames =
            vec![frame_with(&benign, other, 0), frame_with(&benign, other, 1), frame_with(&attacked, victim, 2)];
        let out = detect(&frames, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        let r = out[0].as_ref().expect("attack detected");
        assert_eq!((r.attack_port, r.target_ip), (53, victim));
        assert_eq!(r.source_port.reference, 8.0);
        assert!(r.source_port.fired);
        assert_eq!(r.detected_at, 3.0);
    }

    #[test]
    fn no_report_without_change() {
        let frames: Vec<_> =
            (0..6).map(|i| frame_with(&[(53, 3), (123, 3), (161, 2)], Ipv4Addr::LOCALHOST, i)).collect();
        let cfg = DetectorConfig { gap: 2, entropy_count: 2, entropy_threshold: -0.5, ..Default::default() };
        assert!(detect(&frames, &cfg).unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn empty_windows_never_fire() {
        let empty = assign_frames(std::iter::empty(), 1.0).unwrap();
        assert!(empty.is_empty());
        let full = FrameIndicators { src_port_flows: 8.0, dst_ip: 8.0, udp_ratio: 0.5, ..Default::default() };
        let none = FrameIndicators { udp_empty: true, empty: true, ..Default::default() };
        let cfg = DetectorConfig::default();
        let ev = evaluate_window(&full, &[none], &cfg);
        assert!(ev.iter().all(|e| !e.fired));
        let ev = evaluate_window(&none, &[full], &cfg);
        assert!(ev.iter().all(|e| !e.fired));
    }

    #[test]
    fn modal_ties_pick_lowest() {
        let f = frame_with(&[(123, 2), (53, 2), (161, 1)], Ipv4Addr::new(10, 0, 0, 1), 0);
        assert_eq!(modal_target(&[&f]).unwrap().0, 53);
    }
}
