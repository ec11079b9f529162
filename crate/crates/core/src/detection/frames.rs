//! Assignment of packets to fixed-length time frames and per-frame statistics.

use std::net::Ipv4Addr;

use rustc_hash::{FxHashMap, FxHashSet};

use super::entropy::EntropyAccumulator;
use super::DetectionError;
use crate::packet::{flow_key_of, FlowKey, IpProtocol, PacketHeaderView};

/// Raw per-frame flow table, before any statistics are derived.
#[derive(Clone, Debug, Default)]
pub struct FrameFlows {
    pub index: u64,
    pub start: f64,
    pub length: f64,
    /// UDP flows with their packet counts.
    pub udp: FxHashMap<FlowKey, u64>,
    pub udp_packets: u64,
    pub tcp_packets: u64,
    /// Distinct TCP flows, if the aggregator tracks them.
    pub tcp_flows: FxHashSet<FlowKey>,
}

impl FrameFlows {
    fn new(index: u64, start: f64, length: f64) -> Self {
        FrameFlows { index, start, length, ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.udp_packets == 0 && self.tcp_packets == 0
    }
}

/// Streaming fold from timestamp-ordered packets into frames
/// `[origin + i·l, origin + (i+1)·l)`. Frames without packets between two
/// busy frames are still emitted.
#[derive(Debug)]
pub struct FrameAggregator {
    length: f64,
    origin: Option<f64>,
    current: Option<FrameFlows>,
    last_ts: f64,
    track_tcp_flows: bool,
}

impl FrameAggregator {
    /// The first packet's timestamp becomes the origin.
    pub fn new(length: f64) -> Self {
        assert!(length > 0.0, "frame length must be positive");
        FrameAggregator { length, origin: None, current: None, last_ts: f64::NEG_INFINITY, track_tcp_flows: true }
    }

    pub fn with_origin(length: f64, origin: f64) -> Self {
        FrameAggregator { origin: Some(origin), ..Self::new(length) }
    }

    /// TCP flow sets are only needed for reporting; sweeps switch them off.
    pub fn track_tcp_flows(mut self, on: bool) -> Self {
        self.track_tcp_flows = on;
        self
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn frame_start(&self, index: u64) -> f64 {
        self.origin.unwrap_or(0.0) + index as f64 * self.length
    }

    /// Frame holding `ts`, robust to rounding at exact boundaries.
    fn index_of(&self, origin: f64, ts: f64) -> u64 {
        let start = |i: u64| origin + i as f64 * self.length;
        let mut i = ((ts - origin) / self.length).floor().max(0.0) as u64;
        while i > 0 && start(i) > ts {
            i -= 1;
        }
        while start(i + 1) <= ts {
            i += 1;
        }
        i
    }

    /// Adds one packet, handing every frame it completes to `emit`.
    pub fn push_key(
        &mut self,
        ts: f64,
        key: Option<FlowKey>,
        emit: &mut impl FnMut(FrameFlows),
    ) -> Result<(), DetectionError> {
        if ts < self.last_ts {
            return Err(DetectionError::UnorderedInput { previous: self.last_ts, timestamp: ts });
        }
        self.last_ts = ts;
        let origin = *self.origin.get_or_insert(ts);
        if ts < origin {
            return Err(DetectionError::UnorderedInput { previous: origin, timestamp: ts });
        }
        let index = self.index_of(origin, ts);
        let next = match &self.current {
            Some(cur) if cur.index == index => None,
            Some(cur) => Some(cur.index + 1),
            None => Some(0),
        };
        if let Some(mut i) = next {
            if let Some(done) = self.current.take() {
                emit(done);
            }
            while i < index {
                emit(FrameFlows::new(i, self.frame_start(i), self.length));
                i += 1;
            }
            self.current = Some(FrameFlows::new(index, self.frame_start(index), self.length));
        }
        let frame = self.current.as_mut().expect("set above");
        if let Some(key) = key {
            match key.protocol {
                IpProtocol::Udp => {
                    frame.udp_packets += 1;
                    *frame.udp.entry(key).or_insert(0) += 1;
                }
                IpProtocol::Tcp => {
                    frame.tcp_packets += 1;
                    if self.track_tcp_flows {
                        frame.tcp_flows.insert(key);
                    }
                }
                IpProtocol::Other(_) => {}
            }
        }
        Ok(())
    }

    pub fn push(&mut self, view: &PacketHeaderView, emit: &mut impl FnMut(FrameFlows)) -> Result<(), DetectionError> {
        self.push_key(view.timestamp, flow_key_of(view), emit)
    }

    /// Emits frames up to (not including) the one containing `ts`, so a
    /// quiet tail still produces frames.
    pub fn advance_to(&mut self, ts: f64, emit: &mut impl FnMut(FrameFlows)) -> Result<(), DetectionError> {
        self.push_key(ts, None, emit)
    }

    /// The frame in progress, which may be incomplete.
    pub fn finish(self) -> Option<FrameFlows> {
        self.current
    }
}

/// Splits a packet stream into frames of length `l`. The trailing frame is
/// included even if the stream ends before its end.
pub fn assign_frames<'a, I>(packets: I, l: f64) -> Result<Vec<FrameStats>, DetectionError>
where
    I: IntoIterator<Item = &'a PacketHeaderView>,
{
    let mut agg = FrameAggregator::new(l);
    let mut out = Vec::new();
    for p in packets {
        agg.push(p, &mut |f| out.push(FrameStats::from_flows(&f)))?;
    }
    if let Some(last) = agg.finish() {
        out.push(FrameStats::from_flows(&last));
    }
    Ok(out)
}

/// Key of the destination histogram for subnet size `s`. Attack spreading
/// over several hosts is modelled by the traffic generator, so the key is
/// the address itself for every `s`.
pub fn dst_ip_aggregate(ip: Ipv4Addr, s: u32) -> Ipv4Addr {
    assert!(s.is_power_of_two(), "subnet size must be a power of two");
    ip
}

/// UDP share of UDP+TCP packets, 0 for an empty frame.
pub fn udp_tcp_ratio(udp_packets: u64, tcp_packets: u64) -> f64 {
    let total = udp_packets + tcp_packets;
    if total == 0 {
        0.0
    } else {
        udp_packets as f64 / total as f64
    }
}

fn histogram_entropy<K>(h: &FxHashMap<K, u64>) -> f64 {
    EntropyAccumulator::from_counts(h.values().copied()).entropy()
}

/// Statistics of one frame. Histograms and entropies cover UDP only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameStats {
    pub index: u64,
    pub start: f64,
    pub length: f64,
    pub udp_flow_count: u64,
    pub tcp_flow_count: u64,
    pub udp_packet_count: u64,
    pub tcp_packet_count: u64,
    pub src_port_flows: FxHashMap<u16, u64>,
    pub src_port_packets: FxHashMap<u16, u64>,
    pub dst_ip_flows: FxHashMap<Ipv4Addr, u64>,
    pub dst_ip_packets: FxHashMap<Ipv4Addr, u64>,
    pub entropy_src_port_flows: f64,
    pub entropy_src_port_packets: f64,
    pub entropy_dst_ip: f64,
    pub entropy_dst_ip_packets: f64,
    pub udp_ratio: f64,
    /// UDP flows of the frame with packet counts, sorted by key.
    pub udp_flows: Vec<(FlowKey, u64)>,
}

impl FrameStats {
    pub fn from_flows(frame: &FrameFlows) -> Self {
        let mut s = FrameStats {
            index: frame.index,
            start: frame.start,
            length: frame.length,
            udp_flow_count: frame.udp.len() as u64,
            tcp_flow_count: frame.tcp_flows.len() as u64,
            udp_packet_count: frame.udp_packets,
            tcp_packet_count: frame.tcp_packets,
            udp_ratio: udp_tcp_ratio(frame.udp_packets, frame.tcp_packets),
            ..Default::default()
        };
        for (key, &pkts) in &frame.udp {
            *s.src_port_flows.entry(key.src_port).or_insert(0) += 1;
            *s.src_port_packets.entry(key.src_port).or_insert(0) += pkts;
            *s.dst_ip_flows.entry(key.dst_ip).or_insert(0) += 1;
            *s.dst_ip_packets.entry(key.dst_ip).or_insert(0) += pkts;
        }
        s.entropy_src_port_flows = histogram_entropy(&s.src_port_flows);
        s.entropy_src_port_packets = histogram_entropy(&s.src_port_packets);
        s.entropy_dst_ip = histogram_entropy(&s.dst_ip_flows);
        s.entropy_dst_ip_packets = histogram_entropy(&s.dst_ip_packets);
        s.udp_flows = frame.udp.iter().map(|(k, &c)| (*k, c)).collect();
        s.udp_flows.sort_unstable();
        s
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn is_udp_empty(&self) -> bool {
        self.udp_packet_count == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 1);
    const B: Ipv4Addr = Ipv4Addr::new(10, 0, 0, 2);

    fn udp(ts: f64, sport: u16) -> PacketHeaderView {
        PacketHeaderView::udp_packet(ts, (A, sport), (B, 4000))
    }

    #[test]
    fn one_flow_many_packets() {
        let pkts: Vec<_> = (0..10).map(|i| udp(i as f64 * 0.1, 53)).collect();
        let frames = assign_frames(&pkts, 10.0).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].src_port_flows.values().sum::<u64>(), 1);
        assert_eq!(frames[0].src_port_packets.values().sum::<u64>(), 10);
        assert_eq!(frames[0].entropy_src_port_flows, 0.0);
    }

    #[test]
    fn boundary_goes_to_later_frame() {
        let mut agg = FrameAggregator::with_origin(0.5, 0.0);
        let mut done = Vec::new();
        for ts in [0.0, 0.25, 0.5, 1.5] {
            agg.push(&udp(ts, 1), &mut |f| done.push(f)).unwrap();
        }
        let idx: Vec<_> = done.iter().map(|f| (f.index, f.udp_packets)).collect();
        assert_eq!(idx, [(0, 2), (1, 1), (2, 0)]);
        assert_eq!(agg.finish().unwrap().index, 3);
    }

    #[test]
    fn empty_frames_are_zero() {
        let pkts = [udp(0.0, 1), udp(35.0, 2)];
        let frames = assign_frames(&pkts, 10.0).unwrap();
        assert_eq!(frames.len(), 4);
        let empty = &frames[1];
        assert_eq!((empty.udp_flow_count, empty.udp_packet_count, empty.tcp_packet_count), (0, 0, 0));
        assert_eq!(empty.entropy_src_port_flows, 0.0);
        assert_eq!(empty.entropy_dst_ip, 0.0);
        assert_eq!(empty.udp_ratio, 0.0);
    }

    #[test]
    fn unordered_rejected() {
        let mut agg = FrameAggregator::new(1.0);
        agg.push(&udp(5.0, 1), &mut |_| {}).unwrap();
        let err = agg.push(&udp(4.0, 1), &mut |_| {}).unwrap_err();
        assert!(matches!(err, DetectionError::UnorderedInput { .. }));
    }

    #[test]
    fn ratio() {
        assert!((udp_tcp_ratio(70, 930) - 0.07).abs() < 1e-15);
        assert_eq!(udp_tcp_ratio(0, 0), 0.0);
        assert_eq!(udp_tcp_ratio(5, 0), 1.0);
    }

    #[test]
    fn tcp_flows_counted_when_tracked() {
        let t1 = PacketHeaderView::tcp_packet(0.0, (A, 1000), (B, 80));
        let t2 = PacketHeaderView::tcp_packet(0.1, (A, 1000), (B, 80));
        let frames = assign_frames([&t1, &t2], 1.0).unwrap();
        assert_eq!((frames[0].tcp_flow_count, frames[0].tcp_packet_count), (1, 2));
        assert_eq!(frames[0].udp_ratio, 0.0);
    }
}
