//! Frame-based entropy detection of reflective attacks.
//!
//! Traffic is cut into frames of `l` seconds. For every frame the detector
//! computes the Shannon entropy (bits) of UDP source ports and destination
//! addresses, counting flows or packets, and the UDP share of packets. A
//! window of `e` frames is combined and compared with a single reference
//! frame `g` frames earlier: a drop in entropy of at least `|T_h|`, or a
//! rise in UDP share of at least `T_r`, fires the corresponding classifier.

mod classify;
mod detector;
pub mod entropy;
mod frames;

use std::io::Write;

pub use classify::{classify_entropy, classify_ratio, combine, Base, Combiner, DetectorConfig};
pub use detector::{
    detect, evaluate_window, modal_target, window_values, AttackReport, Classifier, Detector, Evidence,
    FrameIndicators, WindowValue,
};
pub use entropy::{shannon_entropy, EntropyAccumulator};
pub use frames::{assign_frames, dst_ip_aggregate, udp_tcp_ratio, FrameAggregator, FrameFlows, FrameStats};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectionError {
    #[error("timestamp {timestamp} precedes {previous}")]
    UnorderedInput { previous: f64, timestamp: f64 },
    #[error("need {needed} frames of history, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

pub const FRAME_CSV_HEADER: [&str; 10] = [
    "frame_index",
    "start",
    "udp_flows",
    "tcp_flows",
    "udp_pkts",
    "tcp_pkts",
    "H_srcport_flow",
    "H_srcport_pkt",
    "H_dstip",
    "udp_ratio",
];

/// Writes one CSV row per frame.
pub fn write_frame_csv<W: Write>(frames: &[FrameStats], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRAME_CSV_HEADER)?;
    for f in frames {
        w.write_record([
            f.index.to_string(),
            f.start.to_string(),
            f.udp_flow_count.to_string(),
            f.tcp_flow_count.to_string(),
            f.udp_packet_count.to_string(),
            f.tcp_packet_count.to_string(),
            format!("{:.6}", f.entropy_src_port_flows),
            format!("{:.6}", f.entropy_src_port_packets),
            format!("{:.6}", f.entropy_dst_ip),
            format!("{:.6}", f.udp_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let mut buf = Vec::new();
        write_frame_csv(&[FrameStats { index: 3, start: 30.0, length: 10.0, ..Default::default() }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), FRAME_CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "3,30,0,0,0,0,0.000000,0.000000,0.000000,0.000000");
    }
}
