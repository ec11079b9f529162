//! Runs the frame-based entropy detector over ten minutes of desk-scale
//! traffic with a reflection attack starting at t=300 s.

use std::net::Ipv4Addr;

use drdos_defense::detection::{Detector, DetectorConfig, FrameAggregator, FrameStats};
use drdos_defense::traffic::{inject_attack, AttackSpec, BenignGenerator, BenignProfile};

fn main() {
    let profile = BenignProfile::desk().with_duration(600.0);
    let attack = AttackSpec::new(1.0, 53, vec![Ipv4Addr::new(198, 51, 100, 8)], 300.0, 600.0);
    let config = DetectorConfig { frame_length: 10.0, gap: 5, entropy_threshold: -2.0, ..Default::default() };

    let mut detector = Detector::new(config.clone()).unwrap();
    let mut frames = FrameAggregator::new(config.frame_length);
    let mut completed = Vec::new();
    let packets = inject_attack(BenignGenerator::new(&profile).unwrap(), attack, config.frame_length, 0.0).unwrap();
    for p in packets {
        frames.push(&p.to_view(), &mut |f| completed.push(f)).unwrap();
    }
    completed.extend(frames.finish());

    println!("{:>5} {:>7} {:>8} {:>8} {:>7}  verdict", "frame", "start", "H_src", "H_dst", "ratio");
    for f in &completed {
        let stats = FrameStats::from_flows(f);
        let line = format!(
            "{:>5} {:>7.1} {:>8.3} {:>8.3} {:>7.4}",
            stats.index, stats.start, stats.entropy_src_port_flows, stats.entropy_dst_ip, stats.udp_ratio
        );
        match detector.push(stats) {
            Some(r) => println!(
                "{line}  attack on {}:{} (dH_src {:.2}, dH_dst {:.2}, dratio {:.3})",
                r.target_ip, r.attack_port, r.source_port.delta, r.destination_ip.delta, r.udp_ratio.delta
            ),
            None => println!("{line}"),
        }
    }
}
