//! Writes a minute of desk-scale traffic with an attack on a /29 to a pcap
//! file, reads it back and prints per-frame counts.
//!
//! Usage: `cargo run --example generate_traffic [out.pcap]`

use std::net::Ipv4Addr;

use drdos_defense::detection::assign_frames;
use drdos_defense::traffic::{
    inject_attack, read_pcap, AttackSpec, BenignGenerator, BenignProfile, Label, PcapHeader, PcapWriter,
};

fn main() {
    let path =
        std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("drdos-example.pcap"));
    let profile = BenignProfile::desk().with_duration(60.0).with_seed(9);
    let targets = AttackSpec::subnet_targets(Ipv4Addr::new(198, 51, 100, 8), 8);
    let attack = AttackSpec::new(2.0, 123, targets, 20.0, 40.0);

    let mut writer = PcapWriter::create(&path, PcapHeader::default()).unwrap();
    let (mut total, mut attack_packets) = (0u64, 0u64);
    for p in inject_attack(BenignGenerator::new(&profile).unwrap(), attack, 10.0, 0.0).unwrap() {
        writer.write(&p.to_view()).unwrap();
        total += 1;
        attack_packets += u64::from(p.label == Label::Attack);
    }
    writer.finish().unwrap();
    println!("wrote {total} packets ({attack_packets} attack) to {}", path.display());

    let (views, _, skipped) = read_pcap(&path).unwrap();
    println!("read back {} packets, {skipped} skipped", views.len());
    println!("{:>5} {:>7} {:>7} {:>7} {:>7}", "frame", "pps", "udp", "flows", "ratio");
    for f in assign_frames(&views, 10.0).unwrap() {
        println!(
            "{:>5} {:>7.0} {:>7} {:>7} {:>7.4}",
            f.index,
            (f.udp_packet_count + f.tcp_packet_count) as f64 / f.length,
            f.udp_packet_count,
            f.udp_flow_count,
            f.udp_ratio
        );
    }
}
