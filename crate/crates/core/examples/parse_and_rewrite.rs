//! Builds a DNS response frame, parses it back, rewrites its destination
//! and shows that the checksums follow the rewrite.

use std::net::Ipv4Addr;

use drdos_defense::packet::{flow_key_of, parse_frame, serialize_frame, PacketHeaderView};

fn hex(bytes: &[u8]) -> String {
    bytes
        .chunks(16)
        .map(|c| c.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() {
    let server = (Ipv4Addr::new(192, 0, 2, 53), 53);
    let client = (Ipv4Addr::new(203, 0, 113, 77), 41_000);
    let mut view = PacketHeaderView::udp_packet(0.0, server, client);
    view.payload = b"\x12\x34\x81\x80\x00\x01\x00\x01\x00\x00\x00\x00".to_vec();

    let bytes = serialize_frame(&view);
    println!("frame ({} bytes):\n{}", bytes.len(), hex(&bytes));

    let mut parsed = parse_frame(&bytes, 0.0).expect("well-formed frame");
    println!("\nflow key: {:?}", flow_key_of(&parsed).unwrap());
    let ip = parsed.ipv4().unwrap();
    println!("ipv4 checksum {:#06x}, udp checksum {:#06x}", ip.checksum, parsed.udp().unwrap().checksum);

    // alias -> real target, the rewrite the mitigation applies to responses
    parsed.ipv4_mut().unwrap().set_dst(Ipv4Addr::new(198, 51, 100, 8));
    let patched = (parsed.ipv4().unwrap().checksum, parsed.udp().unwrap().checksum);
    let recomputed = parse_frame(&serialize_frame(&parsed), 0.0).unwrap();
    let fresh = (recomputed.ipv4().unwrap().checksum, recomputed.udp().unwrap().checksum);
    println!(
        "after rewrite: stored ipv4 {:#06x} udp {:#06x}, recomputed ipv4 {:#06x} udp {:#06x}",
        patched.0, patched.1, fresh.0, fresh.1
    );
    assert_eq!(patched, fresh);
    assert_eq!(serialize_frame(&recomputed), serialize_frame(&parsed));
}
