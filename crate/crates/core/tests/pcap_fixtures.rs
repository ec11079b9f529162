use std::net::Ipv4Addr;

use drdos_defense::packet::{serialize_frame, MacAddr, PacketHeaderView};
use drdos_defense::traffic::{read_pcap, write_pcap, BenignGenerator, BenignProfile, PcapHeader, PcapReader};

fn arp_frame() -> Vec<u8> {
    let view = PacketHeaderView::arp_request(
        0.0,
        MacAddr::new(2, 0, 0, 0, 0, 1),
        Ipv4Addr::new(198, 51, 100, 1),
        Ipv4Addr::new(198, 51, 100, 8),
    );
    serialize_frame(&view)
}

/// Big-endian, nanosecond-resolution capture written byte by byte.
fn big_endian_nanos(records: &[(u32, u32, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_3c4du32.to_be_bytes());
    out.extend_from_slice(&2u16.to_be_bytes());
    out.extend_from_slice(&4u16.to_be_bytes());
    out.extend_from_slice(&0i32.to_be_bytes());
    out.extend_from_slice(&0u32.to_be_bytes());
    out.extend_from_slice(&65535u32.to_be_bytes());
    out.extend_from_slice(&1u32.to_be_bytes());
    for (sec, nsec, data) in records {
        out.extend_from_slice(&sec.to_be_bytes());
        out.extend_from_slice(&nsec.to_be_bytes());
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
        out.extend_from_slice(data);
    }
    out
}

#[test]
fn reads_big_endian_nanosecond_capture() {
    let arp = arp_frame();
    let garbage = [0u8; 10];
    let bytes = big_endian_nanos(&[(7, 250_000_000, &arp), (8, 0, &garbage), (9, 1, &arp)]);
    let mut reader = PcapReader::new(&bytes[..]).unwrap();
    assert!(reader.header().big_endian && reader.header().nanosecond);
    let views: Vec<_> = reader.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(views.len(), 2);
    assert_eq!(views[0].timestamp, 7.25);
    assert_eq!(views[0].arp().unwrap().tpa, Ipv4Addr::new(198, 51, 100, 8));
    assert!((views[1].timestamp - 9.000_000_001).abs() < 1e-12);
    assert_eq!(reader.skipped(), 1);
}

#[test]
fn truncated_tail_is_counted() {
    let arp = arp_frame();
    let mut bytes = big_endian_nanos(&[(1, 0, &arp), (2, 0, &arp)]);
    bytes.truncate(bytes.len() - 5);
    let mut reader = PcapReader::new(&bytes[..]).unwrap();
    let n = reader.by_ref().filter(|r| r.is_ok()).count();
    assert_eq!(n, 1);
    assert_eq!(reader.skipped(), 1);
}

#[test]
fn generated_traffic_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.pcap");
    let profile = BenignProfile::desk().with_duration(3.0);
    let views: Vec<_> = BenignGenerator::new(&profile).unwrap().map(|p| p.to_view()).collect();
    write_pcap(&path, PcapHeader::default(), &views).unwrap();
    let (back, header, skipped) = read_pcap(&path).unwrap();
    assert_eq!(header, PcapHeader::default());
    assert_eq!(skipped, 0);
    assert_eq!(back.len(), views.len());
    for (a, b) in views.iter().zip(&back) {
        // microsecond files keep time to the microsecond
        assert!((a.timestamp - b.timestamp).abs() <= 5e-7);
        assert_eq!(serialize_frame(a), serialize_frame(b));
    }
}
