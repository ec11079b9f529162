use std::net::Ipv4Addr;

use drdos_defense::packet::{
    parse_frame, serialize_frame, Arp, IpProtocol, Ipv4, MacAddr, Network, PacketHeaderView, TcpHeader, Transport,
    UdpHeader,
};
use proptest::prelude::*;

fn mac() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_map(MacAddr)
}

fn addr() -> impl Strategy<Value = Ipv4Addr> {
    any::<u32>().prop_map(Ipv4Addr::from)
}

fn words(max: usize) -> impl Strategy<Value = Vec<u8>> {
    (0..=max / 4).prop_flat_map(|n| prop::collection::vec(any::<u8>(), n * 4))
}

fn transport() -> impl Strategy<Value = Transport> {
    prop_oneof![
        (any::<u16>(), any::<u16>()).prop_map(|(s, d)| Transport::Udp(UdpHeader::new(s, d))),
        (any::<u16>(), any::<u16>(), any::<u32>(), any::<u32>(), 0u16..0x1000, any::<u16>(), any::<u16>(), words(40))
            .prop_map(|(s, d, seq, ack, flags, window, urgent, options)| {
                Transport::Tcp(TcpHeader { seq, ack, flags, window, urgent, options, ..TcpHeader::new(s, d) })
            }),
        Just(Transport::None),
    ]
}

fn ipv4() -> impl Strategy<Value = Ipv4> {
    (addr(), addr(), transport(), any::<u8>(), any::<u16>(), any::<bool>(), 1u8.., words(40)).prop_map(
        |(src, dst, transport, dscp_ecn, identification, df, ttl, options)| {
            let mut ip = Ipv4::new(src, dst, transport);
            ip.dscp_ecn = dscp_ecn;
            ip.identification = identification;
            ip.flags_fragment = if df { Ipv4::DONT_FRAGMENT } else { 0 };
            ip.ttl = ttl;
            ip.options = options;
            if ip.transport == Transport::None {
                ip.protocol = IpProtocol::Other(47);
            }
            ip
        },
    )
}

fn arp() -> impl Strategy<Value = Arp> {
    (mac(), addr(), mac(), addr(), 1u16..=2).prop_map(|(sha, spa, tha, tpa, op)| Arp {
        op,
        tha,
        ..Arp::request(sha, spa, tpa)
    })
}

fn frame() -> impl Strategy<Value = PacketHeaderView> {
    let network = prop_oneof![
        6 => ipv4().prop_map(Network::Ipv4),
        2 => arp().prop_map(Network::Arp),
        1 => (0x0801u16..0x0805).prop_map(Network::Other),
    ];
    (mac(), mac(), network, prop::collection::vec(any::<u8>(), 0..64), prop::collection::vec(0u8..1, 0..8)).prop_map(
        |(src, dst, network, payload, trailer)| {
            let trailer = if matches!(network, Network::Ipv4(_)) { trailer } else { Vec::new() };
            PacketHeaderView { payload, trailer, ..PacketHeaderView::new(0.0, src, dst, network) }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn serialize_parse_serialize_is_identity(view in frame()) {
        let bytes = serialize_frame(&view);
        prop_assert_eq!(bytes.len(), view.frame_len());
        let parsed = parse_frame(&bytes, 0.0).unwrap();
        prop_assert_eq!(&serialize_frame(&parsed), &bytes);
        prop_assert_eq!(&parsed.eth_src, &view.eth_src);
        // ARP padding may be read back as trailer rather than payload
        prop_assert_eq!([&parsed.payload[..], &parsed.trailer[..]].concat(), [&view.payload[..], &view.trailer[..]].concat());
    }

    #[test]
    fn rewrite_keeps_checksums_valid(view in frame(), new_src in addr(), new_dst in addr()) {
        let mut parsed = parse_frame(&serialize_frame(&view), 0.0).unwrap();
        let Some(ip) = parsed.ipv4_mut() else { return Ok(()) };
        ip.set_src(new_src);
        ip.set_dst(new_dst);
        // stored (incrementally patched) checksums equal freshly computed ones
        let reparsed = parse_frame(&serialize_frame(&parsed), 0.0).unwrap();
        prop_assert_eq!(reparsed, parsed);
    }
}

#[test]
fn dns_response_frame() {
    let mut view =
        PacketHeaderView::udp_packet(1.5, (Ipv4Addr::new(8, 8, 8, 8), 53), (Ipv4Addr::new(10, 0, 0, 7), 40000));
    view.payload = vec![
        0x12, 0x34, 0x81, 0x80, 0, 1, 0, 1, 0, 0, 0, 0, 7, b'e', b'x', b'a', b'm', b'p', b'l', b'e', 3, b'c', b'o',
        b'm', 0, 0, 1, 0, 1, 0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0x0e, 0x10, 0, 4, 93, 184, 216, 34,
    ];
    let bytes = serialize_frame(&view);
    assert_eq!(&bytes[12..14], &[0x08, 0x00]);
    assert_eq!(&bytes[34..36], &53u16.to_be_bytes());
    let parsed = parse_frame(&bytes, 1.5).unwrap();
    assert_eq!(parsed.udp().unwrap().src_port, 53);
    assert_eq!(serialize_frame(&parsed), bytes);
}
