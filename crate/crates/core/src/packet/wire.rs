use std::net::Ipv4Addr;

use super::checksum;
use super::{
    Arp, IpProtocol, Ipv4, MacAddr, Network, PacketError, PacketHeaderView, TcpHeader, Transport, UdpHeader,
    ETHERTYPE_ARP, ETHERTYPE_IPV4,
};

const ETH_HEADER: usize = 14;
const ARP_BODY: usize = 28;

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn mac(b: &[u8], at: usize) -> MacAddr {
    let mut m = [0u8; 6];
    m.copy_from_slice(&b[at..at + 6]);
    MacAddr(m)
}

fn ip(b: &[u8], at: usize) -> Ipv4Addr {
    Ipv4Addr::new(b[at], b[at + 1], b[at + 2], b[at + 3])
}

/// Decodes an Ethernet frame.
///
/// Unknown EtherTypes produce a view with only L2 fields; the remainder of
/// the frame becomes the payload.
pub fn parse_frame(bytes: &[u8], timestamp: f64) -> Result<PacketHeaderView, PacketError> {
    if bytes.len() < ETH_HEADER {
        return Err(PacketError::MalformedFrame("shorter than an Ethernet header"));
    }
    let eth_dst = mac(bytes, 0);
    let eth_src = mac(bytes, 6);
    let ether_type = be16(bytes, 12);
    let body = &bytes[ETH_HEADER..];

    let mut view = PacketHeaderView::new(timestamp, eth_src, eth_dst, Network::Other(ether_type));
    match ether_type {
        ETHERTYPE_IPV4 => {
            let (ipv4, payload, trailer) = parse_ipv4(body)?;
            view.network = Network::Ipv4(ipv4);
            view.payload = payload.to_vec();
            view.trailer = trailer.to_vec();
        }
        ETHERTYPE_ARP => {
            if body.len() < ARP_BODY {
                return Err(PacketError::MalformedFrame("truncated ARP packet"));
            }
            if body[4] != 6 || body[5] != 4 {
                return Err(PacketError::MalformedFrame("ARP address lengths are not Ethernet/IPv4"));
            }
            view.network = Network::Arp(Arp {
                hardware_type: be16(body, 0),
                protocol_type: be16(body, 2),
                op: be16(body, 6),
                sha: mac(body, 8),
                spa: ip(body, 14),
                tha: mac(body, 18),
                tpa: ip(body, 24),
            });
            view.trailer = body[ARP_BODY..].to_vec();
        }
        _ => view.payload = body.to_vec(),
    }
    Ok(view)
}

fn parse_ipv4(body: &[u8]) -> Result<(Ipv4, &[u8], &[u8]), PacketError> {
    if body.len() < 20 {
        return Err(PacketError::MalformedFrame("truncated IPv4 header"));
    }
    if body[0] >> 4 != 4 {
        return Err(PacketError::MalformedFrame("IP version is not 4"));
    }
    let header_len = usize::from(body[0] & 0x0f) * 4;
    if header_len < 20 {
        return Err(PacketError::MalformedFrame("IPv4 header length below minimum"));
    }
    let total_length = usize::from(be16(body, 2));
    if total_length < header_len {
        return Err(PacketError::MalformedFrame("IPv4 total length below header length"));
    }
    if body.len() < header_len || body.len() < total_length {
        return Err(PacketError::MalformedFrame("IPv4 packet extends past the buffer"));
    }
    let packet = &body[..total_length];
    let trailer = &body[total_length..];

    let mut ipv4 = Ipv4 {
        dscp_ecn: body[1],
        identification: be16(body, 4),
        flags_fragment: be16(body, 6),
        ttl: body[8],
        protocol: IpProtocol::from_number(body[9]),
        checksum: be16(body, 10),
        src: ip(body, 12),
        dst: ip(body, 16),
        options: body[20..header_len].to_vec(),
        transport: Transport::None,
    };
    let segment = &packet[header_len..];
    if ipv4.is_fragment_tail() {
        return Ok((ipv4, segment, trailer));
    }
    let payload = match ipv4.protocol {
        IpProtocol::Udp => {
            if segment.len() < 8 {
                return Err(PacketError::MalformedFrame("truncated UDP header"));
            }
            ipv4.transport = Transport::Udp(UdpHeader {
                src_port: be16(segment, 0),
                dst_port: be16(segment, 2),
                length: be16(segment, 4),
                checksum: be16(segment, 6),
            });
            &segment[8..]
        }
        IpProtocol::Tcp => {
            if segment.len() < 20 {
                return Err(PacketError::MalformedFrame("truncated TCP header"));
            }
            let offset_flags = be16(segment, 12);
            let data_offset = usize::from(offset_flags >> 12) * 4;
            if data_offset < 20 || segment.len() < data_offset {
                return Err(PacketError::MalformedFrame("bad TCP data offset"));
            }
            ipv4.transport = Transport::Tcp(TcpHeader {
                src_port: be16(segment, 0),
                dst_port: be16(segment, 2),
                seq: be32(segment, 4),
                ack: be32(segment, 8),
                flags: offset_flags & 0x0fff,
                window: be16(segment, 14),
                checksum: be16(segment, 16),
                urgent: be16(segment, 18),
                options: segment[20..data_offset].to_vec(),
            });
            &segment[data_offset..]
        }
        IpProtocol::Other(_) => segment,
    };
    Ok((ipv4, payload, trailer))
}

/// Encodes a view as an Ethernet frame.
///
/// The IPv4 header checksum is always recomputed. TCP/UDP lengths and
/// checksums are recomputed over the pseudo-header unless the datagram is
/// fragmented, in which case the stored values (which cover the whole
/// datagram) are written back.
pub fn serialize_frame(view: &PacketHeaderView) -> Vec<u8> {
    let mut out = Vec::with_capacity(view.frame_len());
    out.extend_from_slice(&view.eth_dst.0);
    out.extend_from_slice(&view.eth_src.0);
    out.extend_from_slice(&view.ether_type().to_be_bytes());
    match &view.network {
        Network::Ipv4(ip) => write_ipv4(&mut out, ip, &view.payload),
        Network::Arp(arp) => {
            out.extend_from_slice(&arp.hardware_type.to_be_bytes());
            out.extend_from_slice(&arp.protocol_type.to_be_bytes());
            out.extend_from_slice(&[6, 4]);
            out.extend_from_slice(&arp.op.to_be_bytes());
            out.extend_from_slice(&arp.sha.0);
            out.extend_from_slice(&arp.spa.octets());
            out.extend_from_slice(&arp.tha.0);
            out.extend_from_slice(&arp.tpa.octets());
            out.extend_from_slice(&view.payload);
        }
        Network::Other(_) => out.extend_from_slice(&view.payload),
    }
    out.extend_from_slice(&view.trailer);
    out
}

fn write_ipv4(out: &mut Vec<u8>, ip: &Ipv4, payload: &[u8]) {
    let mut segment = Vec::new();
    match &ip.transport {
        Transport::Udp(udp) => {
            segment.extend_from_slice(&udp.src_port.to_be_bytes());
            segment.extend_from_slice(&udp.dst_port.to_be_bytes());
            let length = if ip.is_fragmented() { udp.length } else { (8 + payload.len()) as u16 };
            segment.extend_from_slice(&length.to_be_bytes());
            segment.extend_from_slice(&[0, 0]);
            segment.extend_from_slice(payload);
            let csum = if ip.is_fragmented() {
                udp.checksum
            } else {
                match checksum::transport(ip.src, ip.dst, 17, &segment) {
                    0 => 0xffff,
                    c => c,
                }
            };
            segment[6..8].copy_from_slice(&csum.to_be_bytes());
        }
        Transport::Tcp(tcp) => {
            segment.extend_from_slice(&tcp.src_port.to_be_bytes());
            segment.extend_from_slice(&tcp.dst_port.to_be_bytes());
            segment.extend_from_slice(&tcp.seq.to_be_bytes());
            segment.extend_from_slice(&tcp.ack.to_be_bytes());
            let data_offset = ((20 + tcp.options.len()) / 4) as u16;
            segment.extend_from_slice(&((data_offset << 12) | (tcp.flags & 0x0fff)).to_be_bytes());
            segment.extend_from_slice(&tcp.window.to_be_bytes());
            segment.extend_from_slice(&[0, 0]);
            segment.extend_from_slice(&tcp.urgent.to_be_bytes());
            segment.extend_from_slice(&tcp.options);
            segment.extend_from_slice(payload);
            let csum = if ip.is_fragmented() { tcp.checksum } else { checksum::transport(ip.src, ip.dst, 6, &segment) };
            segment[16..18].copy_from_slice(&csum.to_be_bytes());
        }
        Transport::None => segment.extend_from_slice(payload),
    }

    let header_len = ip.header_len();
    let start = out.len();
    out.push(0x40 | (header_len / 4) as u8);
    out.push(ip.dscp_ecn);
    out.extend_from_slice(&((header_len + segment.len()) as u16).to_be_bytes());
    out.extend_from_slice(&ip.identification.to_be_bytes());
    out.extend_from_slice(&ip.flags_fragment.to_be_bytes());
    out.push(ip.ttl);
    out.push(ip.protocol.number());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&ip.src.octets());
    out.extend_from_slice(&ip.dst.octets());
    out.extend_from_slice(&ip.options);
    let csum = checksum::ipv4_header(&out[start..]);
    out[start + 10..start + 12].copy_from_slice(&csum.to_be_bytes());
    out.extend_from_slice(&segment);
}

impl Ipv4 {
    /// Rewrites the source address, patching the stored header and
    /// transport checksums incrementally.
    pub fn set_src(&mut self, addr: Ipv4Addr) {
        let old = self.src;
        self.src = addr;
        self.patch_checksums(old, addr);
    }

    /// Rewrites the destination address, patching stored checksums.
    pub fn set_dst(&mut self, addr: Ipv4Addr) {
        let old = self.dst;
        self.dst = addr;
        self.patch_checksums(old, addr);
    }

    fn patch_checksums(&mut self, old: Ipv4Addr, new: Ipv4Addr) {
        let (old, new) = (u32::from(old), u32::from(new));
        self.checksum = checksum::update_u32(self.checksum, old, new);
        match &mut self.transport {
            // A zero UDP checksum means "not computed" and stays that way.
            Transport::Udp(u) if u.checksum != 0 => {
                u.checksum = match checksum::update_u32(u.checksum, old, new) {
                    0 => 0xffff,
                    c => c,
                }
            }
            Transport::Tcp(t) => t.checksum = checksum::update_u32(t.checksum, old, new),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arp_request_frame() -> Vec<u8> {
        let mut f = vec![0xff; 6];
        f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        f.extend_from_slice(&[0x08, 0x06]);
        f.extend_from_slice(&[0, 1, 0x08, 0, 6, 4, 0, 1]);
        f.extend_from_slice(&[0x02, 0, 0, 0, 0, 0x01]);
        f.extend_from_slice(&[192, 0, 2, 1]);
        f.extend_from_slice(&[0; 6]);
        f.extend_from_slice(&[192, 0, 2, 77]);
        f.resize(60, 0);
        f
    }

    #[test]
    fn parses_arp_request() {
        let frame = arp_request_frame();
        let view = parse_frame(&frame, 1.5).unwrap();
        let arp = view.arp().unwrap();
        assert_eq!(arp.op, 1);
        assert_eq!(arp.tpa, Ipv4Addr::new(192, 0, 2, 77));
        assert!(view.ipv4().is_none());
        assert_eq!(view.trailer.len(), 18);
        assert_eq!(serialize_frame(&view), frame);
    }

    #[test]
    fn parses_udp_ports() {
        let view =
            PacketHeaderView::udp_packet(0.0, (Ipv4Addr::new(10, 0, 0, 5), 53), (Ipv4Addr::new(10, 0, 0, 9), 4444))
                .with_payload(b"abc".to_vec());
        let bytes = serialize_frame(&view);
        let back = parse_frame(&bytes, 0.0).unwrap();
        let udp = back.udp().unwrap();
        assert_eq!((udp.src_port, udp.dst_port), (53, 4444));
        assert_eq!(back.payload, b"abc");
        assert_eq!(serialize_frame(&back), bytes);
    }

    #[test]
    fn rejects_short_and_truncated() {
        assert!(matches!(parse_frame(&[0; 13], 0.0), Err(PacketError::MalformedFrame(_))));
        let mut arp = arp_request_frame();
        arp.truncate(14 + 20);
        assert!(parse_frame(&arp, 0.0).is_err());

        let view =
            PacketHeaderView::udp_packet(0.0, (Ipv4Addr::new(10, 0, 0, 5), 53), (Ipv4Addr::new(10, 0, 0, 9), 4444));
        let bytes = serialize_frame(&view);
        assert!(parse_frame(&bytes[..14 + 24], 0.0).is_err());
    }

    #[test]
    fn unknown_ethertype_keeps_l2_only() {
        let mut f = vec![1u8; 12];
        f.extend_from_slice(&[0x86, 0xdd]);
        f.extend_from_slice(&[9; 40]);
        let view = parse_frame(&f, 0.0).unwrap();
        assert_eq!(view.ether_type(), 0x86dd);
        assert!(view.ipv4().is_none() && view.arp().is_none());
        assert_eq!(serialize_frame(&view), f);
    }

    #[test]
    fn fragment_tail_has_no_transport() {
        let mut ip = Ipv4::new(Ipv4Addr::new(1, 1, 1, 1), Ipv4Addr::new(2, 2, 2, 2), Transport::None);
        ip.protocol = IpProtocol::Udp;
        ip.flags_fragment = 185;
        let view =
            PacketHeaderView::new(0.0, MacAddr::ZERO, MacAddr::ZERO, Network::Ipv4(ip)).with_payload(vec![7; 16]);
        let back = parse_frame(&serialize_frame(&view), 0.0).unwrap();
        assert!(back.ipv4().unwrap().is_fragment_tail());
        assert!(back.udp().is_none());
        assert_eq!(back.payload.len(), 16);
    }

    #[test]
    fn incremental_rewrite_agrees_with_recompute() {
        let view = PacketHeaderView::udp_packet(
            0.0,
            (Ipv4Addr::new(192, 0, 2, 10), 5555),
            (Ipv4Addr::new(203, 0, 113, 9), 53),
        )
        .with_payload(b"query".to_vec());
        let mut parsed = parse_frame(&serialize_frame(&view), 0.0).unwrap();
        parsed.ipv4_mut().unwrap().set_src(Ipv4Addr::new(198, 51, 100, 77));
        let reparsed = parse_frame(&serialize_frame(&parsed), 0.0).unwrap();
        assert_eq!(parsed.ipv4().unwrap().checksum, reparsed.ipv4().unwrap().checksum);
        assert_eq!(parsed.udp().unwrap().checksum, reparsed.udp().unwrap().checksum);
    }
}
