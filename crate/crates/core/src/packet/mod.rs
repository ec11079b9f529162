//! Packet, flow and host types shared by every pipeline stage.
//!
//! A [`PacketHeaderView`] is an owned, decoded Ethernet frame. The network
//! layer is an enum, so a view can never carry both an ARP and an IPv4 record,
//! and a transport header can only exist inside an IPv4 record.

pub mod checksum;
mod wire;

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;

pub use wire::{parse_frame, serialize_frame};

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_ARP: u16 = 0x0806;

pub const ARP_REQUEST: u16 = 1;
pub const ARP_REPLY: u16 = 2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("invalid MAC address `{0}`")]
    InvalidMac(String),
}

/// 48-bit Ethernet hardware address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);
    pub const ZERO: MacAddr = MacAddr([0; 6]);

    pub const fn new(a: u8, b: u8, c: u8, d: u8, e: u8, f: u8) -> Self {
        MacAddr([a, b, c, d, e, f])
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", o[0], o[1], o[2], o[3], o[4], o[5])
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = PacketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(|| PacketError::InvalidMac(s.into()))?;
            if part.len() != 2 {
                return Err(PacketError::InvalidMac(s.into()));
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| PacketError::InvalidMac(s.into()))?;
        }
        if parts.next().is_some() {
            return Err(PacketError::InvalidMac(s.into()));
        }
        Ok(MacAddr(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IpProtocol {
    Tcp,
    Udp,
    Other(u8),
}

impl IpProtocol {
    pub fn number(self) -> u8 {
        match self {
            IpProtocol::Tcp => 6,
            IpProtocol::Udp => 17,
            IpProtocol::Other(n) => n,
        }
    }

    pub fn from_number(n: u8) -> Self {
        match n {
            6 => IpProtocol::Tcp,
            17 => IpProtocol::Udp,
            n => IpProtocol::Other(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    /// Wire length field. Only kept verbatim for fragmented datagrams,
    /// otherwise recomputed on serialization.
    pub length: u16,
    pub checksum: u16,
}

impl UdpHeader {
    pub fn new(src_port: u16, dst_port: u16) -> Self {
        UdpHeader { src_port, dst_port, length: 0, checksum: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    /// Reserved bits and flags (low 12 bits of the offset/flags word).
    pub flags: u16,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
    /// Options, always a multiple of four bytes.
    pub options: Vec<u8>,
}

impl TcpHeader {
    pub const SYN: u16 = 0x002;
    pub const ACK: u16 = 0x010;

    pub fn new(src_port: u16, dst_port: u16) -> Self {
        TcpHeader {
            src_port,
            dst_port,
            seq: 0,
            ack: 0,
            flags: Self::ACK,
            window: 65535,
            checksum: 0,
            urgent: 0,
            options: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transport {
    Udp(UdpHeader),
    Tcp(TcpHeader),
    /// Fragment tails and protocols without a decoded header.
    None,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ipv4 {
    pub dscp_ecn: u8,
    pub identification: u16,
    /// Flags (top three bits) and fragment offset in 8-byte units.
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: IpProtocol,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub options: Vec<u8>,
    pub transport: Transport,
}

impl Ipv4 {
    pub const MORE_FRAGMENTS: u16 = 0x2000;
    pub const DONT_FRAGMENT: u16 = 0x4000;

    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, transport: Transport) -> Self {
        let protocol = match &transport {
            Transport::Udp(_) => IpProtocol::Udp,
            Transport::Tcp(_) => IpProtocol::Tcp,
            Transport::None => IpProtocol::Other(1),
        };
        Ipv4 {
            dscp_ecn: 0,
            identification: 0,
            flags_fragment: Self::DONT_FRAGMENT,
            ttl: 64,
            protocol,
            checksum: 0,
            src,
            dst,
            options: Vec::new(),
            transport,
        }
    }

    pub fn fragment_offset(&self) -> u16 {
        self.flags_fragment & 0x1fff
    }

    /// A non-first fragment: carries no transport header.
    pub fn is_fragment_tail(&self) -> bool {
        self.fragment_offset() != 0
    }

    /// True for any piece of a fragmented datagram.
    pub fn is_fragmented(&self) -> bool {
        self.flags_fragment & Self::MORE_FRAGMENTS != 0 || self.is_fragment_tail()
    }

    pub fn header_len(&self) -> usize {
        20 + self.options.len()
    }

    pub fn udp(&self) -> Option<&UdpHeader> {
        match &self.transport {
            Transport::Udp(u) => Some(u),
            _ => None,
        }
    }

    pub fn tcp(&self) -> Option<&TcpHeader> {
        match &self.transport {
            Transport::Tcp(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arp {
    pub hardware_type: u16,
    pub protocol_type: u16,
    pub op: u16,
    pub sha: MacAddr,
    pub spa: Ipv4Addr,
    pub tha: MacAddr,
    pub tpa: Ipv4Addr,
}

impl Arp {
    pub fn request(sha: MacAddr, spa: Ipv4Addr, tpa: Ipv4Addr) -> Self {
        Arp { hardware_type: 1, protocol_type: ETHERTYPE_IPV4, op: ARP_REQUEST, sha, spa, tha: MacAddr::ZERO, tpa }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Network {
    Ipv4(Ipv4),
    Arp(Arp),
    /// Any other EtherType; the rest of the frame is kept as payload.
    Other(u16),
}

/// Decoded L2/L3/L4 headers of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketHeaderView {
    /// Capture time in seconds.
    pub timestamp: f64,
    pub eth_dst: MacAddr,
    pub eth_src: MacAddr,
    pub network: Network,
    /// Bytes after the innermost decoded header, bounded by the IPv4 total length.
    pub payload: Vec<u8>,
    /// Bytes past the end of the L3 packet (Ethernet padding).
    pub trailer: Vec<u8>,
}

impl PacketHeaderView {
    pub fn new(timestamp: f64, eth_src: MacAddr, eth_dst: MacAddr, network: Network) -> Self {
        PacketHeaderView { timestamp, eth_dst, eth_src, network, payload: Vec::new(), trailer: Vec::new() }
    }

    pub fn udp_packet(timestamp: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16)) -> Self {
        let ip = Ipv4::new(src.0, dst.0, Transport::Udp(UdpHeader::new(src.1, dst.1)));
        Self::new(timestamp, MacAddr::ZERO, MacAddr::ZERO, Network::Ipv4(ip))
    }

    pub fn tcp_packet(timestamp: f64, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16)) -> Self {
        let ip = Ipv4::new(src.0, dst.0, Transport::Tcp(TcpHeader::new(src.1, dst.1)));
        Self::new(timestamp, MacAddr::ZERO, MacAddr::ZERO, Network::Ipv4(ip))
    }

    pub fn arp_request(timestamp: f64, sha: MacAddr, spa: Ipv4Addr, tpa: Ipv4Addr) -> Self {
        Self::new(timestamp, sha, MacAddr::BROADCAST, Network::Arp(Arp::request(sha, spa, tpa)))
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = payload;
        self
    }

    pub fn ether_type(&self) -> u16 {
        match &self.network {
            Network::Ipv4(_) => ETHERTYPE_IPV4,
            Network::Arp(_) => ETHERTYPE_ARP,
            Network::Other(t) => *t,
        }
    }

    pub fn ipv4(&self) -> Option<&Ipv4> {
        match &self.network {
            Network::Ipv4(ip) => Some(ip),
            _ => None,
        }
    }

    pub fn ipv4_mut(&mut self) -> Option<&mut Ipv4> {
        match &mut self.network {
            Network::Ipv4(ip) => Some(ip),
            _ => None,
        }
    }

    pub fn arp(&self) -> Option<&Arp> {
        match &self.network {
            Network::Arp(arp) => Some(arp),
            _ => None,
        }
    }

    pub fn arp_mut(&mut self) -> Option<&mut Arp> {
        match &mut self.network {
            Network::Arp(arp) => Some(arp),
            _ => None,
        }
    }

    pub fn udp(&self) -> Option<&UdpHeader> {
        self.ipv4().and_then(Ipv4::udp)
    }

    pub fn udp_mut(&mut self) -> Option<&mut UdpHeader> {
        match self.ipv4_mut().map(|ip| &mut ip.transport) {
            Some(Transport::Udp(u)) => Some(u),
            _ => None,
        }
    }

    pub fn tcp(&self) -> Option<&TcpHeader> {
        self.ipv4().and_then(Ipv4::tcp)
    }

    pub fn payload_length(&self) -> usize {
        self.payload.len()
    }

    /// Wire length of the frame `serialize_frame` would emit.
    pub fn frame_len(&self) -> usize {
        let l3 = match &self.network {
            Network::Ipv4(ip) => {
                ip.header_len()
                    + match &ip.transport {
                        Transport::Udp(_) => 8,
                        Transport::Tcp(t) => 20 + t.options.len(),
                        Transport::None => 0,
                    }
            }
            Network::Arp(_) => 28,
            Network::Other(_) => 0,
        };
        14 + l3 + self.payload.len() + self.trailer.len()
    }

    /// True if `addr` appears in any IPv4 or ARP protocol address field.
    pub fn mentions_ip(&self, addr: Ipv4Addr) -> bool {
        match &self.network {
            Network::Ipv4(ip) => ip.src == addr || ip.dst == addr,
            Network::Arp(arp) => arp.spa == addr || arp.tpa == addr,
            Network::Other(_) => false,
        }
    }
}

/// Unidirectional 5-tuple. Ports are zero when there is no L4 header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub protocol: IpProtocol,
    pub src_port: u16,
    pub dst_port: u16,
}

impl FlowKey {
    pub fn udp(src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16)) -> Self {
        FlowKey { src_ip: src.0, dst_ip: dst.0, protocol: IpProtocol::Udp, src_port: src.1, dst_port: dst.1 }
    }
}

/// The flow a packet belongs to, `None` for frames without an IPv4 header.
pub fn flow_key_of(view: &PacketHeaderView) -> Option<FlowKey> {
    let ip = view.ipv4()?;
    let (src_port, dst_port) = match &ip.transport {
        Transport::Udp(u) => (u.src_port, u.dst_port),
        Transport::Tcp(t) => (t.src_port, t.dst_port),
        Transport::None => (0, 0),
    };
    Some(FlowKey { src_ip: ip.src, dst_ip: ip.dst, protocol: ip.protocol, src_port, dst_port })
}

/// Addressing of a protected host.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HostIdentity {
    pub ip: Ipv4Addr,
    pub mac: MacAddr,
    pub subnet_prefix_length: u8,
}

impl HostIdentity {
    pub fn new(ip: Ipv4Addr, mac: MacAddr, subnet_prefix_length: u8) -> Self {
        assert!(subnet_prefix_length <= 32, "prefix length out of range");
        HostIdentity { ip, mac, subnet_prefix_length }
    }

    pub fn subnet(&self) -> Ipv4Net {
        Ipv4Net::new(self.ip, self.subnet_prefix_length).expect("prefix length checked on construction").trunc()
    }

    /// All-ones host address of the host's subnet.
    pub fn subnet_broadcast(&self) -> Ipv4Addr {
        self.subnet().broadcast()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_parse_and_display() {
        let mac: MacAddr = "02:00:5e:10:00:0a".parse().unwrap();
        assert_eq!(mac.to_string(), "02:00:5e:10:00:0a");
        assert!("02:00:5e:10:00".parse::<MacAddr>().is_err());
        assert!("02:00:5e:10:00:0a:01".parse::<MacAddr>().is_err());
        assert!("zz:00:5e:10:00:0a".parse::<MacAddr>().is_err());
    }

    #[test]
    fn broadcast_of_subnet() {
        let host = HostIdentity::new(Ipv4Addr::new(192, 0, 2, 10), MacAddr::ZERO, 24);
        assert_eq!(host.subnet_broadcast(), Ipv4Addr::new(192, 0, 2, 255));
        let host = HostIdentity::new(Ipv4Addr::new(10, 1, 2, 3), MacAddr::ZERO, 20);
        assert_eq!(host.subnet_broadcast(), Ipv4Addr::new(10, 1, 15, 255));
    }

    #[test]
    fn flow_keys() {
        let a = (Ipv4Addr::new(10, 0, 0, 5), 53);
        let b = (Ipv4Addr::new(10, 0, 0, 9), 4444);
        let p = PacketHeaderView::udp_packet(0.0, a, b);
        let q = PacketHeaderView::udp_packet(1.0, a, b);
        assert_eq!(flow_key_of(&p), flow_key_of(&q));

        let back = PacketHeaderView::udp_packet(0.0, b, a);
        assert_ne!(flow_key_of(&p), flow_key_of(&back));

        let icmp = Ipv4::new(a.0, b.0, Transport::None);
        let icmp = PacketHeaderView::new(0.0, MacAddr::ZERO, MacAddr::ZERO, Network::Ipv4(icmp));
        let key = flow_key_of(&icmp).unwrap();
        assert_eq!((key.src_port, key.dst_port), (0, 0));
        assert_eq!(key.protocol, IpProtocol::Other(1));

        let arp = PacketHeaderView::arp_request(0.0, MacAddr::ZERO, a.0, b.0);
        assert_eq!(flow_key_of(&arp), None);
    }
}
