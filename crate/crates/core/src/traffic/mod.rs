//! Synthetic traffic: a diurnal benign mix, reflective attack injection and
//! pcap file I/O.

mod attack;
mod benign;
pub mod pcap;

use std::net::Ipv4Addr;

pub use attack::{inject_attack, AttackInjector, AttackSpec};
pub use benign::{is_public_unicast, BenignGenerator, BenignProfile, SERVICE_PORTS};
pub use pcap::{read_pcap, write_pcap, PcapHeader, PcapReader, PcapWriter};

use crate::kv::KvError;
use crate::packet::{FlowKey, IpProtocol, MacAddr, PacketHeaderView};

#[derive(Debug, thiserror::Error)]
pub enum TrafficError {
    #[error("invalid traffic profile: {0}")]
    InvalidProfile(String),
    #[error("invalid attack: {0}")]
    InvalidAttack(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("unsupported pcap link type {0}")]
    UnsupportedLinkType(u32),
}

/// Ground truth carried by simulated packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Benign,
    Attack,
    /// Request sent by the protected host on the attack port.
    TargetRequest,
    /// Server response to a request the target really sent.
    LegitimateResponse,
    /// Request sent to the target by someone else.
    IncomingRequest,
    /// Response sent by the target.
    TargetResponse,
}

/// A packet reduced to timestamp, flow key and label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimPacket {
    pub ts: f64,
    pub key: FlowKey,
    pub label: Label,
}

/// Locally administered MAC derived from an address.
pub fn host_mac(ip: Ipv4Addr) -> MacAddr {
    let o = ip.octets();
    MacAddr::new(0x02, 0x00, o[0], o[1], o[2], o[3])
}

impl SimPacket {
    /// Full header view; TCP keys become TCP segments, everything else UDP.
    pub fn to_view(&self) -> PacketHeaderView {
        let k = &self.key;
        let src = (k.src_ip, k.src_port);
        let dst = (k.dst_ip, k.dst_port);
        let mut v = match k.protocol {
            IpProtocol::Tcp => PacketHeaderView::tcp_packet(self.ts, src, dst),
            _ => PacketHeaderView::udp_packet(self.ts, src, dst),
        };
        v.eth_src = host_mac(k.src_ip);
        v.eth_dst = host_mac(k.dst_ip);
        v
    }
}
