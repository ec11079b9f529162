//! Differential check of the two rule programs on randomized packets.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use super::HarnessError;
use crate::flow::{process, Disposition, FlowTable};
use crate::mitigation::{allocate_alias, compile_rules, controller_nat, MitigationPlan, Variant};
use crate::packet::{
    Arp, HostIdentity, IpProtocol, Ipv4, MacAddr, Network, PacketHeaderView, TcpHeader, Transport, UdpHeader,
    ARP_REPLY, ARP_REQUEST,
};

/// A packet the two programs handled differently.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub packet: PacketHeaderView,
    pub controller: Disposition,
    pub switch: Disposition,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EquivalenceReport {
    pub packets: u64,
    pub mismatches: u64,
    /// Packets per matched row of the switch-only table, `miss` for none.
    pub switch_rows: BTreeMap<String, u64>,
    /// Same for the controller-assisted table.
    pub controller_rows: BTreeMap<String, u64>,
    /// The first few mismatches, for diagnosis.
    pub examples: Vec<Mismatch>,
}

struct Tables {
    plan: MitigationPlan,
    controller: FlowTable,
    switch: FlowTable,
}

impl Tables {
    fn new(plan: MitigationPlan) -> Result<Self, HarnessError> {
        let mut controller = FlowTable::new();
        controller.install(compile_rules(&MitigationPlan { variant: Variant::ControllerAssisted, ..plan.clone() }))?;
        let mut switch = FlowTable::new();
        switch.install(compile_rules(&MitigationPlan { variant: Variant::SwitchOnly, ..plan.clone() }))?;
        Ok(Tables { plan, controller, switch })
    }
}

fn row(table: &FlowTable, view: &PacketHeaderView) -> String {
    match table.lookup(view) {
        Some(e) => e.id.0.rsplit('/').next().unwrap_or_default().to_string(),
        None => "miss".into(),
    }
}

fn random_mac(rng: &mut ChaCha8Rng) -> MacAddr {
    let b: [u8; 6] = rng.gen();
    MacAddr::new(b[0] & 0xfe, b[1], b[2], b[3], b[4], b[5])
}

/// Draws packets biased toward the addresses and ports the rules match on,
/// so every row and every overlap between rows is exercised.
struct PacketSource<'a> {
    plan: &'a MitigationPlan,
    rng: ChaCha8Rng,
}

impl PacketSource<'_> {
    fn address(&mut self) -> Ipv4Addr {
        let p = self.plan;
        let mut choices = vec![p.target.ip, p.alias_ip, p.target.subnet_broadcast()];
        if let Some(prev) = p.previous_alias {
            choices.push(prev.ip);
        }
        let r = &mut self.rng;
        match r.gen_range(0..4) {
            0 => Ipv4Addr::from(r.gen::<u32>()),
            1 => Ipv4Addr::from(u32::from(p.target.subnet().network()) + r.gen_range(1..255)),
            _ => *choices.choose(r).expect("non-empty"),
        }
    }

    fn port(&mut self) -> u16 {
        if self.rng.gen_bool(0.5) {
            self.plan.attack_port
        } else {
            self.rng.gen()
        }
    }

    fn packet(&mut self) -> PacketHeaderView {
        let ts = self.rng.gen_range(0.0..1000.0);
        let (src_mac, dst_mac) = (random_mac(&mut self.rng), random_mac(&mut self.rng));
        let kind = self.rng.gen_range(0..100);
        let network = if kind < 15 {
            let mut arp = Arp::request(src_mac, self.address(), self.address());
            arp.op = if self.rng.gen_bool(0.8) { ARP_REQUEST } else { ARP_REPLY };
            if arp.op == ARP_REPLY {
                arp.tha = random_mac(&mut self.rng);
            }
            Network::Arp(arp)
        } else if kind < 18 {
            Network::Other(self.rng.gen())
        } else {
            let (src, dst) = (self.address(), self.address());
            let (sp, dp) = (self.port(), self.port());
            let mut ip = match kind {
                18..=29 => Ipv4::new(src, dst, Transport::Tcp(TcpHeader::new(sp, dp))),
                30..=34 => Ipv4::new(src, dst, Transport::None),
                35..=39 => {
                    // non-first UDP fragment: no ports visible
                    let mut ip = Ipv4::new(src, dst, Transport::None);
                    ip.protocol = IpProtocol::Udp;
                    ip.flags_fragment = self.rng.gen_range(1..0x1fff);
                    ip
                }
                _ => Ipv4::new(src, dst, Transport::Udp(UdpHeader::new(sp, dp))),
            };
            ip.ttl = self.rng.gen_range(1..=255);
            ip.identification = self.rng.gen();
            Network::Ipv4(ip)
        };
        let mut view = PacketHeaderView::new(ts, src_mac, dst_mac, network);
        let len = self.rng.gen_range(0..24);
        view.payload = (0..len).map(|_| self.rng.gen()).collect();
        if self.rng.gen_bool(0.1) {
            view.trailer = vec![0; self.rng.gen_range(1..8)];
        }
        view
    }
}

/// Runs `packets` random packets through both rule programs for a plan
/// protecting `target` (half of them with a previous alias still in its
/// grace period) and compares the dispositions field by field.
pub fn check_equivalence(
    target: HostIdentity,
    alias_subnet: Ipv4Net,
    attack_port: u16,
    packets: u64,
    seed: u64,
) -> Result<EquivalenceReport, HarnessError> {
    let mut alias_rng = ChaCha20Rng::seed_from_u64(seed);
    let alias = allocate_alias(alias_subnet, &[target.ip].into(), &mut alias_rng)?;
    let fresh = MitigationPlan::new(target, alias_subnet, alias, attack_port, Variant::SwitchOnly, 0.0)?;
    let rotated = fresh.rotate(0.0, f64::INFINITY, &mut alias_rng)?;
    let tables = [Tables::new(fresh)?, Tables::new(rotated)?];

    let mut report = EquivalenceReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe9);
    for i in 0..packets {
        let t = &tables[(i % 2) as usize];
        let view = PacketSource { plan: &t.plan, rng: ChaCha8Rng::seed_from_u64(rng.gen()) }.packet();
        let nat_plan = MitigationPlan { variant: Variant::ControllerAssisted, ..t.plan.clone() };
        let nat = |v: &PacketHeaderView| Ok(controller_nat(&nat_plan, v));
        let c = process(&t.controller, &view, Some(&nat))?;
        let s = process(&t.switch, &view, None)?;
        *report.switch_rows.entry(row(&t.switch, &view)).or_insert(0) += 1;
        *report.controller_rows.entry(row(&t.controller, &view)).or_insert(0) += 1;
        report.packets += 1;
        if c != s {
            report.mismatches += 1;
            if report.examples.len() < 10 {
                report.examples.push(Mismatch { packet: view, controller: c, switch: s });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn programs_agree_and_every_row_is_hit() {
        let target = HostIdentity::new(Ipv4Addr::new(198, 51, 100, 8), MacAddr::new(2, 0, 0, 0, 0, 8), 24);
        let r = check_equivalence(target, "203.0.113.0/24".parse().unwrap(), 53, 20_000, 1).unwrap();
        assert_eq!(r.mismatches, 0, "{:?}", r.examples.first());
        for row in ["r1", "r2", "r3", "r4", "r5", "r5-prev", "r6", "r6-prev", "miss"] {
            assert!(r.switch_rows.get(row).copied().unwrap_or(0) > 0, "switch row {row} never hit");
        }
        for row in ["r1", "r2", "r3", "r4", "r5", "r5-prev", "r6", "miss"] {
            assert!(r.controller_rows.get(row).copied().unwrap_or(0) > 0, "controller row {row} never hit");
        }
    }
}
