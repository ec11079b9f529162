use std::net::Ipv4Addr;

use super::{MitigationError, MitigationPlan, Variant};
use crate::flow::{output_to_target, Action, Disposition, EntryId, FlowEntry, MatchPattern, SetField, Terminal};
use crate::packet::{MacAddr, PacketHeaderView, ARP_REPLY, ARP_REQUEST, ETHERTYPE_ARP, ETHERTYPE_IPV4};

const TOP_PRIORITY: u16 = 1000;

fn ipv4() -> MatchPattern {
    MatchPattern::any().ether_type(ETHERTYPE_IPV4)
}

/// Rule program for `plan`, highest priority first. Ids are
/// `<target>/<generation>/<row>`, so a rotation never reuses an id.
pub fn compile_rules(plan: &MitigationPlan) -> Vec<FlowEntry> {
    let t = plan.target.ip;
    let a = plan.alias_ip;
    let p = plan.attack_port;
    let to_target = Terminal::OutputTarget(t);
    let prev = plan.previous_alias.map(|pa| pa.ip);

    let mut rows: Vec<(String, MatchPattern, Action)> = Vec::with_capacity(8);
    match plan.variant {
        Variant::ControllerAssisted => {
            rows.push(("r1".into(), ipv4().ipv4_src(t).udp_dst(p), Action::terminal(Terminal::ToController)));
            rows.push(("r2".into(), ipv4().ipv4_src(t).udp_src(p), Action::terminal(to_target)));
            rows.push(("r3".into(), ipv4().ipv4_dst(t).udp_dst(p), Action::terminal(to_target)));
            rows.push(("r4".into(), ipv4().ipv4_dst(t).udp_src(p), Action::terminal(Terminal::Drop)));
            rows.push(("r5".into(), ipv4().ipv4_dst(a).udp_src(p), Action::terminal(Terminal::ToController)));
            if let Some(old) = prev {
                rows.push((
                    "r5-prev".into(),
                    ipv4().ipv4_dst(old).udp_src(p),
                    Action::terminal(Terminal::ToController),
                ));
            }
            rows.push((
                "r6".into(),
                MatchPattern::any().ether_type(ETHERTYPE_ARP),
                Action::terminal(Terminal::ToController),
            ));
        }
        Variant::SwitchOnly => {
            rows.push((
                "r1".into(),
                ipv4().ipv4_src(t).udp_dst(p),
                Action::rewrite(vec![SetField::Ipv4Src(a)], to_target),
            ));
            rows.push(("r2".into(), ipv4().ipv4_src(t).udp_src(p), Action::terminal(to_target)));
            rows.push(("r3".into(), ipv4().ipv4_dst(t).udp_dst(p), Action::terminal(to_target)));
            rows.push(("r4".into(), ipv4().ipv4_dst(t).udp_src(p), Action::terminal(Terminal::Drop)));
            let response =
                |alias| (ipv4().ipv4_dst(alias).udp_src(p), Action::rewrite(vec![SetField::Ipv4Dst(t)], to_target));
            let arp = |alias| {
                let mac = plan.target.mac;
                (
                    MatchPattern::any().ether_type(ETHERTYPE_ARP).arp_op(ARP_REQUEST).arp_tpa(alias),
                    Action::rewrite(
                        vec![
                            SetField::EthSrc(mac),
                            SetField::EthDst(MacAddr::BROADCAST),
                            SetField::ArpOp(ARP_REPLY),
                            SetField::ArpSpa(alias),
                            SetField::ArpSha(mac),
                            SetField::ArpTpa(plan.target.subnet_broadcast()),
                            SetField::ArpTha(MacAddr::BROADCAST),
                        ],
                        to_target,
                    ),
                )
            };
            let (m, act) = response(a);
            rows.push(("r5".into(), m, act));
            if let Some(old) = prev {
                let (m, act) = response(old);
                rows.push(("r5-prev".into(), m, act));
            }
            let (m, act) = arp(a);
            rows.push(("r6".into(), m, act));
            if let Some(old) = prev {
                let (m, act) = arp(old);
                rows.push(("r6-prev".into(), m, act));
            }
        }
    }

    rows.into_iter()
        .enumerate()
        .map(|(i, (row, pattern, action))| FlowEntry {
            id: EntryId(format!("{t}/{}/{row}", plan.generation)),
            priority: TOP_PRIORITY - i as u16,
            pattern,
            action,
        })
        .collect()
}

/// Controller side of the controller-assisted program.
///
/// Requests from the target to the attack port leave with the alias as
/// source; responses to an accepted alias are handed to the target; ARP
/// requests for an alias are answered. Everything else is forwarded as is.
pub fn controller_nat(plan: &MitigationPlan, view: &PacketHeaderView) -> Disposition {
    let target = plan.target.ip;
    if let Some(arp) = view.arp() {
        if arp.op == ARP_REQUEST && plan.is_alias(arp.tpa) {
            if let Ok(reply) = synthesize_arp_reply(plan, view) {
                return Disposition::EmittedReply(reply);
            }
        }
        return Disposition::ForwardedNormal(view.clone());
    }
    let (Some(ip), Some(udp)) = (view.ipv4(), view.udp()) else {
        return Disposition::ForwardedNormal(view.clone());
    };
    if ip.src == target && udp.dst_port == plan.attack_port {
        let mut out = view.clone();
        if let Some(ip) = out.ipv4_mut() {
            ip.set_src(plan.alias_ip);
        }
        return output_to_target(out, target);
    }
    if udp.src_port == plan.attack_port && plan.is_alias(ip.dst) {
        let mut out = view.clone();
        if let Some(ip) = out.ipv4_mut() {
            ip.set_dst(target);
        }
        return output_to_target(out, target);
    }
    Disposition::ForwardedNormal(view.clone())
}

/// Answers an ARP request for one of the plan's aliases on behalf of the
/// target. The reply is broadcast and names the target's subnet broadcast
/// address as its protocol target.
pub fn synthesize_arp_reply(
    plan: &MitigationPlan,
    view: &PacketHeaderView,
) -> Result<PacketHeaderView, MitigationError> {
    let queried: Ipv4Addr = match view.arp() {
        Some(arp) if arp.op == ARP_REQUEST => arp.tpa,
        _ => return Err(MitigationError::NotAnArpRequest),
    };
    if !plan.is_alias(queried) {
        return Err(MitigationError::NotAnAlias(queried));
    }
    let mac = plan.target.mac;
    let mut reply = view.clone();
    reply.eth_src = mac;
    reply.eth_dst = MacAddr::BROADCAST;
    let arp = reply.arp_mut().expect("checked above");
    arp.op = ARP_REPLY;
    arp.spa = queried;
    arp.sha = mac;
    arp.tpa = plan.target.subnet_broadcast();
    arp.tha = MacAddr::BROADCAST;
    Ok(reply)
}
