//! Walks a controller through activation, a scheduled alias rotation, the
//! grace period and removal, printing what happens to a response sent to
//! each address along the way.

use std::net::Ipv4Addr;

use drdos_defense::mitigation::{MitigationController, MitigationSettings, Variant};
use drdos_defense::packet::{HostIdentity, MacAddr, PacketHeaderView};

fn main() {
    let target = HostIdentity::new(Ipv4Addr::new(198, 51, 100, 8), MacAddr::new(2, 0, 0, 0, 0, 8), 24);
    let server = Ipv4Addr::new(192, 0, 2, 53);
    let settings = MitigationSettings {
        alias_subnet: "203.0.113.0/24".parse().unwrap(),
        variant: Variant::SwitchOnly,
        grace: 5.0,
        rotate_every: Some(30.0),
    };
    let mut ctl = MitigationController::with_seed(settings, 1);
    let mut seen = vec![target.ip];

    let probe = |ctl: &MitigationController, now: f64, seen: &[Ipv4Addr]| {
        for &to in seen {
            let response = PacketHeaderView::udp_packet(now, (server, 53), (to, 40_000));
            println!("  t={now:>5}: response to {to:<14} -> {}", ctl.process(&response).unwrap().kind());
        }
    };

    for now in [0.0, 10.0, 20.0, 40.0, 43.0, 46.0, 75.0] {
        if now == 10.0 {
            let plan = ctl.activate(target, 53, now).unwrap();
            println!("t={now}: activated, alias {}", plan.alias_ip);
        }
        ctl.tick(now).unwrap();
        if let Some(plan) = ctl.plan() {
            if !seen.contains(&plan.alias_ip) {
                seen.push(plan.alias_ip);
                println!("t={now}: alias is now {} (generation {})", plan.alias_ip, plan.generation);
            }
            if let Some(prev) = plan.previous_alias {
                println!("t={now}: {} accepted until {}", prev.ip, prev.expires_at);
            }
        }
        probe(&ctl, now, &seen);
    }
    let removed = ctl.deactivate();
    println!("deactivated, removed {} rules", removed.len());
    probe(&ctl, 80.0, &seen);
}
