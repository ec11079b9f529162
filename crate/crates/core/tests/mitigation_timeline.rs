use std::net::Ipv4Addr;

use drdos_defense::flow::Disposition;
use drdos_defense::mitigation::{MitigationController, MitigationSettings, Variant};
use drdos_defense::packet::{HostIdentity, MacAddr, PacketHeaderView};

const TARGET: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 8);
const SERVER: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 53);
const GATEWAY: Ipv4Addr = Ipv4Addr::new(198, 51, 100, 1);

fn controller(variant: Variant) -> MitigationController {
    let settings = MitigationSettings {
        alias_subnet: "203.0.113.0/24".parse().unwrap(),
        variant,
        grace: 5.0,
        rotate_every: Some(60.0),
    };
    MitigationController::with_seed(settings, 11)
}

fn host() -> HostIdentity {
    HostIdentity::new(TARGET, MacAddr::new(2, 0, 0, 0, 0, 8), 24)
}

fn response(ts: f64, to: Ipv4Addr) -> PacketHeaderView {
    PacketHeaderView::udp_packet(ts, (SERVER, 53), (to, 40_000))
}

fn request(ts: f64) -> PacketHeaderView {
    PacketHeaderView::udp_packet(ts, (TARGET, 40_000), (SERVER, 53))
}

fn delivered_to_target(d: &Disposition) -> bool {
    matches!(d, Disposition::DeliveredToTarget(v) if v.ipv4().map(|ip| ip.dst) == Some(TARGET))
}

#[test]
fn activation_rotation_grace_and_removal() {
    for variant in [Variant::ControllerAssisted, Variant::SwitchOnly] {
        let mut ctl = controller(variant);
        // before activation everything is forwarded unchanged
        let d = ctl.process(&response(1.0, TARGET)).unwrap();
        assert_eq!(d, Disposition::ForwardedNormal(response(1.0, TARGET)));

        ctl.activate(host(), 53, 10.0).unwrap();
        let first = ctl.plan().unwrap().alias_ip;
        let out = ctl.process(&request(11.0)).unwrap();
        assert_eq!(out.view().unwrap().ipv4().unwrap().src, first);
        assert_eq!(ctl.process(&response(11.1, TARGET)).unwrap(), Disposition::Dropped);
        assert!(delivered_to_target(&ctl.process(&response(11.2, first)).unwrap()));

        // the gateway resolves the alias to the target's MAC
        let arp = PacketHeaderView::arp_request(12.0, MacAddr::new(2, 0, 0, 0, 0, 1), GATEWAY, first);
        match ctl.process(&arp).unwrap() {
            Disposition::EmittedReply(r) => assert_eq!(r.arp().unwrap().sha, host().mac),
            other => panic!("{other:?}"),
        }

        ctl.tick(70.0).unwrap();
        let plan = ctl.plan().unwrap().clone();
        let second = plan.alias_ip;
        assert_ne!(first, second);
        assert_eq!(plan.generation, 1);
        assert_eq!(plan.previous_alias.unwrap().ip, first);
        assert_eq!(ctl.process(&request(70.5)).unwrap().view().unwrap().ipv4().unwrap().src, second);
        // old alias still answered inside the grace window
        assert!(delivered_to_target(&ctl.process(&response(74.0, first)).unwrap()));
        assert!(delivered_to_target(&ctl.process(&response(74.0, second)).unwrap()));

        ctl.tick(75.0).unwrap();
        assert!(ctl.plan().unwrap().previous_alias.is_none());
        assert!(!delivered_to_target(&ctl.process(&response(75.5, first)).unwrap()));
        assert!(delivered_to_target(&ctl.process(&response(75.5, second)).unwrap()));

        let removed = ctl.deactivate();
        assert!(!removed.is_empty());
        assert!(ctl.table().snapshot().is_empty());
        assert!(ctl.deactivate().is_empty());
        let d = ctl.process(&response(80.0, TARGET)).unwrap();
        assert_eq!(d, Disposition::ForwardedNormal(response(80.0, TARGET)));
    }
}

#[test]
fn variants_agree_along_the_timeline() {
    let mut a = controller(Variant::ControllerAssisted);
    let mut b = controller(Variant::SwitchOnly);
    let mut aliases = vec![TARGET];
    for step in 0..400 {
        let now = step as f64 * 0.5;
        if step == 20 {
            a.activate(host(), 53, now).unwrap();
            b.activate(host(), 53, now).unwrap();
        }
        a.tick(now).unwrap();
        b.tick(now).unwrap();
        if let Some(p) = a.plan() {
            let q = b.plan().unwrap();
            assert_eq!((p.alias_ip, p.generation, p.previous_alias), (q.alias_ip, q.generation, q.previous_alias));
            if !aliases.contains(&p.alias_ip) {
                aliases.push(p.alias_ip);
            }
        }
        for to in aliases.clone() {
            let r = response(now, to);
            assert_eq!(a.process(&r).unwrap(), b.process(&r).unwrap(), "t={now} to={to}");
        }
        assert_eq!(a.process(&request(now)).unwrap(), b.process(&request(now)).unwrap());
    }
    assert!(aliases.len() >= 4, "{aliases:?}");
}
