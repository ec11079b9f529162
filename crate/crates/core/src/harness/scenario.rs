//! Closed-loop runs: traffic passes detection, a report activates the
//! mitigation, and every later packet's disposition is checked against its
//! ground-truth label.
//!
//! Besides background and attack traffic the protected host talks on the
//! attack port: it sends requests to servers (whose responses come back to
//! whatever source address the request left with), and it answers requests
//! from clients. Both rule programs process every packet in lockstep; the
//! configured one drives the loop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::detection::{AttackReport, Detector, DetectorConfig, FrameAggregator, FrameStats};
use crate::flow::Disposition;
use crate::mitigation::{MitigationController, MitigationSettings, Variant};
use crate::packet::{FlowKey, HostIdentity, MacAddr, PacketHeaderView};
use crate::traffic::{host_mac, inject_attack, AttackSpec, BenignGenerator, BenignProfile, Label, SimPacket};

/// Everything a scenario run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub profile: BenignProfile,
    /// The first target is the protected host.
    pub attack: AttackSpec,
    pub detector: DetectorConfig,
    pub variant: Variant,
    pub alias_subnet: Ipv4Net,
    pub grace: f64,
    pub rotate_every: Option<f64>,
    /// Prefix length of the protected host's subnet.
    pub target_prefix: u8,
    /// Requests per second the protected host sends to the attack port.
    pub request_rate: f64,
    /// Requests per second clients send to the protected host's attack port.
    pub incoming_rate: f64,
    /// Server response delay, drawn uniformly from this range.
    pub response_delay: (f64, f64),
    /// ARP requests for the current alias from the gateway.
    pub arp_interval: Option<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(profile: BenignProfile, attack: AttackSpec, detector: DetectorConfig, variant: Variant) -> Self {
        ScenarioConfig {
            profile,
            attack,
            detector,
            variant,
            alias_subnet: "203.0.113.0/24".parse().expect("valid literal"),
            grace: 5.0,
            rotate_every: None,
            target_prefix: 24,
            request_rate: 5.0,
            incoming_rate: 2.0,
            response_delay: (0.01, 0.2),
            arp_interval: Some(10.0),
            seed: 7,
        }
    }

    pub fn target(&self) -> Ipv4Addr {
        self.attack.targets[0]
    }

    fn validate(&self) -> Result<(), HarnessError> {
        self.profile.validate()?;
        self.attack.validate()?;
        self.detector.validate()?;
        let (lo, hi) = self.response_delay;
        let ok = self.request_rate >= 0.0
            && self.incoming_rate >= 0.0
            && lo >= 0.0
            && lo <= hi
            && self.grace >= 0.0
            && self.rotate_every.is_none_or(|r| r > 0.0)
            && self.arp_interval.is_none_or(|a| a > 0.0);
        if !ok {
            return Err(HarnessError::Parse("invalid scenario rates or delays".into()));
        }
        Ok(())
    }
}

/// Ground-truth accounting of a run. Unless noted, counts cover packets
/// processed from plan activation on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioReport {
    /// Activation time; infinite if the attack was never detected.
    pub detection_time: f64,
    pub report: Option<AttackReport>,
    /// Attack packets seen before activation.
    pub illegitimate_before_activation: u64,
    pub illegitimate_delivered: u64,
    pub illegitimate_dropped: u64,
    /// Responses to alias-rewritten requests delivered to the target.
    pub legitimate_delivered: u64,
    /// Of those, delivered with the destination rewritten to the target.
    pub legitimate_rewritten: u64,
    /// Responses to alias-rewritten requests neither delivered nor stragglers.
    pub legitimate_dropped: u64,
    /// Responses to requests sent before activation, dropped afterwards.
    pub in_flight_dropped: u64,
    /// Responses to a previous alias delivered inside its grace period.
    pub previous_alias_delivered: u64,
    /// Responses to an alias whose grace period had ended.
    pub grace_stragglers: u64,
    /// Responses to a retired alias delivered later than grace plus one frame.
    pub late_old_alias_delivered: u64,
    pub target_requests: u64,
    pub requests_rewritten: u64,
    pub incoming_requests: u64,
    pub incoming_requests_unmodified: u64,
    pub target_responses: u64,
    pub target_responses_unmodified: u64,
    pub arp_replies: u64,
    pub rotations: u64,
    pub variant_mismatches: u64,
    pub packets: u64,
}

impl ScenarioReport {
    pub fn detected(&self) -> bool {
        self.detection_time.is_finite()
    }
}

/// Runs `profile` with `attack` through detection and the `variant` rule
/// program, with default host behaviour.
pub fn run_scenario(
    profile: &BenignProfile,
    attack: &AttackSpec,
    detector: &DetectorConfig,
    variant: Variant,
) -> Result<ScenarioReport, HarnessError> {
    run_scenario_with(&ScenarioConfig::new(profile.clone(), attack.clone(), detector.clone(), variant))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Background,
    TargetRequest,
    IncomingRequest,
    /// Response to a request that left with this source address.
    Response {
        to: Ipv4Addr,
    },
    TargetResponse,
    Arp,
}

struct Event {
    ts: f64,
    seq: u64,
    view: PacketHeaderView,
    origin: Origin,
    label: Label,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // min-heap on (ts, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.ts.total_cmp(&self.ts).then(other.seq.cmp(&self.seq))
    }
}

fn ephemeral(rng: &mut ChaCha8Rng) -> u16 {
    rng.gen_range(1024..=65535)
}

fn public_ip(rng: &mut ChaCha8Rng) -> Ipv4Addr {
    loop {
        let ip = Ipv4Addr::from(rng.gen::<u32>());
        if crate::traffic::is_public_unicast(ip) {
            return ip;
        }
    }
}

/// Arrival times of a Poisson process on `[start, end)`.
fn poisson_times(rate: f64, start: f64, end: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = start;
    loop {
        t += -(1.0 - rng.gen::<f64>()).ln() / rate;
        if t >= end {
            return out;
        }
        out.push(t);
    }
}

/// Host-side events: requests out, requests in and ARP probes, as a
/// time-ordered schedule.
fn host_schedule(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng, seq: &mut u64) -> BinaryHeap<Event> {
    let target = cfg.target();
    let port = cfg.attack.attack_port;
    let (start, end) = (cfg.profile.start, cfg.profile.end());
    let servers: Vec<Ipv4Addr> = (0..32).map(|_| public_ip(rng)).collect();
    let mut heap = BinaryHeap::new();
    let mut push = |heap: &mut BinaryHeap<Event>, ts: f64, view: PacketHeaderView, origin: Origin, label: Label| {
        *seq += 1;
        heap.push(Event { ts, seq: *seq, view, origin, label });
    };
    let mut out = Vec::new();
    for t in poisson_times(cfg.request_rate, start, end, rng) {
        let server = servers[rng.gen_range(0..servers.len())];
        let key = FlowKey::udp((target, ephemeral(rng)), (server, port));
        out.push((t, SimPacket { ts: t, key, label: Label::TargetRequest }, Origin::TargetRequest));
    }
    for t in poisson_times(cfg.incoming_rate, start, end, rng) {
        let key = FlowKey::udp((public_ip(rng), ephemeral(rng)), (target, port));
        out.push((t, SimPacket { ts: t, key, label: Label::IncomingRequest }, Origin::IncomingRequest));
    }
    for (t, p, origin) in out {
        push(&mut heap, t, p.to_view(), origin, p.label);
    }
    if let Some(every) = cfg.arp_interval {
        let gateway = Ipv4Addr::from(
            u32::from(HostIdentity::new(target, MacAddr::ZERO, cfg.target_prefix).subnet().network()) + 1,
        );
        let mut t = start + every / 2.0;
        while t < end {
            // the target address stands in for "whatever alias is current"
            let view = PacketHeaderView::arp_request(t, host_mac(gateway), gateway, target);
            push(&mut heap, t, view, Origin::Arp, Label::Benign);
            t += every;
        }
    }
    heap
}

/// Runs one closed-loop scenario.
pub fn run_scenario_with(cfg: &ScenarioConfig) -> Result<ScenarioReport, HarnessError> {
    cfg.validate()?;
    let target = cfg.target();
    let port = cfg.attack.attack_port;
    let l = cfg.detector.frame_length;
    let identity = HostIdentity::new(target, host_mac(target), cfg.target_prefix);
    let settings = |variant| MitigationSettings {
        alias_subnet: cfg.alias_subnet,
        variant,
        grace: cfg.grace,
        rotate_every: cfg.rotate_every,
    };
    let mut primary = MitigationController::with_seed(settings(cfg.variant), cfg.seed);
    let mut shadow = MitigationController::with_seed(settings(cfg.variant.other()), cfg.seed);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seq = 0u64;
    let mut pending = host_schedule(cfg, &mut rng, &mut seq);
    let benign = BenignGenerator::new(&cfg.profile)?;
    let mut stream = inject_attack(benign, cfg.attack.clone(), l, cfg.profile.start)?.peekable();

    let mut detector = Detector::new(cfg.detector.clone())?;
    let mut frames = FrameAggregator::with_origin(l, cfg.profile.start).track_tcp_flows(false);
    let mut report = ScenarioReport { detection_time: f64::INFINITY, ..Default::default() };
    let mut activated_at = f64::INFINITY;
    // alias -> time it stopped being current
    let mut retired: HashMap<Ipv4Addr, f64> = HashMap::new();

    loop {
        let next_stream = stream.peek().map(|p| p.ts);
        let next_pending = pending.peek().map(|e| e.ts);
        let event = match (next_stream, next_pending) {
            (None, None) => break,
            (Some(a), Some(b)) if b < a => pending.pop().expect("peeked"),
            (Some(_), _) => {
                let p = stream.next().expect("peeked");
                seq += 1;
                Event { ts: p.ts, seq, view: p.to_view(), origin: Origin::Background, label: p.label }
            }
            (None, Some(_)) => pending.pop().expect("peeked"),
        };
        let now = event.ts;

        // detection sees ingress traffic; a report can activate mitigation
        let key = crate::packet::flow_key_of(&event.view);
        let mut completed = Vec::new();
        frames.push_key(now, key, &mut |f| completed.push(f))?;
        for f in completed {
            let stats = FrameStats::from_flows(&f);
            if let Some(r) = detector.push(stats) {
                if !primary.is_active() && r.target_ip == target && r.attack_port == port {
                    activated_at = r.detected_at;
                    report.detection_time = r.detected_at;
                    primary.activate(identity, port, r.detected_at)?;
                    shadow.activate(identity, port, r.detected_at)?;
                    report.report = Some(r);
                }
            }
        }
        let before = primary.plan().map(|p| p.alias_ip);
        primary.tick(now)?;
        shadow.tick(now)?;
        if let (Some(old), Some(new)) = (before, primary.plan().map(|p| p.alias_ip)) {
            if old != new {
                retired.insert(old, now);
                report.rotations += 1;
            }
        }

        let mut view = event.view;
        if event.origin == Origin::Arp {
            let Some(plan) = primary.plan() else { continue };
            let alias = plan.alias_ip;
            if let Some(arp) = view.arp_mut() {
                arp.tpa = alias;
            }
        }
        let disposition = primary.process(&view)?;
        let other = shadow.process(&view)?;
        if disposition != other {
            report.variant_mismatches += 1;
        }
        report.packets += 1;
        let active = now >= activated_at;
        let delivered_view = match &disposition {
            Disposition::DeliveredToTarget(v) => Some(v),
            _ => None,
        };

        match event.origin {
            Origin::Background if event.label == Label::Attack => {
                if !active {
                    report.illegitimate_before_activation += 1;
                } else if delivered_view.is_some() {
                    report.illegitimate_delivered += 1;
                } else if disposition == Disposition::Dropped {
                    report.illegitimate_dropped += 1;
                }
            }
            Origin::Background => {}
            Origin::TargetRequest => {
                let out = disposition.view().and_then(|v| v.ipv4()).map(|ip| ip.src).unwrap_or(target);
                if active {
                    report.target_requests += 1;
                    if out != target {
                        report.requests_rewritten += 1;
                    }
                }
                if disposition != Disposition::Dropped {
                    let (lo, hi) = cfg.response_delay;
                    let delay = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                    let req = view.ipv4().expect("udp request");
                    let udp = view.udp().expect("udp request");
                    let key = FlowKey::udp((req.dst, port), (out, udp.src_port));
                    let ts = now + delay;
                    let resp = SimPacket { ts, key, label: Label::LegitimateResponse };
                    seq += 1;
                    pending.push(Event {
                        ts,
                        seq,
                        view: resp.to_view(),
                        origin: Origin::Response { to: out },
                        label: Label::LegitimateResponse,
                    });
                }
            }
            Origin::Response { to } => {
                if to == target {
                    if active && delivered_view.is_none() {
                        report.in_flight_dropped += 1;
                    }
                    continue;
                }
                let plan = primary.plan().expect("alias responses only exist with a plan");
                let current = plan.alias_ip == to;
                match delivered_view {
                    Some(v) => {
                        report.legitimate_delivered += 1;
                        if v.ipv4().map(|ip| ip.dst) == Some(target) {
                            report.legitimate_rewritten += 1;
                        }
                        if !current {
                            report.previous_alias_delivered += 1;
                            if let Some(&at) = retired.get(&to) {
                                if now >= at + cfg.grace + l {
                                    report.late_old_alias_delivered += 1;
                                }
                            }
                        }
                    }
                    None if !current && !plan.is_alias(to) => report.grace_stragglers += 1,
                    None => report.legitimate_dropped += 1,
                }
            }
            Origin::IncomingRequest => {
                if active {
                    report.incoming_requests += 1;
                    if delivered_view == Some(&view) {
                        report.incoming_requests_unmodified += 1;
                    }
                }
                if disposition != Disposition::Dropped {
                    let req = view.ipv4().expect("udp request");
                    let udp = view.udp().expect("udp request");
                    let key = FlowKey::udp((target, port), (req.src, udp.src_port));
                    let resp = SimPacket { ts: now, key, label: Label::TargetResponse };
                    seq += 1;
                    pending.push(Event {
                        ts: now,
                        seq,
                        view: resp.to_view(),
                        origin: Origin::TargetResponse,
                        label: Label::TargetResponse,
                    });
                }
            }
            Origin::TargetResponse => {
                if active {
                    report.target_responses += 1;
                    if disposition == Disposition::ForwardedNormal(view.clone()) {
                        report.target_responses_unmodified += 1;
                    }
                }
            }
            Origin::Arp => {
                if matches!(disposition, Disposition::EmittedReply(_)) {
                    report.arp_replies += 1;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(a: f64, variant: Variant) -> ScenarioConfig {
        let profile = BenignProfile::desk().with_duration(300.0).with_seed(3);
        let attack = AttackSpec::new(a, 53, vec![Ipv4Addr::new(198, 51, 100, 8)], 120.0, 300.0);
        let detector = DetectorConfig { frame_length: 10.0, gap: 5, entropy_threshold: -3.0, ..Default::default() };
        ScenarioConfig::new(profile, attack, detector, variant)
    }

    #[test]
    fn strong_attack_is_contained() {
        for variant in [Variant::ControllerAssisted, Variant::SwitchOnly] {
            let r = run_scenario_with(&config(4.0, variant)).unwrap();
            assert!(r.detected(), "{r:?}");
            assert!(r.detection_time >= 120.0 && r.detection_time <= 200.0, "{}", r.detection_time);
            assert_eq!(r.illegitimate_delivered, 0);
            assert!(r.illegitimate_dropped > 0);
            assert_eq!(r.legitimate_dropped, 0);
            assert!(r.legitimate_delivered > 0);
            assert_eq!(r.legitimate_rewritten, r.legitimate_delivered);
            assert_eq!(r.requests_rewritten, r.target_requests);
            assert_eq!(r.incoming_requests_unmodified, r.incoming_requests);
            assert_eq!(r.target_responses_unmodified, r.target_responses);
            assert!(r.arp_replies > 0);
            assert_eq!(r.variant_mismatches, 0);
        }
    }

    #[test]
    fn no_attack_no_activation() {
        let r = run_scenario_with(&config(0.0, Variant::SwitchOnly)).unwrap();
        assert!(!r.detected());
        assert_eq!(r.illegitimate_before_activation, 0);
        assert_eq!(r.legitimate_delivered, 0);
        assert_eq!(r.arp_replies, 0);
        assert_eq!(r.variant_mismatches, 0);
    }

    #[test]
    fn rotation_with_late_responses() {
        let mut cfg = config(4.0, Variant::SwitchOnly);
        cfg.rotate_every = Some(30.0);
        cfg.grace = 3.0;
        cfg.response_delay = (0.5, 12.0);
        cfg.request_rate = 20.0;
        let r = run_scenario_with(&cfg).unwrap();
        assert!(r.rotations >= 2);
        assert!(r.previous_alias_delivered > 0);
        assert!(r.grace_stragglers > 0);
        assert_eq!(r.late_old_alias_delivered, 0);
        assert_eq!(r.legitimate_dropped, 0);
        assert_eq!(r.variant_mismatches, 0);
    }
}
