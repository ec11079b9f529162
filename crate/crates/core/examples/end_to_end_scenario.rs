//! Detection feeding mitigation: a strong attack is detected, the alias
//! plan goes live and every later packet is checked against ground truth.

use std::net::Ipv4Addr;

use drdos_defense::detection::DetectorConfig;
use drdos_defense::harness::{run_scenario_with, ScenarioConfig};
use drdos_defense::mitigation::Variant;
use drdos_defense::traffic::{AttackSpec, BenignProfile};

fn main() {
    let profile = BenignProfile::desk().with_duration(600.0);
    let attack = AttackSpec::new(4.0, 53, vec![Ipv4Addr::new(198, 51, 100, 8)], 200.0, 600.0);
    let detector = DetectorConfig { frame_length: 10.0, gap: 5, entropy_threshold: -3.0, ..Default::default() };
    let mut cfg = ScenarioConfig::new(profile, attack, detector, Variant::SwitchOnly);
    cfg.rotate_every = Some(60.0);

    let r = run_scenario_with(&cfg).unwrap();
    println!("attack starts at 200 s, detected at {} s", r.detection_time);
    println!("attack packets before activation: {}", r.illegitimate_before_activation);
    println!(
        "attack packets after activation: {} dropped, {} delivered",
        r.illegitimate_dropped, r.illegitimate_delivered
    );
    println!(
        "responses to the host's own requests: {} delivered ({} rewritten to the real address), {} dropped",
        r.legitimate_delivered, r.legitimate_rewritten, r.legitimate_dropped
    );
    println!("responses in flight at activation, dropped: {}", r.in_flight_dropped);
    println!("alias rotations: {}, old-alias responses in grace: {}", r.rotations, r.previous_alias_delivered);
    println!("ARP replies for the alias: {}", r.arp_replies);
    println!("disagreements between the two rule programs: {}", r.variant_mismatches);
}
