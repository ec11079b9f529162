//! Feeds random packets to the controller-assisted and the switch-only rule
//! programs and compares the results.

use std::net::Ipv4Addr;
use std::time::Instant;

use drdos_defense::harness::check_equivalence;
use drdos_defense::packet::{HostIdentity, MacAddr};

fn main() {
    let target = HostIdentity::new(Ipv4Addr::new(198, 51, 100, 8), MacAddr::new(2, 0, 0, 0, 0, 8), 24);
    let t = Instant::now();
    let r = check_equivalence(target, "203.0.113.0/24".parse().unwrap(), 53, 100_000, 1).unwrap();
    println!("{} packets in {:.2?}, {} mismatches", r.packets, t.elapsed(), r.mismatches);
    println!("\n{:<8} {:>10} {:>10}", "row", "switch", "controller");
    for (row, n) in &r.switch_rows {
        println!("{row:<8} {n:>10} {:>10}", r.controller_rows.get(row).copied().unwrap_or(0));
    }
    for m in &r.examples {
        println!("mismatch: {:?}\n  controller {:?}\n  switch {:?}", m.packet, m.controller, m.switch);
    }
}
