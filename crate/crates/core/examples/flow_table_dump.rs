//! Compiles the rule programs of both mitigation variants, with and without
//! a previous alias, and prints them in table form.

use std::net::Ipv4Addr;

use drdos_defense::flow::{dump_table, FlowTable};
use drdos_defense::mitigation::{compile_rules, MitigationPlan, PreviousAlias, Variant};
use drdos_defense::packet::{HostIdentity, MacAddr};

fn main() {
    let target = HostIdentity::new(Ipv4Addr::new(198, 51, 100, 8), MacAddr::new(2, 0, 0, 0, 0, 8), 24);
    let alias = Ipv4Addr::new(203, 0, 113, 77);
    for variant in [Variant::ControllerAssisted, Variant::SwitchOnly] {
        let mut plan = MitigationPlan::new(target, "203.0.113.0/24".parse().unwrap(), alias, 53, variant, 0.0).unwrap();
        for previous in [None, Some(Ipv4Addr::new(203, 0, 113, 12))] {
            plan.previous_alias = previous.map(|ip| PreviousAlias { ip, expires_at: 5.0 });
            let mut table = FlowTable::new();
            table.install(compile_rules(&plan)).unwrap();
            let label = if previous.is_some() { "during grace" } else { "fresh" };
            println!("== {variant}, {label} ({} rules)", table.len());
            println!("{}", dump_table(&table));
        }
    }
}
