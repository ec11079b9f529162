//! Alias-NAT mitigation for a host under a reflective attack.
//!
//! While a plan is active the target's outgoing UDP requests to the attack
//! port leave with a secret alias as source address. Responses come back to
//! the alias and are translated to the target; responses that arrive at the
//! target's real address on the attack port were never requested and are
//! dropped. The alias can be rotated, keeping the previous one valid for a
//! grace period.

mod controller;
mod plan;
mod rules;

pub use controller::{MitigationController, MitigationSettings};
pub use plan::{allocate_alias, allocate_alias_secure, MitigationPlan, PreviousAlias, Variant};
pub use rules::{compile_rules, controller_nat, synthesize_arp_reply};

use crate::flow::FlowError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MitigationError {
    #[error("no free host address left in alias subnet {0}")]
    SubnetExhausted(ipnet::Ipv4Net),
    #[error("packet is not an ARP request")]
    NotAnArpRequest,
    #[error("ARP request asks for {0}, which is not an alias of this plan")]
    NotAnAlias(std::net::Ipv4Addr),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("no mitigation plan is active")]
    Inactive,
    #[error("bad plan state line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Flow(#[from] FlowError),
}
