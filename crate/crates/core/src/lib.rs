//! Reflective DDoS (DRDoS) detection and mitigation on a software flow table.
//!
//! * [`packet`]: header views, wire parsing and checksums.
//! * [`flow`]: prioritized match/action table with controller punts.
//! * [`mitigation`]: alias NAT plans, both rule programs, rotation.
//! * [`detection`]: per-frame entropy statistics and threshold classifiers.
//! * [`traffic`]: benign generator, attack injection, pcap I/O.
//! * [`harness`]: parameter sweeps, end-to-end scenarios, equivalence checks.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod flow;
pub mod harness;
pub mod mitigation;
pub mod packet;
pub mod traffic;

mod kv;
