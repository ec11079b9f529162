//! Software match/action flow table with OpenFlow-1.3-style semantics.
//!
//! A table holds prioritized entries. Each entry pairs a wildcard-able
//! [`MatchPattern`] with an [`Action`]: an ordered list of set-field
//! rewrites followed by exactly one terminal. [`process`] runs a packet
//! through a table, punting to a [`Controller`] when the terminal asks for it.
//! A table miss forwards the packet unchanged.

mod dump;

use std::fmt;
use std::net::Ipv4Addr;
use std::sync::{Arc, RwLock};

use rustc_hash::FxHashSet;

use crate::packet::{MacAddr, PacketHeaderView, ARP_REPLY};

pub use dump::dump_table;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("flow entry id `{0}` is already installed")]
    DuplicateEntryId(EntryId),
    #[error("set-field {field} on a packet without that header")]
    InvalidSetField { field: &'static str },
    #[error("entry punted to the controller but none is attached")]
    NoController,
}

/// Wildcard or exact value for one match field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FieldMatch<T> {
    #[default]
    Any,
    Exact(T),
}

impl<T: PartialEq> FieldMatch<T> {
    pub fn accepts(&self, value: &T) -> bool {
        match self {
            FieldMatch::Any => true,
            FieldMatch::Exact(v) => v == value,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, FieldMatch::Exact(_))
    }
}

/// Match fields of one flow entry.
///
/// Exact ARP fields only match ARP packets, exact IPv4 fields only IPv4
/// packets and exact UDP ports only packets carrying a UDP header.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MatchPattern {
    pub ether_type: FieldMatch<u16>,
    pub arp_op: FieldMatch<u16>,
    pub arp_tpa: FieldMatch<Ipv4Addr>,
    pub ipv4_src: FieldMatch<Ipv4Addr>,
    pub ipv4_dst: FieldMatch<Ipv4Addr>,
    pub udp_src: FieldMatch<u16>,
    pub udp_dst: FieldMatch<u16>,
}

impl MatchPattern {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn ether_type(mut self, v: u16) -> Self {
        self.ether_type = FieldMatch::Exact(v);
        self
    }

    pub fn arp_op(mut self, v: u16) -> Self {
        self.arp_op = FieldMatch::Exact(v);
        self
    }

    pub fn arp_tpa(mut self, v: Ipv4Addr) -> Self {
        self.arp_tpa = FieldMatch::Exact(v);
        self
    }

    pub fn ipv4_src(mut self, v: Ipv4Addr) -> Self {
        self.ipv4_src = FieldMatch::Exact(v);
        self
    }

    pub fn ipv4_dst(mut self, v: Ipv4Addr) -> Self {
        self.ipv4_dst = FieldMatch::Exact(v);
        self
    }

    pub fn udp_src(mut self, v: u16) -> Self {
        self.udp_src = FieldMatch::Exact(v);
        self
    }

    pub fn udp_dst(mut self, v: u16) -> Self {
        self.udp_dst = FieldMatch::Exact(v);
        self
    }

    pub fn matches(&self, view: &PacketHeaderView) -> bool {
        if !self.ether_type.accepts(&view.ether_type()) {
            return false;
        }
        if self.arp_op.is_exact() || self.arp_tpa.is_exact() {
            match view.arp() {
                Some(arp) if self.arp_op.accepts(&arp.op) && self.arp_tpa.accepts(&arp.tpa) => {}
                _ => return false,
            }
        }
        if self.ipv4_src.is_exact() || self.ipv4_dst.is_exact() {
            match view.ipv4() {
                Some(ip) if self.ipv4_src.accepts(&ip.src) && self.ipv4_dst.accepts(&ip.dst) => {}
                _ => return false,
            }
        }
        if self.udp_src.is_exact() || self.udp_dst.is_exact() {
            match view.udp() {
                Some(u) if self.udp_src.accepts(&u.src_port) && self.udp_dst.accepts(&u.dst_port) => {}
                _ => return false,
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetField {
    Ipv4Src(Ipv4Addr),
    Ipv4Dst(Ipv4Addr),
    EthSrc(MacAddr),
    EthDst(MacAddr),
    ArpOp(u16),
    ArpSpa(Ipv4Addr),
    ArpSha(MacAddr),
    ArpTpa(Ipv4Addr),
    ArpTha(MacAddr),
}

impl SetField {
    pub fn field_name(&self) -> &'static str {
        match self {
            SetField::Ipv4Src(_) => "IPV4_SRC",
            SetField::Ipv4Dst(_) => "IPV4_DST",
            SetField::EthSrc(_) => "ETH_SRC",
            SetField::EthDst(_) => "ETH_DST",
            SetField::ArpOp(_) => "ARP_OP",
            SetField::ArpSpa(_) => "ARP_SPA",
            SetField::ArpSha(_) => "ARP_SHA",
            SetField::ArpTpa(_) => "ARP_TPA",
            SetField::ArpTha(_) => "ARP_THA",
        }
    }

    fn apply(&self, view: &mut PacketHeaderView) -> Result<(), FlowError> {
        let missing = || FlowError::InvalidSetField { field: self.field_name() };
        match *self {
            SetField::EthSrc(m) => view.eth_src = m,
            SetField::EthDst(m) => view.eth_dst = m,
            SetField::Ipv4Src(a) => view.ipv4_mut().ok_or_else(missing)?.set_src(a),
            SetField::Ipv4Dst(a) => view.ipv4_mut().ok_or_else(missing)?.set_dst(a),
            SetField::ArpOp(op) => view.arp_mut().ok_or_else(missing)?.op = op,
            SetField::ArpSpa(a) => view.arp_mut().ok_or_else(missing)?.spa = a,
            SetField::ArpSha(m) => view.arp_mut().ok_or_else(missing)?.sha = m,
            SetField::ArpTpa(a) => view.arp_mut().ok_or_else(missing)?.tpa = a,
            SetField::ArpTha(m) => view.arp_mut().ok_or_else(missing)?.tha = m,
        }
        Ok(())
    }
}

impl fmt::Display for SetField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.field_name();
        match self {
            SetField::Ipv4Src(a) | SetField::Ipv4Dst(a) | SetField::ArpSpa(a) | SetField::ArpTpa(a) => {
                write!(f, "set-field {name}={a}")
            }
            SetField::EthSrc(m) | SetField::EthDst(m) | SetField::ArpSha(m) | SetField::ArpTha(m) => {
                write!(f, "set-field {name}={m}")
            }
            SetField::ArpOp(op) => write!(f, "set-field {name}={op}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminal {
    /// Output on the protected host's port. Packets addressed to the host
    /// are delivered; packets it originated continue with normal L3
    /// forwarding; a rewritten ARP reply is emitted.
    OutputTarget(Ipv4Addr),
    OutputNormal,
    Drop,
    ToController,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminal::OutputTarget(_) => f.write_str("=> TARGET"),
            Terminal::OutputNormal => f.write_str("=> NORMAL"),
            Terminal::Drop => f.write_str("DROP"),
            Terminal::ToController => f.write_str("=> CONTROLLER"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub set_fields: Vec<SetField>,
    pub terminal: Terminal,
}

impl Action {
    pub fn terminal(terminal: Terminal) -> Self {
        Action { set_fields: Vec::new(), terminal }
    }

    pub fn rewrite(set_fields: Vec<SetField>, terminal: Terminal) -> Self {
        Action { set_fields, terminal }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for sf in &self.set_fields {
            write!(f, "{sf}; ")?;
        }
        write!(f, "{}", self.terminal)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId(pub String);

impl EntryId {
    pub fn new(id: impl Into<String>) -> Self {
        EntryId(id.into())
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowEntry {
    pub id: EntryId,
    pub priority: u16,
    pub pattern: MatchPattern,
    pub action: Action,
}

/// Outcome of running one packet through the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Disposition {
    DeliveredToTarget(PacketHeaderView),
    ForwardedNormal(PacketHeaderView),
    Dropped,
    EmittedReply(PacketHeaderView),
}

impl Disposition {
    pub fn view(&self) -> Option<&PacketHeaderView> {
        match self {
            Disposition::DeliveredToTarget(v) | Disposition::ForwardedNormal(v) | Disposition::EmittedReply(v) => {
                Some(v)
            }
            Disposition::Dropped => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Disposition::DeliveredToTarget(_) => "delivered",
            Disposition::ForwardedNormal(_) => "forwarded",
            Disposition::Dropped => "dropped",
            Disposition::EmittedReply(_) => "reply",
        }
    }
}

/// Result of applying an entry's action.
#[derive(Clone, Debug, PartialEq)]
pub enum Applied {
    Done(Disposition),
    /// The (possibly rewritten) packet goes to the controller.
    Punt(PacketHeaderView),
}

/// Receives packets punted by `ToController` entries.
pub trait Controller {
    fn packet_in(&self, view: &PacketHeaderView) -> Result<Disposition, FlowError>;
}

impl<F> Controller for F
where
    F: Fn(&PacketHeaderView) -> Result<Disposition, FlowError>,
{
    fn packet_in(&self, view: &PacketHeaderView) -> Result<Disposition, FlowError> {
        self(view)
    }
}

/// Resolves output on the protected host's port.
pub fn output_to_target(view: PacketHeaderView, target: Ipv4Addr) -> Disposition {
    if let Some(arp) = view.arp() {
        return if arp.op == ARP_REPLY { Disposition::EmittedReply(view) } else { Disposition::ForwardedNormal(view) };
    }
    match view.ipv4() {
        Some(ip) if ip.dst == target => Disposition::DeliveredToTarget(view),
        _ => Disposition::ForwardedNormal(view),
    }
}

/// Applies `entry`'s set-fields to a copy of `view` and resolves the terminal.
pub fn apply(entry: &FlowEntry, view: &PacketHeaderView) -> Result<Applied, FlowError> {
    let mut out = view.clone();
    for sf in &entry.action.set_fields {
        sf.apply(&mut out)?;
    }
    Ok(match entry.action.terminal {
        Terminal::OutputTarget(target) => Applied::Done(output_to_target(out, target)),
        Terminal::OutputNormal => Applied::Done(Disposition::ForwardedNormal(out)),
        Terminal::Drop => Applied::Done(Disposition::Dropped),
        Terminal::ToController => Applied::Punt(out),
    })
}

#[derive(Clone, Debug)]
struct Installed {
    entry: FlowEntry,
    seq: u64,
}

/// A single flow table. Entries are kept ordered by descending priority,
/// then installation order.
#[derive(Clone, Debug, Default)]
pub struct FlowTable {
    entries: Vec<Installed>,
    next_seq: u64,
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &EntryId) -> bool {
        self.entries.iter().any(|i| &i.entry.id == id)
    }

    /// Entries in lookup order.
    pub fn entries(&self) -> impl Iterator<Item = &FlowEntry> {
        self.entries.iter().map(|i| &i.entry)
    }

    /// Installs a batch; either every entry goes in or none does.
    pub fn install(&mut self, batch: Vec<FlowEntry>) -> Result<(), FlowError> {
        self.replace(&[], batch)
    }

    /// Removes the given ids, returning how many were present.
    pub fn remove(&mut self, ids: &[EntryId]) -> usize {
        let before = self.entries.len();
        self.entries.retain(|i| !ids.contains(&i.entry.id));
        before - self.entries.len()
    }

    /// Removes `remove` and installs `batch` as one step.
    pub fn replace(&mut self, remove: &[EntryId], batch: Vec<FlowEntry>) -> Result<(), FlowError> {
        let mut seen: FxHashSet<&EntryId> =
            self.entries.iter().map(|i| &i.entry.id).filter(|id| !remove.contains(id)).collect();
        for e in &batch {
            if !seen.insert(&e.id) {
                return Err(FlowError::DuplicateEntryId(e.id.clone()));
            }
        }
        self.remove(remove);
        for entry in batch {
            let seq = self.next_seq;
            self.next_seq += 1;
            let pos = self.entries.partition_point(|i| i.entry.priority >= entry.priority);
            self.entries.insert(pos, Installed { entry, seq });
        }
        debug_assert!(self
            .entries
            .windows(2)
            .all(|w| (w[0].entry.priority, std::cmp::Reverse(w[0].seq))
                > (w[1].entry.priority, std::cmp::Reverse(w[1].seq))));
        Ok(())
    }

    /// Highest-priority matching entry, earliest installed on ties.
    pub fn lookup(&self, view: &PacketHeaderView) -> Option<&FlowEntry> {
        self.entries.iter().map(|i| &i.entry).find(|e| e.pattern.matches(view))
    }
}

/// Copy-on-write handle for concurrent readers. Writers build a new table
/// and swap it in, so a reader's snapshot never contains part of a batch.
#[derive(Clone, Debug, Default)]
pub struct SharedFlowTable {
    inner: Arc<RwLock<Arc<FlowTable>>>,
}

impl SharedFlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> Arc<FlowTable> {
        Arc::clone(&self.inner.read().expect("flow table lock poisoned"))
    }

    pub fn install(&self, batch: Vec<FlowEntry>) -> Result<(), FlowError> {
        self.replace(&[], batch)
    }

    pub fn replace(&self, remove: &[EntryId], batch: Vec<FlowEntry>) -> Result<(), FlowError> {
        let mut guard = self.inner.write().expect("flow table lock poisoned");
        let mut next = FlowTable::clone(&guard);
        next.replace(remove, batch)?;
        *guard = Arc::new(next);
        Ok(())
    }

    pub fn remove(&self, ids: &[EntryId]) -> usize {
        let mut guard = self.inner.write().expect("flow table lock poisoned");
        let mut next = FlowTable::clone(&guard);
        let n = next.remove(ids);
        *guard = Arc::new(next);
        n
    }
}

/// Runs one packet through `table`: lookup, apply, and hand punted packets
/// to `controller`. A miss forwards the packet unchanged.
pub fn process(
    table: &FlowTable,
    view: &PacketHeaderView,
    controller: Option<&dyn Controller>,
) -> Result<Disposition, FlowError> {
    let Some(entry) = table.lookup(view) else {
        return Ok(Disposition::ForwardedNormal(view.clone()));
    };
    match apply(entry, view)? {
        Applied::Done(d) => Ok(d),
        Applied::Punt(v) => controller.ok_or(FlowError::NoController)?.packet_in(&v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{ETHERTYPE_ARP, ETHERTYPE_IPV4};

    const T: Ipv4Addr = Ipv4Addr::new(192, 0, 2, 10);

    fn entry(id: &str, priority: u16, pattern: MatchPattern, terminal: Terminal) -> FlowEntry {
        FlowEntry { id: EntryId::new(id), priority, pattern, action: Action::terminal(terminal) }
    }

    fn udp(src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16)) -> PacketHeaderView {
        PacketHeaderView::udp_packet(0.0, src, dst)
    }

    #[test]
    fn install_and_duplicates() {
        let mut t = FlowTable::new();
        t.install(vec![]).unwrap();
        assert!(t.is_empty());
        t.install(vec![entry("a", 1, MatchPattern::any(), Terminal::Drop)]).unwrap();
        let err = t
            .install(vec![
                entry("b", 1, MatchPattern::any(), Terminal::Drop),
                entry("a", 1, MatchPattern::any(), Terminal::Drop),
            ])
            .unwrap_err();
        assert_eq!(err, FlowError::DuplicateEntryId(EntryId::new("a")));
        // failed batch left no trace
        assert_eq!(t.len(), 1);
        assert!(!t.contains(&EntryId::new("b")));
        // duplicate inside one batch
        assert!(t
            .install(vec![
                entry("c", 1, MatchPattern::any(), Terminal::Drop),
                entry("c", 2, MatchPattern::any(), Terminal::Drop),
            ])
            .is_err());
    }

    #[test]
    fn priority_then_install_order() {
        let mut t = FlowTable::new();
        t.install(vec![
            entry("low", 1, MatchPattern::any(), Terminal::Drop),
            entry("first", 5, MatchPattern::any(), Terminal::OutputNormal),
            entry("second", 5, MatchPattern::any(), Terminal::ToController),
        ])
        .unwrap();
        let p = udp((T, 1), (T, 2));
        assert_eq!(t.lookup(&p).unwrap().id, EntryId::new("first"));
        let ids: Vec<_> = t.entries().map(|e| e.id.0.as_str()).collect();
        assert_eq!(ids, ["first", "second", "low"]);
    }

    #[test]
    fn prerequisites() {
        let udp_rule = MatchPattern::any().ether_type(ETHERTYPE_IPV4).udp_dst(53);
        let tcp = PacketHeaderView::tcp_packet(0.0, (T, 1000), (T, 53));
        assert!(!udp_rule.matches(&tcp));
        assert!(udp_rule.matches(&udp((T, 1000), (T, 53))));

        let arp_rule = MatchPattern::any().arp_op(1);
        assert!(!arp_rule.matches(&udp((T, 1), (T, 1))));
        let req = PacketHeaderView::arp_request(0.0, MacAddr::ZERO, T, T);
        assert!(arp_rule.matches(&req));

        let ip_rule = MatchPattern::any().ipv4_src(T);
        assert!(!ip_rule.matches(&req));
        assert!(MatchPattern::any().ether_type(ETHERTYPE_ARP).matches(&req));
    }

    #[test]
    fn set_field_on_missing_header() {
        let e = FlowEntry {
            id: EntryId::new("x"),
            priority: 0,
            pattern: MatchPattern::any(),
            action: Action::rewrite(vec![SetField::ArpOp(2)], Terminal::OutputNormal),
        };
        let err = apply(&e, &udp((T, 1), (T, 2))).unwrap_err();
        assert_eq!(err, FlowError::InvalidSetField { field: "ARP_OP" });
    }

    #[test]
    fn miss_forwards_and_punt_needs_controller() {
        let mut t = FlowTable::new();
        let p = PacketHeaderView::tcp_packet(0.0, (T, 1), (T, 2));
        assert_eq!(process(&t, &p, None).unwrap(), Disposition::ForwardedNormal(p.clone()));

        t.install(vec![entry("c", 1, MatchPattern::any(), Terminal::ToController)]).unwrap();
        assert_eq!(process(&t, &p, None).unwrap_err(), FlowError::NoController);
        let ctl = |_: &PacketHeaderView| Ok(Disposition::Dropped);
        assert_eq!(process(&t, &p, Some(&ctl)).unwrap(), Disposition::Dropped);
    }

    #[test]
    fn output_target_resolution() {
        let other = Ipv4Addr::new(203, 0, 113, 9);
        let inbound = udp((other, 53), (T, 4000));
        assert!(matches!(output_to_target(inbound, T), Disposition::DeliveredToTarget(_)));
        let outbound = udp((T, 4000), (other, 53));
        assert!(matches!(output_to_target(outbound, T), Disposition::ForwardedNormal(_)));
    }

    #[test]
    fn shared_table_replace_is_atomic() {
        let shared = SharedFlowTable::new();
        shared.install(vec![entry("a", 1, MatchPattern::any(), Terminal::Drop)]).unwrap();
        let before = shared.snapshot();
        shared.replace(&[EntryId::new("a")], vec![entry("a", 2, MatchPattern::any(), Terminal::OutputNormal)]).unwrap();
        assert_eq!(before.entries().next().unwrap().priority, 1);
        assert_eq!(shared.snapshot().entries().next().unwrap().priority, 2);
        assert_eq!(shared.remove(&[EntryId::new("a")]), 1);
        assert!(shared.snapshot().is_empty());
    }
}
