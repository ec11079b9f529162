use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::str::FromStr;

use ipnet::Ipv4Net;
use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::MitigationError;
use crate::packet::{HostIdentity, MacAddr};

/// Which rule program enforces the plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// NAT and ARP handled by a controller callback; the switch only punts.
    ControllerAssisted,
    /// Everything done with set-field actions in the switch.
    SwitchOnly,
}

impl Variant {
    pub fn other(self) -> Variant {
        match self {
            Variant::ControllerAssisted => Variant::SwitchOnly,
            Variant::SwitchOnly => Variant::ControllerAssisted,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ControllerAssisted => "controller",
            Variant::SwitchOnly => "switch",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "controller" => Ok(Variant::ControllerAssisted),
            "switch" => Ok(Variant::SwitchOnly),
            _ => Err(format!("unknown variant `{s}` (expected controller or switch)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreviousAlias {
    pub ip: Ipv4Addr,
    /// Responses to the old alias are accepted while `now < expires_at`.
    pub expires_at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MitigationPlan {
    pub target: HostIdentity,
    pub alias_subnet: Ipv4Net,
    pub alias_ip: Ipv4Addr,
    pub previous_alias: Option<PreviousAlias>,
    pub attack_port: u16,
    pub variant: Variant,
    pub activated_at: f64,
    /// Bumped on every rotation; part of every rule id.
    pub generation: u32,
    pub active: bool,
}

impl MitigationPlan {
    pub fn new(
        target: HostIdentity,
        alias_subnet: Ipv4Net,
        alias_ip: Ipv4Addr,
        attack_port: u16,
        variant: Variant,
        activated_at: f64,
    ) -> Result<Self, MitigationError> {
        let plan = MitigationPlan {
            target,
            alias_subnet: alias_subnet.trunc(),
            alias_ip,
            previous_alias: None,
            attack_port,
            variant,
            activated_at,
            generation: 0,
            active: true,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), MitigationError> {
        let bad = |m: String| Err(MitigationError::InvalidPlan(m));
        if self.attack_port == 0 {
            return bad("attack port must be in 1..=65535".into());
        }
        if self.alias_ip == self.target.ip {
            return bad("alias equals the target address".into());
        }
        if !self.alias_subnet.contains(&self.alias_ip) {
            return bad(format!("alias {} outside {}", self.alias_ip, self.alias_subnet));
        }
        let ts = self.target.subnet();
        if ts.contains(&self.alias_subnet.network()) || self.alias_subnet.contains(&ts.network()) {
            return bad(format!("alias subnet {} overlaps target subnet {ts}", self.alias_subnet));
        }
        if let Some(prev) = self.previous_alias {
            if prev.ip == self.alias_ip {
                return bad("previous alias equals the current alias".into());
            }
        }
        Ok(())
    }

    /// Addresses responses may legitimately arrive at.
    pub fn accepted_aliases(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        std::iter::once(self.alias_ip).chain(self.previous_alias.map(|p| p.ip))
    }

    pub fn is_alias(&self, ip: Ipv4Addr) -> bool {
        self.accepted_aliases().any(|a| a == ip)
    }

    /// Drops the previous alias once its grace period is over.
    /// Returns true if anything changed.
    pub fn expire(&mut self, now: f64) -> bool {
        match self.previous_alias {
            Some(p) if now >= p.expires_at => {
                self.previous_alias = None;
                true
            }
            _ => false,
        }
    }

    /// Moves to a fresh alias. With a positive grace the current alias stays
    /// accepted until `now + grace`; any older alias is forgotten.
    pub fn rotate<R: RngCore + CryptoRng>(
        &self,
        now: f64,
        grace: f64,
        rng: &mut R,
    ) -> Result<MitigationPlan, MitigationError> {
        let mut in_use: BTreeSet<Ipv4Addr> = self.accepted_aliases().collect();
        in_use.insert(self.target.ip);
        let alias_ip = allocate_alias(self.alias_subnet, &in_use, rng)?;
        let previous_alias = (grace > 0.0).then_some(PreviousAlias { ip: self.alias_ip, expires_at: now + grace });
        Ok(MitigationPlan { alias_ip, previous_alias, generation: self.generation + 1, ..self.clone() })
    }

    /// Line-oriented `key=value` rendering of the plan state.
    pub fn to_state_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "target_ip={}", self.target.ip);
        let _ = writeln!(s, "target_mac={}", self.target.mac);
        let _ = writeln!(s, "target_prefix={}", self.target.subnet_prefix_length);
        let _ = writeln!(s, "alias_subnet={}", self.alias_subnet);
        let _ = writeln!(s, "alias_ip={}", self.alias_ip);
        match self.previous_alias {
            Some(p) => {
                let _ = writeln!(s, "previous_alias={}", p.ip);
                let _ = writeln!(s, "grace_expires_at={}", p.expires_at);
            }
            None => {
                let _ = writeln!(s, "previous_alias=none");
            }
        }
        let _ = writeln!(s, "attack_port={}", self.attack_port);
        let _ = writeln!(s, "variant={}", self.variant);
        let _ = writeln!(s, "activated_at={}", self.activated_at);
        let _ = writeln!(s, "generation={}", self.generation);
        let _ = writeln!(s, "active={}", self.active);
        s
    }

    pub fn from_state_str(text: &str) -> Result<MitigationPlan, MitigationError> {
        let mut kv = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MitigationError::Parse { line: i + 1, reason: "expected key=value".into() })?;
            kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        fn get<T: FromStr>(
            kv: &std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T, MitigationError> {
            let (line, v) = kv
                .get(key)
                .ok_or_else(|| MitigationError::Parse { line: 0, reason: format!("missing key `{key}`") })?;
            v.parse().map_err(|_| MitigationError::Parse { line: *line, reason: format!("bad value for `{key}`: {v}") })
        }
        let prefix: u8 = get(&kv, "target_prefix")?;
        if prefix > 32 {
            return Err(MitigationError::InvalidPlan("prefix length above 32".into()));
        }
        let target = HostIdentity::new(get(&kv, "target_ip")?, get::<MacAddr>(&kv, "target_mac")?, prefix);
        let previous_alias = match kv.get("previous_alias").map(|(_, v)| v.as_str()) {
            None | Some("none") => None,
            Some(_) => {
                Some(PreviousAlias { ip: get(&kv, "previous_alias")?, expires_at: get(&kv, "grace_expires_at")? })
            }
        };
        let plan = MitigationPlan {
            target,
            alias_subnet: get(&kv, "alias_subnet")?,
            alias_ip: get(&kv, "alias_ip")?,
            previous_alias,
            attack_port: get(&kv, "attack_port")?,
            variant: get(&kv, "variant")?,
            activated_at: get(&kv, "activated_at")?,
            generation: get(&kv, "generation")?,
            active: get(&kv, "active")?,
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Number of assignable host addresses and the first one.
fn host_range(subnet: Ipv4Net) -> (u32, u64) {
    let net = u32::from(subnet.network());
    match subnet.prefix_len() {
        32 => (net, 1),
        31 => (net, 2),
        p => (net + 1, (1u64 << (32 - p)) - 2),
    }
}

/// Draws a host address of `subnet` uniformly from those not in `in_use`.
/// Network and broadcast addresses are never returned.
pub fn allocate_alias<R: RngCore + CryptoRng>(
    subnet: Ipv4Net,
    in_use: &BTreeSet<Ipv4Addr>,
    rng: &mut R,
) -> Result<Ipv4Addr, MitigationError> {
    let subnet = subnet.trunc();
    let (first, count) = host_range(subnet);
    let last = first as u64 + count - 1;
    let used: Vec<u64> =
        in_use.iter().map(|ip| u32::from(*ip) as u64).filter(|&v| v >= first as u64 && v <= last).collect();
    let free = count - used.len() as u64;
    if free == 0 {
        return Err(MitigationError::SubnetExhausted(subnet));
    }
    // k-th free address: step over every used address at or below the candidate.
    let mut candidate = first as u64 + rng.gen_range(0..free);
    for u in used {
        if u <= candidate {
            candidate += 1;
        } else {
            break;
        }
    }
    Ok(Ipv4Addr::from(candidate as u32))
}

/// [`allocate_alias`] with a generator seeded from OS entropy.
pub fn allocate_alias_secure(subnet: Ipv4Net, in_use: &BTreeSet<Ipv4Addr>) -> Result<Ipv4Addr, MitigationError> {
    allocate_alias(subnet, in_use, &mut ChaCha20Rng::from_entropy())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(s: &str) -> Ipv4Net {
        s.parse().unwrap()
    }

    fn target() -> HostIdentity {
        HostIdentity::new(Ipv4Addr::new(192, 0, 2, 10), MacAddr::new(2, 0, 0, 0, 0, 10), 24)
    }

    #[test]
    fn never_network_or_broadcast() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let a = allocate_alias(net("198.51.100.0/24"), &BTreeSet::new(), &mut rng).unwrap();
            let last = a.octets()[3];
            assert!((1..=254).contains(&last));
        }
    }

    #[test]
    fn exhausted_and_last_free() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let used: BTreeSet<_> = [Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2)].into();
        assert_eq!(
            allocate_alias(net("10.0.0.0/30"), &used, &mut rng),
            Err(MitigationError::SubnetExhausted(net("10.0.0.0/30")))
        );
        let used: BTreeSet<_> = [Ipv4Addr::new(10, 0, 0, 1)].into();
        for _ in 0..20 {
            assert_eq!(allocate_alias(net("10.0.0.0/30"), &used, &mut rng).unwrap(), Ipv4Addr::new(10, 0, 0, 2));
        }
    }

    #[test]
    fn skips_in_use_uniformly() {
        // /29 has hosts .1-.6; with .2 and .5 taken every other host must appear
        let used: BTreeSet<_> = [Ipv4Addr::new(10, 0, 0, 2), Ipv4Addr::new(10, 0, 0, 5)].into();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut counts = [0u32; 8];
        for _ in 0..4000 {
            let a = allocate_alias(net("10.0.0.0/29"), &used, &mut rng).unwrap();
            counts[a.octets()[3] as usize] += 1;
        }
        assert_eq!([counts[0], counts[2], counts[5], counts[7]], [0, 0, 0, 0]);
        for i in [1, 3, 4, 6] {
            assert!((850..1150).contains(&counts[i]), "host .{i}: {}", counts[i]);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let draw = |seed| {
            allocate_alias(net("198.18.0.0/16"), &BTreeSet::new(), &mut ChaCha20Rng::seed_from_u64(seed)).unwrap()
        };
        assert_eq!(draw(7), draw(7));
        // 1000 draws from 65534 hosts: expected birthday collisions ~7.6
        let distinct: BTreeSet<_> = (0..1000).map(draw).collect();
        assert!(distinct.len() >= 1000 - 25, "{} distinct", distinct.len());
    }

    #[test]
    fn plan_validation() {
        let sub = net("198.51.100.0/24");
        let ok = MitigationPlan::new(target(), sub, Ipv4Addr::new(198, 51, 100, 77), 53, Variant::SwitchOnly, 0.0);
        assert!(ok.is_ok());
        let port0 = MitigationPlan::new(target(), sub, Ipv4Addr::new(198, 51, 100, 77), 0, Variant::SwitchOnly, 0.0);
        assert!(port0.is_err());
        let outside = MitigationPlan::new(target(), sub, Ipv4Addr::new(203, 0, 113, 1), 53, Variant::SwitchOnly, 0.0);
        assert!(outside.is_err());
        let overlap = MitigationPlan::new(
            target(),
            net("192.0.2.128/25"),
            Ipv4Addr::new(192, 0, 2, 200),
            53,
            Variant::SwitchOnly,
            0.0,
        );
        assert!(overlap.is_err());
    }

    #[test]
    fn rotation_keeps_one_previous() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let p0 = MitigationPlan::new(
            target(),
            net("198.51.100.0/24"),
            Ipv4Addr::new(198, 51, 100, 77),
            53,
            Variant::ControllerAssisted,
            0.0,
        )
        .unwrap();
        let p1 = p0.rotate(100.0, 30.0, &mut rng).unwrap();
        assert_eq!(p1.previous_alias, Some(PreviousAlias { ip: p0.alias_ip, expires_at: 130.0 }));
        assert_ne!(p1.alias_ip, p0.alias_ip);
        let p2 = p1.rotate(101.0, 30.0, &mut rng).unwrap();
        assert_eq!(p2.previous_alias.unwrap().ip, p1.alias_ip);
        assert!(!p2.is_alias(p0.alias_ip));
        let p3 = p2.rotate(102.0, 0.0, &mut rng).unwrap();
        assert_eq!(p3.previous_alias, None);
        assert_eq!(p3.generation, 3);

        let mut p = p1.clone();
        assert!(!p.expire(129.9));
        assert!(p.expire(130.0));
        assert_eq!(p.previous_alias, None);
    }

    #[test]
    fn state_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let plan = MitigationPlan::new(
            target(),
            net("198.51.100.0/24"),
            Ipv4Addr::new(198, 51, 100, 77),
            123,
            Variant::SwitchOnly,
            12.5,
        )
        .unwrap()
        .rotate(20.0, 5.0, &mut rng)
        .unwrap();
        let text = plan.to_state_string();
        assert!(text.contains("grace_expires_at=25\n"));
        assert_eq!(MitigationPlan::from_state_str(&text).unwrap(), plan);
        assert!(matches!(
            MitigationPlan::from_state_str("target_ip=1.2.3.4\nnonsense"),
            Err(MitigationError::Parse { line: 2, .. })
        ));
    }
}
