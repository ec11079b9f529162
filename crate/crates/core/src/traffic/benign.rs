use std::collections::VecDeque;
use std::f64::consts::TAU;
use std::net::Ipv4Addr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use rustc_hash::FxHashSet;

use super::{Label, SimPacket, TrafficError};
use crate::kv::KvFile;
use crate::packet::{FlowKey, IpProtocol};

/// Server ports that lead the port pool, most popular first.
pub const SERVICE_PORTS: [u16; 30] = [
    53, 443, 123, 161, 1900, 5353, 137, 138, 500, 4500, 3478, 19302, 27015, 11211, 389, 1194, 51820, 67, 68, 69, 514,
    520, 5060, 3702, 10001, 17, 19, 111, 2049, 6881,
];

/// Shape of the background traffic. Rates follow a sinusoidal daily curve
/// between the given bounds; ports and addresses follow Zipf laws over
/// fixed random pools.
#[derive(Clone, Debug, PartialEq)]
pub struct BenignProfile {
    pub start: f64,
    pub duration: f64,
    /// Packets per second, low and high end of the daily curve.
    pub pps_range: (f64, f64),
    /// Fraction of packets that are UDP.
    pub udp_share_range: (f64, f64),
    pub port_population: usize,
    pub ip_population: usize,
    pub seed: u64,
    /// Length of one rate cycle in seconds.
    pub period: f64,
    /// Probability that a UDP packet starts a new flow rather than
    /// continuing a recently active one.
    pub udp_new_flow_prob: f64,
    pub tcp_new_flow_prob: f64,
    /// How far back (seconds) a continuing packet may pick its flow.
    pub flow_window: f64,
    pub port_zipf_exponent: f64,
    pub ip_zipf_exponent: f64,
}

impl BenignProfile {
    /// Backbone rates scaled down by 100: 500 to 1,500 packets/s, 6 to 9 %
    /// UDP, two days.
    pub fn desk() -> Self {
        BenignProfile {
            start: 0.0,
            duration: 2.0 * 86_400.0,
            pps_range: (500.0, 1500.0),
            udp_share_range: (0.06, 0.09),
            port_population: 20_000,
            ip_population: 50_000,
            seed: 1,
            period: 86_400.0,
            udp_new_flow_prob: 0.35,
            tcp_new_flow_prob: 0.05,
            flow_window: 2.0,
            port_zipf_exponent: 0.9,
            ip_zipf_exponent: 1.0,
        }
    }

    /// Full backbone rates: 50,000 to 150,000 packets/s.
    pub fn backbone() -> Self {
        BenignProfile { pps_range: (50_000.0, 150_000.0), ip_population: 200_000, ..Self::desk() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::InvalidProfile(m.to_string()));
        let (plo, phi) = self.pps_range;
        let (slo, shi) = self.udp_share_range;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad("duration must be positive");
        }
        if !(plo > 0.0 && plo <= phi && phi.is_finite()) {
            return bad("pps range must satisfy 0 < low <= high");
        }
        if !(slo > 0.0 && slo <= shi && shi < 1.0) {
            return bad("udp share range must satisfy 0 < low <= high < 1");
        }
        if self.port_population == 0 || self.port_population > 65_535 {
            return bad("port population must be in 1..=65535");
        }
        if self.ip_population == 0 || self.ip_population > 1 << 28 {
            return bad("ip population must be in 1..=2^28");
        }
        if !(self.period > 0.0) || !(self.flow_window > 0.0) {
            return bad("period and flow window must be positive");
        }
        for p in [self.udp_new_flow_prob, self.tcp_new_flow_prob] {
            if !(p > 0.0 && p <= 1.0) {
                return bad("new-flow probabilities must lie in (0, 1]");
            }
        }
        if !(self.port_zipf_exponent > 0.0) || !(self.ip_zipf_exponent > 0.0) {
            return bad("zipf exponents must be positive");
        }
        Ok(())
    }

    const KEYS: [&'static str; 16] = [
        "start",
        "duration",
        "pps_low",
        "pps_high",
        "udp_share_low",
        "udp_share_high",
        "port_population",
        "ip_population",
        "seed",
        "period",
        "udp_new_flow_prob",
        "tcp_new_flow_prob",
        "flow_window",
        "port_zipf_exponent",
        "ip_zipf_exponent",
        "preset",
    ];

    /// Reads a `key=value` profile. Missing keys keep the values of the
    /// `preset` (`desk` or `backbone`, default `desk`).
    pub fn from_kv_str(text: &str) -> Result<Self, TrafficError> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(&Self::KEYS)?;
        let mut p = match kv.get::<String>("preset")?.as_deref() {
            None | Some("desk") => Self::desk(),
            Some("backbone") => Self::backbone(),
            Some(other) => return Err(TrafficError::InvalidProfile(format!("unknown preset `{other}`"))),
        };
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get($key)? {
                    $field = v;
                }
            };
        }
        set!(p.start, "start");
        set!(p.duration, "duration");
        set!(p.pps_range.0, "pps_low");
        set!(p.pps_range.1, "pps_high");
        set!(p.udp_share_range.0, "udp_share_low");
        set!(p.udp_share_range.1, "udp_share_high");
        set!(p.port_population, "port_population");
        set!(p.ip_population, "ip_population");
        set!(p.seed, "seed");
        set!(p.period, "period");
        set!(p.udp_new_flow_prob, "udp_new_flow_prob");
        set!(p.tcp_new_flow_prob, "tcp_new_flow_prob");
        set!(p.flow_window, "flow_window");
        set!(p.port_zipf_exponent, "port_zipf_exponent");
        set!(p.ip_zipf_exponent, "ip_zipf_exponent");
        p.validate()?;
        Ok(p)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "start={}\nduration={}\npps_low={}\npps_high={}\nudp_share_low={}\nudp_share_high={}\n\
             port_population={}\nip_population={}\nseed={}\nperiod={}\nudp_new_flow_prob={}\n\
             tcp_new_flow_prob={}\nflow_window={}\nport_zipf_exponent={}\nip_zipf_exponent={}\n",
            self.start,
            self.duration,
            self.pps_range.0,
            self.pps_range.1,
            self.udp_share_range.0,
            self.udp_share_range.1,
            self.port_population,
            self.ip_population,
            self.seed,
            self.period,
            self.udp_new_flow_prob,
            self.tcp_new_flow_prob,
            self.flow_window,
            self.port_zipf_exponent,
            self.ip_zipf_exponent,
        )
    }
}

/// True for addresses a backbone host could plausibly have: not private,
/// loopback, link-local, shared, benchmarking, documentation, multicast
/// or reserved.
pub fn is_public_unicast(ip: Ipv4Addr) -> bool {
    let o = ip.octets();
    !(ip.is_unspecified()
        || ip.is_private()
        || ip.is_loopback()
        || ip.is_link_local()
        || ip.is_documentation()
        || ip.is_multicast()
        || ip.is_broadcast()
        || o[0] == 0
        || o[0] >= 240
        || (o[0] == 100 && (o[1] & 0xc0) == 64)
        || (o[0] == 198 && (o[1] & 0xfe) == 18)
        || (o[0] == 192 && o[1] == 0 && o[2] == 0))
}

pub(crate) fn random_public_ip<R: Rng>(rng: &mut R) -> Ipv4Addr {
    loop {
        let ip = Ipv4Addr::from(rng.gen::<u32>());
        if is_public_unicast(ip) {
            return ip;
        }
    }
}

fn port_pool<R: Rng>(n: usize, rng: &mut R) -> Vec<u16> {
    let mut pool: Vec<u16> = SERVICE_PORTS.iter().copied().take(n).collect();
    let mut seen: FxHashSet<u16> = pool.iter().copied().collect();
    let mut rest: Vec<u16> = (1024..=65535).filter(|p| !seen.contains(p)).collect();
    rest.shuffle(rng);
    for p in rest {
        if pool.len() >= n {
            break;
        }
        if seen.insert(p) {
            pool.push(p);
        }
    }
    if pool.len() < n {
        let mut low: Vec<u16> = (1..1024).filter(|p| !seen.contains(p)).collect();
        low.shuffle(rng);
        pool.extend(low.into_iter().take(n - pool.len()));
    }
    pool
}

fn ip_pool<R: Rng>(n: usize, rng: &mut R) -> Vec<Ipv4Addr> {
    let mut seen = FxHashSet::default();
    let mut pool = Vec::with_capacity(n);
    while pool.len() < n {
        let ip = random_public_ip(rng);
        if seen.insert(ip) {
            pool.push(ip);
        }
    }
    pool
}

/// Sinusoid confined to a slightly narrowed `[low, high]`, so that
/// counting effects at frame edges stay inside the nominal range.
#[derive(Clone, Copy, Debug)]
struct Curve {
    low: f64,
    high: f64,
    phase: f64,
    period: f64,
}

impl Curve {
    fn new((low, high): (f64, f64), inset: f64, phase: f64, period: f64) -> Self {
        let pad = (high - low) * inset;
        Curve { low: low + pad, high: high - pad, phase, period }
    }

    fn at(&self, t: f64) -> f64 {
        let s = (TAU * t / self.period + self.phase).sin();
        self.low + (self.high - self.low) * 0.5 * (1.0 + s)
    }
}

struct Endpoints {
    ports: Vec<u16>,
    ips: Vec<Ipv4Addr>,
    port_zipf: Zipf<f64>,
    ip_zipf: Zipf<f64>,
}

impl Endpoints {
    fn pick_port<R: Rng>(&self, rng: &mut R) -> u16 {
        let rank = self.port_zipf.sample(rng) as usize;
        self.ports[rank.clamp(1, self.ports.len()) - 1]
    }

    fn pick_ip<R: Rng>(&self, rng: &mut R) -> Ipv4Addr {
        let rank = self.ip_zipf.sample(rng) as usize;
        self.ips[rank.clamp(1, self.ips.len()) - 1]
    }
}

/// Chooses each packet's flow: a fresh flow with probability `new_prob`,
/// otherwise the flow of a uniformly chosen packet from the last `window`
/// seconds. Busy flows are picked more often, which gives heavy-tailed
/// flow sizes.
struct FlowPicker {
    protocol: IpProtocol,
    new_prob: f64,
    window: f64,
    recent: VecDeque<(f64, FlowKey)>,
    rng: ChaCha8Rng,
}

impl FlowPicker {
    fn pick(&mut self, ts: f64, endpoints: &Endpoints) -> FlowKey {
        while self.recent.front().is_some_and(|(t, _)| *t < ts - self.window) {
            self.recent.pop_front();
        }
        let key = if self.recent.is_empty() || self.rng.gen_bool(self.new_prob) {
            FlowKey {
                src_ip: endpoints.pick_ip(&mut self.rng),
                dst_ip: endpoints.pick_ip(&mut self.rng),
                protocol: self.protocol,
                src_port: endpoints.pick_port(&mut self.rng),
                dst_port: endpoints.pick_port(&mut self.rng),
            }
        } else {
            let i = self.rng.gen_range(0..self.recent.len());
            self.recent[i].1
        };
        self.recent.push_back((ts, key));
        key
    }
}

const COUNTED_TCP: FlowKey = FlowKey {
    src_ip: Ipv4Addr::UNSPECIFIED,
    dst_ip: Ipv4Addr::UNSPECIFIED,
    protocol: IpProtocol::Tcp,
    src_port: 0,
    dst_port: 0,
};

/// Deterministic benign packet stream for a profile.
///
/// Packet slots are laid out by the rate curve; each packet gets a random
/// offset inside its slot, so order is preserved and rates never drift.
/// UDP packets are placed by a credit counter on the share curve. Timing,
/// UDP flows and TCP flows use separate random streams, so switching TCP
/// flow detail off leaves every timestamp and UDP packet unchanged.
pub struct BenignGenerator {
    slot: f64,
    end: f64,
    pps: Curve,
    share: Curve,
    credit: f64,
    timing: ChaCha8Rng,
    endpoints: Endpoints,
    udp: FlowPicker,
    tcp: Option<FlowPicker>,
}

impl BenignGenerator {
    pub fn new(profile: &BenignProfile) -> Result<Self, TrafficError> {
        profile.validate()?;
        let mut setup = ChaCha8Rng::seed_from_u64(profile.seed);
        let ports = port_pool(profile.port_population, &mut setup);
        let ips = ip_pool(profile.ip_population, &mut setup);
        let port_zipf = Zipf::new(ports.len() as u64, profile.port_zipf_exponent)
            .map_err(|e| TrafficError::InvalidProfile(e.to_string()))?;
        let ip_zipf = Zipf::new(ips.len() as u64, profile.ip_zipf_exponent)
            .map_err(|e| TrafficError::InvalidProfile(e.to_string()))?;
        let pps = Curve::new(profile.pps_range, 0.02, setup.gen_range(0.0..TAU), profile.period);
        let share = Curve::new(profile.udp_share_range, 0.1, setup.gen_range(0.0..TAU), profile.period);
        let credit = setup.gen::<f64>();
        let picker = |protocol, new_prob, rng| FlowPicker {
            protocol,
            new_prob,
            window: profile.flow_window,
            recent: VecDeque::new(),
            rng,
        };
        Ok(BenignGenerator {
            slot: profile.start,
            end: profile.end(),
            pps,
            share,
            credit,
            timing: ChaCha8Rng::seed_from_u64(setup.gen()),
            udp: picker(IpProtocol::Udp, profile.udp_new_flow_prob, ChaCha8Rng::seed_from_u64(setup.gen())),
            tcp: Some(picker(IpProtocol::Tcp, profile.tcp_new_flow_prob, ChaCha8Rng::seed_from_u64(setup.gen()))),
            endpoints: Endpoints { ports, ips, port_zipf, ip_zipf },
        })
    }

    /// Emits TCP packets with a zeroed key: enough for packet counts, much
    /// cheaper for long sweeps.
    pub fn count_tcp_only(mut self) -> Self {
        self.tcp = None;
        self
    }
}

impl Iterator for BenignGenerator {
    type Item = SimPacket;

    fn next(&mut self) -> Option<SimPacket> {
        if self.slot >= self.end {
            return None;
        }
        let width = 1.0 / self.pps.at(self.slot);
        let ts = (self.slot + self.timing.gen::<f64>() * width).min(self.slot + width * 0.999_999);
        if ts >= self.end {
            self.slot = self.end;
            return None;
        }
        self.credit += self.share.at(self.slot);
        self.slot += width;
        let key = if self.credit >= 1.0 {
            self.credit -= 1.0;
            self.udp.pick(ts, &self.endpoints)
        } else {
            match &mut self.tcp {
                Some(tcp) => tcp.pick(ts, &self.endpoints),
                None => COUNTED_TCP,
            }
        };
        Some(SimPacket { ts, key, label: Label::Benign })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn public_unicast_filter() {
        for ip in ["10.1.2.3", "192.0.2.1", "198.51.100.7", "203.0.113.9", "100.64.0.1", "198.19.0.1", "224.0.0.1"] {
            assert!(!is_public_unicast(ip.parse().unwrap()), "{ip}");
        }
        assert!(is_public_unicast("8.8.8.8".parse().unwrap()));
    }

    #[test]
    fn pools_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ports = port_pool(5000, &mut rng);
        assert_eq!(ports[0], 53);
        assert_eq!(ports.iter().collect::<FxHashSet<_>>().len(), 5000);
        assert_eq!(port_pool(65_535, &mut rng).len(), 65_535);
        let ips = ip_pool(1000, &mut rng);
        assert!(ips.iter().all(|ip| is_public_unicast(*ip)));
    }

    #[test]
    fn same_seed_same_stream() {
        let p = BenignProfile::desk().with_duration(5.0).with_seed(42);
        let a: Vec<_> = BenignGenerator::new(&p).unwrap().collect();
        let b: Vec<_> = BenignGenerator::new(&p).unwrap().collect();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].ts <= w[1].ts));
        assert!(a.iter().all(|x| x.ts >= 0.0 && x.ts < 5.0));
    }

    #[test]
    fn counting_mode_keeps_udp() {
        let p = BenignProfile::desk().with_duration(20.0).with_seed(3);
        let full: Vec<_> = BenignGenerator::new(&p).unwrap().collect();
        let lean: Vec<_> = BenignGenerator::new(&p).unwrap().count_tcp_only().collect();
        assert_eq!(full.len(), lean.len());
        for (f, l) in full.iter().zip(&lean) {
            assert_eq!(f.ts, l.ts);
            assert_eq!(f.key.protocol, l.key.protocol);
            if f.key.protocol == IpProtocol::Udp {
                assert_eq!(f.key, l.key);
            }
        }
    }

    #[test]
    fn profile_file_round_trip() {
        let p = BenignProfile::desk().with_seed(9).with_duration(60.0);
        assert_eq!(BenignProfile::from_kv_str(&p.to_kv_string()).unwrap(), p);
        let b = BenignProfile::from_kv_str("preset=backbone\nduration=10\n").unwrap();
        assert_eq!(b.pps_range, (50_000.0, 150_000.0));
        assert!(BenignProfile::from_kv_str("pps_low=10\npps_high=5\n").is_err());
        assert!(BenignProfile::from_kv_str("bogus=1\n").is_err());
    }
}
