use std::collections::VecDeque;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;

use super::benign::random_public_ip;
use super::{Label, SimPacket, TrafficError};
use crate::packet::{FlowKey, IpProtocol};

/// A reflective attack: responses from `attack_port` of many reflectors,
/// spread evenly over the target addresses.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    /// Attack flows per frame as a multiple of the frame's benign UDP flows.
    pub magnitude: f64,
    pub attack_port: u16,
    pub targets: Vec<Ipv4Addr>,
    pub start: f64,
    pub stop: f64,
    /// Number of distinct reflector addresses.
    pub reflector_pool: usize,
    pub packets_per_flow: u32,
    /// Remove benign flows from the attack port or to a target while the
    /// attack runs, so the attack alone shapes those histogram bins.
    pub worst_case: bool,
    /// Seconds over which the magnitude ramps up linearly from zero.
    pub ramp: Option<f64>,
    pub seed: u64,
}

impl AttackSpec {
    pub fn new(magnitude: f64, attack_port: u16, targets: Vec<Ipv4Addr>, start: f64, stop: f64) -> Self {
        AttackSpec {
            magnitude,
            attack_port,
            targets,
            start,
            stop,
            reflector_pool: 100_000,
            packets_per_flow: 1,
            worst_case: true,
            ramp: None,
            seed: 0x5eed,
        }
    }

    /// `count` consecutive addresses starting at `first`.
    pub fn subnet_targets(first: Ipv4Addr, count: u32) -> Vec<Ipv4Addr> {
        (0..count).map(|i| Ipv4Addr::from(u32::from(first) + i)).collect()
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        let bad = |m: &str| Err(TrafficError::InvalidAttack(m.to_string()));
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return bad("magnitude must be a finite number >= 0");
        }
        if self.targets.is_empty() {
            return bad("at least one target is required");
        }
        if !(self.start <= self.stop) {
            return bad("start must not be after stop");
        }
        if self.reflector_pool == 0 || self.packets_per_flow == 0 {
            return bad("reflector pool and packets per flow must be positive");
        }
        if self.ramp.is_some_and(|r| !(r > 0.0)) {
            return bad("ramp must be positive");
        }
        Ok(())
    }

    fn active(&self) -> bool {
        self.magnitude > 0.0
    }

    fn covers(&self, ts: f64) -> bool {
        ts >= self.start && ts < self.stop
    }

    /// Benign flows the worst case removes.
    pub fn removes(&self, key: &FlowKey) -> bool {
        self.worst_case
            && self.active()
            && key.protocol == IpProtocol::Udp
            && (key.src_port == self.attack_port || self.targets.contains(&key.dst_ip))
    }

    /// Magnitude in effect for a frame starting at `frame_start`.
    pub fn magnitude_at(&self, frame_start: f64) -> f64 {
        match self.ramp {
            Some(r) => self.magnitude * ((frame_start - self.start) / r).clamp(0.0, 1.0),
            None => self.magnitude,
        }
    }

    /// Attack flows for a frame with `benign_flows` flows left after removal.
    pub fn flow_count(&self, frame_start: f64, benign_flows: u64) -> u64 {
        (self.magnitude_at(frame_start) * benign_flows as f64).round() as u64
    }

    /// Generator for one frame; identical for packet- and frame-level use.
    fn frame_rng(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    /// How many of `flows` attack flows go to each target: round-robin from
    /// a random first target, so counts differ by at most one.
    pub fn per_target(&self, frame_index: u64, flows: u64) -> Vec<u64> {
        self.split_flows(&mut self.frame_rng(frame_index), flows)
    }

    fn split_flows(&self, rng: &mut ChaCha8Rng, flows: u64) -> Vec<u64> {
        let s = self.targets.len() as u64;
        let offset = rng.gen_range(0..s);
        (0..s)
            .map(|j| {
                let r = (j + s - offset) % s;
                (flows + s - 1 - r) / s
            })
            .collect()
    }
}

/// Merges an attack into a benign stream, frame by frame.
///
/// Frames are `[origin + i·l, origin + (i+1)·l)`. In every frame that
/// overlaps the attack window, benign flows hit by the worst-case rule are
/// removed (inside the window only), then `round(a · n)` fresh attack flows
/// are added, `n` being the benign UDP flows left in the frame. Attack
/// packets are spread uniformly over the overlap of frame and window.
pub struct AttackInjector<I: Iterator<Item = SimPacket>> {
    benign: std::iter::Peekable<I>,
    spec: AttackSpec,
    length: f64,
    origin: f64,
    out: VecDeque<SimPacket>,
    reflectors: Vec<Ipv4Addr>,
}

pub fn inject_attack<I>(benign: I, spec: AttackSpec, l: f64, origin: f64) -> Result<AttackInjector<I>, TrafficError>
where
    I: Iterator<Item = SimPacket>,
{
    spec.validate()?;
    if !(l > 0.0) {
        return Err(TrafficError::InvalidAttack("frame length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = spec.reflector_pool.min(1 << 20);
    let reflectors = (0..pool).map(|_| random_public_ip(&mut rng)).collect();
    Ok(AttackInjector { benign: benign.peekable(), spec, length: l, origin, out: VecDeque::new(), reflectors })
}

impl<I: Iterator<Item = SimPacket>> AttackInjector<I> {
    fn frame_index(&self, ts: f64) -> u64 {
        let start = |i: u64| self.origin + i as f64 * self.length;
        let mut i = ((ts - self.origin) / self.length).floor().max(0.0) as u64;
        while i > 0 && start(i) > ts {
            i -= 1;
        }
        while start(i + 1) <= ts {
            i += 1;
        }
        i
    }

    fn fill(&mut self) {
        let Some(first_ts) = self.benign.peek().map(|p| p.ts) else { return };
        let index = self.frame_index(first_ts);
        let start = self.origin + index as f64 * self.length;
        let end = self.origin + (index + 1) as f64 * self.length;
        let mut frame = Vec::new();
        while let Some(p) = self.benign.next_if(|p| p.ts < end) {
            frame.push(p);
        }
        let lo = start.max(self.spec.start);
        let hi = end.min(self.spec.stop);
        if !self.spec.active() || lo >= hi {
            self.out.extend(frame);
            return;
        }
        let spec = &self.spec;
        frame.retain(|p| !(spec.covers(p.ts) && spec.removes(&p.key)));
        let benign_flows =
            frame.iter().filter(|p| p.key.protocol == IpProtocol::Udp).map(|p| p.key).collect::<FxHashSet<_>>().len()
                as u64;
        let flows = spec.flow_count(start, benign_flows);
        let mut rng = spec.frame_rng(index);
        let per_target = spec.split_flows(&mut rng, flows);
        let mut used = FxHashSet::default();
        let mut attack = Vec::with_capacity((flows * spec.packets_per_flow as u64) as usize);
        for (target, &n) in spec.targets.iter().zip(&per_target) {
            for _ in 0..n {
                let key = loop {
                    let key = FlowKey {
                        src_ip: self.reflectors[rng.gen_range(0..self.reflectors.len())],
                        dst_ip: *target,
                        protocol: IpProtocol::Udp,
                        src_port: spec.attack_port,
                        dst_port: rng.gen_range(1024..=65535),
                    };
                    if used.insert(key) {
                        break key;
                    }
                };
                for _ in 0..spec.packets_per_flow {
                    let ts = rng.gen_range(lo..hi);
                    attack.push(SimPacket { ts, key, label: Label::Attack });
                }
            }
        }
        attack.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        // merge, benign first on equal timestamps
        let mut b = frame.into_iter().peekable();
        let mut a = attack.into_iter().peekable();
        loop {
            let take_benign = match (b.peek(), a.peek()) {
                (Some(x), Some(y)) => x.ts <= y.ts,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let next = if take_benign { b.next() } else { a.next() };
            self.out.extend(next);
        }
    }
}

impl<I: Iterator<Item = SimPacket>> Iterator for AttackInjector<I> {
    type Item = SimPacket;

    fn next(&mut self) -> Option<SimPacket> {
        while self.out.is_empty() {
            self.benign.peek()?;
            self.fill();
        }
        self.out.pop_front()
    }
}
