//! Parameter sweeps over benign and attacked frame sequences.
//!
//! A benign run is generated once and cut into frames for every frame
//! length of the grid. For each frame the attacked variant is derived
//! directly from the frame's flow table: worst-case removal and the
//! injected flows only touch the attack-port bin of the source-port
//! histogram and the target bins of the destination histogram, so their
//! entropies follow from a few [`EntropyAccumulator`] updates. This gives
//! the same indicators as packet-level injection at a fraction of the cost.

use std::net::Ipv4Addr;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::metrics::{Confusion, SweepResult};
use super::HarnessError;
use crate::detection::{
    udp_tcp_ratio, window_values, Base, Classifier, Combiner, EntropyAccumulator, FrameAggregator, FrameFlows,
    FrameIndicators, WindowValue,
};
use crate::kv::KvFile;
use crate::packet::FlowKey;
use crate::traffic::{AttackSpec, BenignGenerator, BenignProfile};

pub const DEFAULT_ENTROPY_THRESHOLDS: [f64; 7] = [-0.5, -1.0, -1.5, -2.0, -2.5, -3.0, -3.5];
pub const DEFAULT_RATIO_THRESHOLDS: [f64; 6] = [0.05, 0.1, 0.2, 0.25, 0.3, 0.35];
pub const DEFAULT_GAPS: [usize; 4] = [5, 10, 60, 300];
pub const DEFAULT_FRAME_LENGTHS: [f64; 7] = [1.0, 10.0, 30.0, 60.0, 90.0, 300.0, 600.0];
pub const DEFAULT_ENTROPY_COUNTS: [usize; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_MAGNITUDES: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
pub const DEFAULT_SUBNET_SIZES: [u32; 2] = [1, 8];

/// The parameter grid. Source-port runs use every base; destination-IP
/// runs count flows and ratio runs count packets.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub frame_lengths: Vec<f64>,
    pub gaps: Vec<usize>,
    pub entropy_counts: Vec<usize>,
    pub entropy_thresholds: Vec<f64>,
    pub ratio_thresholds: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub subnet_sizes: Vec<u32>,
    pub bases: Vec<Base>,
    pub combiners: Vec<Combiner>,
    pub classifiers: Vec<Classifier>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            frame_lengths: DEFAULT_FRAME_LENGTHS.to_vec(),
            gaps: DEFAULT_GAPS.to_vec(),
            entropy_counts: DEFAULT_ENTROPY_COUNTS.to_vec(),
            entropy_thresholds: DEFAULT_ENTROPY_THRESHOLDS.to_vec(),
            ratio_thresholds: DEFAULT_RATIO_THRESHOLDS.to_vec(),
            magnitudes: DEFAULT_MAGNITUDES.to_vec(),
            subnet_sizes: DEFAULT_SUBNET_SIZES.to_vec(),
            bases: vec![Base::Flows, Base::Packets],
            combiners: vec![Combiner::Mean, Combiner::Median],
            classifiers: vec![Classifier::SourcePort, Classifier::DestinationIp, Classifier::UdpRatio],
        }
    }
}

impl SweepGrid {
    pub const KEYS: [&'static str; 10] = ["l", "g", "e", "T_h", "T_r", "a", "s", "base", "combiner", "classifier"];

    /// Reads a `key=value` grid with comma-separated lists; missing keys
    /// keep the default grid.
    pub fn from_kv_str(text: &str) -> Result<Self, HarnessError> {
        let kv = KvFile::parse(text)?;
        kv.reject_unknown(&Self::KEYS)?;
        let mut g = SweepGrid::default();
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.get_list($key)? {
                    $field = v;
                }
            };
        }
        set!(g.frame_lengths, "l");
        set!(g.gaps, "g");
        set!(g.entropy_counts, "e");
        set!(g.entropy_thresholds, "T_h");
        set!(g.ratio_thresholds, "T_r");
        set!(g.magnitudes, "a");
        set!(g.subnet_sizes, "s");
        set!(g.bases, "base");
        set!(g.combiners, "combiner");
        set!(g.classifiers, "classifier");
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidGrid(m.to_string()));
        if self.frame_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return bad("frame lengths must be positive");
        }
        if self.gaps.contains(&0) || self.entropy_counts.contains(&0) {
            return bad("g and e must be at least 1");
        }
        if self.entropy_thresholds.iter().any(|&t| !(t < 0.0)) {
            return bad("T_h values must be negative");
        }
        if self.ratio_thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return bad("T_r values must lie in (0, 1)");
        }
        if self.magnitudes.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return bad("magnitudes must be finite and >= 0");
        }
        if self.subnet_sizes.iter().any(|s| !s.is_power_of_two()) {
            return bad("subnet sizes must be powers of two");
        }
        let lists = [
            self.frame_lengths.is_empty(),
            self.gaps.is_empty(),
            self.entropy_counts.is_empty(),
            self.magnitudes.is_empty(),
            self.subnet_sizes.is_empty(),
            self.combiners.is_empty(),
            self.classifiers.is_empty(),
        ];
        if lists.iter().any(|&e| e) {
            return bad("every grid dimension needs at least one value");
        }
        Ok(())
    }

    /// Every `(a, s)` pair of the grid.
    pub fn scenarios(&self) -> Vec<(f64, u32)> {
        let mut out = Vec::new();
        for &s in &self.subnet_sizes {
            for &a in &self.magnitudes {
                out.push((a, s));
            }
        }
        out
    }

    fn runs(&self) -> Vec<(Classifier, Base)> {
        let mut out = Vec::new();
        for &c in &self.classifiers {
            match c {
                Classifier::SourcePort => out.extend(self.bases.iter().map(|&b| (c, b))),
                Classifier::DestinationIp => out.push((c, Base::Flows)),
                Classifier::UdpRatio => out.push((c, Base::Packets)),
            }
        }
        out
    }
}

/// How attacks are laid over the benign run.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackTemplate {
    pub attack_port: u16,
    /// First of the `s` consecutive target addresses.
    pub first_target: Ipv4Addr,
    pub packets_per_flow: u32,
    pub worst_case: bool,
    pub seed: u64,
}

impl Default for AttackTemplate {
    fn default() -> Self {
        AttackTemplate {
            attack_port: 53,
            first_target: Ipv4Addr::new(198, 51, 100, 8),
            packets_per_flow: 1,
            worst_case: true,
            seed: 0x5eed,
        }
    }
}

impl AttackTemplate {
    /// Attack of magnitude `a` on `s` hosts over `[start, stop)`.
    pub fn spec(&self, a: f64, s: u32, start: f64, stop: f64) -> AttackSpec {
        let mut spec =
            AttackSpec::new(a, self.attack_port, AttackSpec::subnet_targets(self.first_target, s), start, stop);
        spec.packets_per_flow = self.packets_per_flow;
        spec.worst_case = self.worst_case;
        spec.seed = self.seed;
        spec
    }
}

/// Frame indicators of one frame length, benign and under each scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSeries {
    pub frame_length: f64,
    pub benign: Vec<FrameIndicators>,
    /// One sequence per scenario, in the order of [`SweepData::scenarios`].
    pub attacked: Vec<Vec<FrameIndicators>>,
}

/// Everything a sweep needs from the traffic.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepData {
    pub scenarios: Vec<(f64, u32)>,
    pub series: Vec<FrameSeries>,
}

impl SweepData {
    pub fn series(&self, l: f64) -> Option<&FrameSeries> {
        self.series.iter().find(|s| s.frame_length == l)
    }

    pub fn scenario_index(&self, a: f64, s: u32) -> Option<usize> {
        self.scenarios.iter().position(|&(x, y)| x == a && y == s)
    }
}

struct Histograms {
    src_flows: FxHashMap<u16, u64>,
    src_packets: FxHashMap<u16, u64>,
    dst_flows: FxHashMap<Ipv4Addr, u64>,
}

/// Per-bin reductions caused by worst-case removal.
#[derive(Default)]
struct Removed {
    src_flows: FxHashMap<u16, u64>,
    src_packets: FxHashMap<u16, u64>,
    dst_flows: FxHashMap<Ipv4Addr, u64>,
    flows: u64,
    packets: u64,
}

fn removed_by(frame: &FrameFlows, spec: &AttackSpec) -> Removed {
    let mut r = Removed::default();
    for (key, &pkts) in &frame.udp {
        if spec.removes(key) {
            *r.src_flows.entry(key.src_port).or_insert(0) += 1;
            *r.src_packets.entry(key.src_port).or_insert(0) += pkts;
            *r.dst_flows.entry(key.dst_ip).or_insert(0) += 1;
            r.flows += 1;
            r.packets += pkts;
        }
    }
    r
}

fn get<K: std::hash::Hash + Eq>(m: &FxHashMap<K, u64>, k: &K) -> u64 {
    m.get(k).copied().unwrap_or(0)
}

fn indicators(
    src_flows: &EntropyAccumulator,
    src_packets: &EntropyAccumulator,
    dst_flows: &EntropyAccumulator,
    udp_packets: u64,
    tcp_packets: u64,
) -> FrameIndicators {
    FrameIndicators {
        src_port_flows: src_flows.entropy(),
        src_port_packets: src_packets.entropy(),
        dst_ip: dst_flows.entropy(),
        udp_ratio: udp_tcp_ratio(udp_packets, tcp_packets),
        udp_empty: udp_packets == 0,
        empty: udp_packets + tcp_packets == 0,
    }
}

/// Benign indicators of a frame and its indicators under each attack,
/// assuming every attack covers the whole frame. Matches what
/// [`crate::traffic::inject_attack`] followed by frame statistics yields.
pub fn frame_indicators(frame: &FrameFlows, specs: &[AttackSpec]) -> (FrameIndicators, Vec<FrameIndicators>) {
    let mut h = Histograms {
        src_flows: FxHashMap::default(),
        src_packets: FxHashMap::default(),
        dst_flows: FxHashMap::default(),
    };
    for (key, &pkts) in &frame.udp {
        *h.src_flows.entry(key.src_port).or_insert(0) += 1;
        *h.src_packets.entry(key.src_port).or_insert(0) += pkts;
        *h.dst_flows.entry(key.dst_ip).or_insert(0) += 1;
    }
    let sf = EntropyAccumulator::from_counts(h.src_flows.values().copied());
    let sp = EntropyAccumulator::from_counts(h.src_packets.values().copied());
    let df = EntropyAccumulator::from_counts(h.dst_flows.values().copied());
    let benign = indicators(&sf, &sp, &df, frame.udp_packets, frame.tcp_packets);

    // removal depends only on port and targets, shared across magnitudes
    let mut removals: Vec<((u16, Vec<Ipv4Addr>), Removed)> = Vec::new();
    let attacked = specs
        .iter()
        .map(|spec| {
            if spec.magnitude <= 0.0 || frame.is_empty() {
                return benign;
            }
            let id = (spec.attack_port, spec.targets.clone());
            let r = match removals.iter().position(|(k, _)| *k == id) {
                Some(i) => &removals[i].1,
                None => {
                    removals.push((id, removed_by(frame, spec)));
                    &removals.last().expect("just pushed").1
                }
            };
            let (mut sf, mut sp, mut df) = (sf, sp, df);
            for (port, &n) in &r.src_flows {
                let old = get(&h.src_flows, port);
                sf.change(old, old - n);
            }
            for (port, &n) in &r.src_packets {
                let old = get(&h.src_packets, port);
                sp.change(old, old - n);
            }
            for (ip, &n) in &r.dst_flows {
                let old = get(&h.dst_flows, ip);
                df.change(old, old - n);
            }
            let remaining = frame.udp.len() as u64 - r.flows;
            let flows = spec.flow_count(frame.start, remaining);
            let packets = flows * spec.packets_per_flow as u64;
            let p = spec.attack_port;
            let old = get(&h.src_flows, &p) - get(&r.src_flows, &p);
            sf.change(old, old + flows);
            let old = get(&h.src_packets, &p) - get(&r.src_packets, &p);
            sp.change(old, old + packets);
            for (ip, n) in spec.targets.iter().zip(spec.per_target(frame.index, flows)) {
                let old = get(&h.dst_flows, ip) - get(&r.dst_flows, ip);
                df.change(old, old + n);
            }
            indicators(&sf, &sp, &df, frame.udp_packets - r.packets + packets, frame.tcp_packets)
        })
        .collect();
    (benign, attacked)
}

/// Generates the benign run once and derives the frame series for every
/// frame length and scenario. Only complete frames are kept.
pub fn collect_sweep_data(
    profile: &BenignProfile,
    template: &AttackTemplate,
    frame_lengths: &[f64],
    scenarios: &[(f64, u32)],
) -> Result<SweepData, HarnessError> {
    let specs: Vec<AttackSpec> =
        scenarios.iter().map(|&(a, s)| template.spec(a, s, profile.start, profile.end())).collect();
    for s in &specs {
        s.validate()?;
    }
    let end = profile.end();
    let mut aggs: Vec<FrameAggregator> =
        frame_lengths.iter().map(|&l| FrameAggregator::with_origin(l, profile.start).track_tcp_flows(false)).collect();
    let mut series: Vec<FrameSeries> = frame_lengths
        .iter()
        .map(|&l| FrameSeries { frame_length: l, benign: Vec::new(), attacked: vec![Vec::new(); specs.len()] })
        .collect();
    let add = |series: &mut FrameSeries, frame: FrameFlows| {
        if frame.start + frame.length > end + 1e-9 * end.abs().max(1.0) {
            return;
        }
        let (benign, attacked) = frame_indicators(&frame, &specs);
        series.benign.push(benign);
        for (seq, ind) in series.attacked.iter_mut().zip(attacked) {
            seq.push(ind);
        }
    };
    let generator = BenignGenerator::new(profile)?.count_tcp_only();
    for p in generator {
        let key: Option<FlowKey> = Some(p.key);
        for (agg, s) in aggs.iter_mut().zip(series.iter_mut()) {
            agg.push_key(p.ts, key, &mut |f| add(s, f))?;
        }
    }
    for (agg, s) in aggs.into_iter().zip(series.iter_mut()) {
        let mut agg = agg;
        agg.advance_to(end, &mut |f| add(s, f))?;
        if let Some(last) = agg.finish() {
            add(s, last);
        }
    }
    Ok(SweepData { scenarios: scenarios.to_vec(), series })
}

/// Results of a sweep plus the consistency checks run alongside.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    /// Evaluation points where a classifier fired at some threshold but not
    /// at a laxer one.
    pub monotonicity_violations: u64,
    /// Verdicts checked for monotonicity.
    pub monotonicity_checks: u64,
    /// `(l, g, e)` combinations with too few frames, left out.
    pub skipped: Vec<(f64, usize, usize)>,
}

fn column(values: &[[WindowValue; 3]], k: usize) -> Vec<WindowValue> {
    values.iter().map(|v| v[k]).collect()
}

/// Confusion counts per threshold for one value column, and monotonicity
/// violations. `thresholds` must be sorted from strictest to laxest.
fn count_fires(values: &[WindowValue], classifier: Classifier, thresholds: &[f64]) -> (Vec<u64>, u64) {
    let mut fires = vec![0u64; thresholds.len()];
    let mut violations = 0;
    let mut prev;
    for v in values {
        prev = false;
        for (k, &t) in thresholds.iter().enumerate() {
            let f = match classifier {
                Classifier::UdpRatio => v.fires_ratio(t),
                _ => v.fires_entropy(t),
            };
            if prev && !f {
                violations += 1;
            }
            prev = f;
            fires[k] += f as u64;
        }
    }
    (fires, violations)
}

struct Task {
    l: f64,
    g: usize,
    e: usize,
    combiner: Combiner,
}

/// Evaluates every grid point on `data`. For each evaluation point `i` the
/// reference is benign frame `i`; the current window is frames
/// `i+g .. i+g+e`, benign for FP/TN and attacked for TP/FN. A magnitude of
/// 0 gives benign verdicts only.
pub fn evaluate(data: &SweepData, grid: &SweepGrid) -> Result<SweepOutcome, HarnessError> {
    grid.validate()?;
    let mut scenario_ids = Vec::new();
    for (a, s) in grid.scenarios() {
        let id = data
            .scenario_index(a, s)
            .ok_or_else(|| HarnessError::InvalidGrid(format!("no traffic collected for a={a}, s={s}")))?;
        scenario_ids.push((a, s, id));
    }
    let mut tasks = Vec::new();
    for &l in &grid.frame_lengths {
        if data.series(l).is_none() {
            return Err(HarnessError::InvalidGrid(format!("no frames collected for l={l}")));
        }
        for &g in &grid.gaps {
            for &e in &grid.entropy_counts {
                for &combiner in &grid.combiners {
                    tasks.push(Task { l, g, e, combiner });
                }
            }
        }
    }
    let runs = grid.runs();
    let sorted = |v: &[f64], descending: bool| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| if descending { v[b].total_cmp(&v[a]) } else { v[a].total_cmp(&v[b]) });
        idx
    };
    // strictest first: most negative T_h, largest T_r
    let th_order = sorted(&grid.entropy_thresholds, false);
    let tr_order = sorted(&grid.ratio_thresholds, true);

    let parts: Vec<Option<(Vec<SweepResult>, u64, u64)>> = tasks
        .par_iter()
        .map(|t| {
            let series = data.series(t.l).expect("checked above");
            let n = series.benign.len();
            if n < t.g + t.e {
                return None;
            }
            let points = n - t.g - t.e + 1;
            let window = |cur: &[FrameIndicators], base: Base| -> Vec<[WindowValue; 3]> {
                (0..points)
                    .map(|i| window_values(&series.benign[i], &cur[i + t.g..i + t.g + t.e], base, t.combiner))
                    .collect()
            };
            let mut results = Vec::new();
            let mut violations = 0;
            let mut checks = 0;
            for base in [Base::Flows, Base::Packets] {
                let mine: Vec<_> = runs.iter().filter(|r| r.1 == base).collect();
                if mine.is_empty() {
                    continue;
                }
                let benign = window(&series.benign, base);
                let attacked: Vec<_> = scenario_ids
                    .iter()
                    .map(|&(a, _, id)| (a > 0.0).then(|| window(&series.attacked[id], base)))
                    .collect();
                for &&(classifier, _) in &mine {
                    let k = match classifier {
                        Classifier::SourcePort => 0,
                        Classifier::DestinationIp => 1,
                        Classifier::UdpRatio => 2,
                    };
                    let (thresholds, order) = match classifier {
                        Classifier::UdpRatio => (&grid.ratio_thresholds, &tr_order),
                        _ => (&grid.entropy_thresholds, &th_order),
                    };
                    let ordered: Vec<f64> = order.iter().map(|&i| thresholds[i]).collect();
                    let (fp, v) = count_fires(&column(&benign, k), classifier, &ordered);
                    violations += v;
                    checks += (points * ordered.len()) as u64;
                    for (&(a, s, _), att) in scenario_ids.iter().zip(&attacked) {
                        let tp = match att {
                            Some(att) => {
                                let (tp, v) = count_fires(&column(att, k), classifier, &ordered);
                                violations += v;
                                checks += (points * ordered.len()) as u64;
                                Some(tp)
                            }
                            None => None,
                        };
                        for (i, &threshold) in thresholds.iter().enumerate() {
                            let pos = order.iter().position(|&o| o == i).expect("permutation");
                            let fp = fp[pos];
                            let (tp, fn_) = match &tp {
                                Some(tp) => (tp[pos], points as u64 - tp[pos]),
                                None => (0, 0),
                            };
                            let is_ratio = classifier == Classifier::UdpRatio;
                            results.push(SweepResult {
                                classifier,
                                base,
                                combiner: t.combiner,
                                frame_length: t.l,
                                gap: t.g,
                                entropy_count: t.e,
                                entropy_threshold: (!is_ratio).then_some(threshold),
                                ratio_threshold: is_ratio.then_some(threshold),
                                magnitude: a,
                                subnet_size: s,
                                confusion: Confusion::new(tp, fp, points as u64 - fp, fn_),
                            });
                        }
                    }
                }
            }
            Some((results, violations, checks))
        })
        .collect();

    let mut outcome = SweepOutcome::default();
    for (t, part) in tasks.iter().zip(parts) {
        match part {
            Some((results, v, c)) => {
                outcome.results.extend(results);
                outcome.monotonicity_violations += v;
                outcome.monotonicity_checks += c;
            }
            None => {
                let key = (t.l, t.g, t.e);
                if !outcome.skipped.contains(&key) {
                    outcome.skipped.push(key);
                }
            }
        }
    }
    if outcome.results.is_empty() && !outcome.skipped.is_empty() {
        let &(_, g, e) = &outcome.skipped[0];
        let available = data.series.iter().map(|s| s.benign.len()).max().unwrap_or(0);
        return Err(HarnessError::Detection(crate::detection::DetectionError::InsufficientHistory {
            needed: g + e,
            available,
        }));
    }
    Ok(outcome)
}
