use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ipnet::Ipv4Net;

use drdos_defense::detection::{
    write_frame_csv, Base, Combiner, Detector, DetectorConfig, FrameAggregator, FrameStats,
};
use drdos_defense::flow::{dump_table, Disposition};
use drdos_defense::harness::{
    check_equivalence, collect_sweep_data, emit_csv, emit_plot_data, evaluate, read_results_csv, run_scenario_with,
    summary_table, AttackTemplate, HarnessError, ScenarioConfig, SweepGrid,
};
use drdos_defense::mitigation::{MitigationController, MitigationSettings, Variant};
use drdos_defense::packet::{HostIdentity, MacAddr};
use drdos_defense::traffic::{
    inject_attack, AttackSpec, BenignGenerator, BenignProfile, PcapHeader, PcapReader, PcapWriter,
};

#[derive(Parser)]
#[command(name = "drdos", version, about = "Reflective DDoS detection and alias-NAT mitigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic traffic, optionally with an attack, as pcap.
    Generate(GenerateArgs),
    /// Run the detector over a pcap file.
    Detect(DetectArgs),
    /// Build a mitigation plan, print its state and rules, optionally filter a pcap.
    Mitigate(MitigateArgs),
    /// Precision/recall/accuracy over a parameter grid.
    Sweep(SweepArgs),
    /// Closed-loop detection and mitigation run with ground-truth accounting.
    Scenario(ScenarioArgs),
    /// Compare the two rule programs on random packets.
    Equivalence(EquivalenceArgs),
    /// Summarize a sweep result CSV.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct ProfileArgs {
    /// key=value profile file; overrides --preset.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// desk (500-1500 pps) or backbone (50k-150k pps).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Seconds of traffic.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProfileArgs {
    fn load(&self) -> Result<BenignProfile, HarnessError> {
        let mut p = match &self.profile {
            Some(path) => BenignProfile::from_kv_str(&fs::read_to_string(path)?)?,
            None => BenignProfile::from_kv_str(&format!("preset={}", self.preset))?,
        };
        if let Some(d) = self.duration {
            p = p.with_duration(d);
        }
        if let Some(s) = self.seed {
            p = p.with_seed(s);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Clone)]
struct AttackArgs {
    /// Attack magnitude a; 0 disables the attack.
    #[arg(short = 'a', long, default_value_t = 0.0)]
    magnitude: f64,
    #[arg(long, default_value_t = 53)]
    attack_port: u16,
    /// First target address.
    #[arg(long, default_value = "198.51.100.8")]
    target: Ipv4Addr,
    /// Number of consecutive target addresses.
    #[arg(short = 's', long, default_value_t = 1)]
    subnet_size: u32,
    /// Attack start, seconds from the profile start.
    #[arg(long, default_value_t = 0.0)]
    attack_start: f64,
    /// Attack end, seconds from the profile start; default: end of traffic.
    #[arg(long)]
    attack_stop: Option<f64>,
    /// Keep benign flows on the attack port and to the targets.
    #[arg(long)]
    no_worst_case: bool,
    #[arg(long, default_value_t = 1)]
    packets_per_flow: u32,
}

impl AttackArgs {
    fn spec(&self, profile: &BenignProfile) -> AttackSpec {
        let stop = self.attack_stop.map(|s| profile.start + s).unwrap_or(profile.end());
        let mut spec = AttackSpec::new(
            self.magnitude,
            self.attack_port,
            AttackSpec::subnet_targets(self.target, self.subnet_size),
            profile.start + self.attack_start,
            stop,
        );
        spec.worst_case = !self.no_worst_case;
        spec.packets_per_flow = self.packets_per_flow;
        spec
    }
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// Frame length l in seconds.
    #[arg(short = 'l', long, default_value_t = 10.0)]
    frame_length: f64,
    /// Gap g in frames.
    #[arg(short = 'g', long, default_value_t = 5)]
    gap: usize,
    /// Frames e combined into the current value.
    #[arg(short = 'e', long, default_value_t = 1)]
    entropy_count: usize,
    /// Entropy threshold T_h (bits, negative).
    #[arg(long = "t-h", default_value_t = -3.0, allow_hyphen_values = true)]
    t_h: f64,
    /// Ratio threshold T_r.
    #[arg(long = "t-r", default_value_t = 0.05)]
    t_r: f64,
    #[arg(long, default_value = "flows")]
    base: Base,
    #[arg(long, default_value = "mean")]
    combiner: Combiner,
    /// Also require the destination-IP or ratio classifier.
    #[arg(long)]
    prescreen: bool,
}

impl DetectorArgs {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            frame_length: self.frame_length,
            gap: self.gap,
            entropy_count: self.entropy_count,
            entropy_threshold: self.t_h,
            ratio_threshold: self.t_r,
            subnet_size: 1,
            base: self.base,
            combiner: self.combiner,
            prescreen: self.prescreen,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    attack: AttackArgs,
    /// Frame length used to size the attack per frame.
    #[arg(short = 'l', long, default_value_t = 10.0)]
    frame_length: f64,
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the profile used, as key=value.
    #[arg(long)]
    profile_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Per-frame statistics as CSV.
    #[arg(long)]
    frames_csv: Option<PathBuf>,
}

#[derive(Args)]
struct MitigateArgs {
    #[arg(long)]
    target_ip: Ipv4Addr,
    #[arg(long, default_value = "02:00:00:00:00:01")]
    target_mac: MacAddr,
    #[arg(long, default_value_t = 24)]
    target_prefix: u8,
    #[arg(long)]
    attack_port: u16,
    #[arg(long, default_value = "switch")]
    variant: Variant,
    #[arg(long, default_value = "203.0.113.0/24")]
    alias_subnet: Ipv4Net,
    /// Rotate the alias every this many seconds of input time.
    #[arg(long)]
    rotate_every: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    grace: f64,
    /// Reproducible alias draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the plan state here.
    #[arg(long)]
    state_out: Option<PathBuf>,
    /// Filter this pcap through the pipeline.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Write delivered, forwarded and reply frames here.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file with keys l, g, e, T_h, T_r, a, s, base, combiner, classifier.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    profile: ProfileArgs,
    #[arg(long, default_value_t = 53)]
    attack_port: u16,
    #[arg(short, long)]
    out: PathBuf,
    /// Precision/recall series per threshold.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    attack: AttackArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, default_value = "switch")]
    variant: Variant,
    #[arg(long)]
    rotate_every: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    grace: f64,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[arg(long, default_value_t = 100_000)]
    packets: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "198.51.100.8")]
    target_ip: Ipv4Addr,
    #[arg(long, default_value_t = 53)]
    attack_port: u16,
    #[arg(long, default_value = "203.0.113.0/24")]
    alias_subnet: Ipv4Net,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn generate(args: GenerateArgs) -> Result<(), HarnessError> {
    let profile = args.profile.load()?;
    let spec = args.attack.spec(&profile);
    let mut w = PcapWriter::create(&args.out, PcapHeader::default())?;
    let mut n = 0u64;
    for p in inject_attack(BenignGenerator::new(&profile)?, spec, args.frame_length, profile.start)? {
        w.write(&p.to_view())?;
        n += 1;
    }
    w.finish()?;
    if let Some(path) = args.profile_out {
        fs::write(path, profile.to_kv_string())?;
    }
    println!("wrote {n} packets to {}", args.out.display());
    Ok(())
}

fn detect(args: DetectArgs) -> Result<(), HarnessError> {
    let config = args.detector.config();
    let mut detector = Detector::new(config.clone())?;
    let mut agg = FrameAggregator::new(config.frame_length);
    let mut frames = Vec::new();
    let mut reports = 0;
    let out = io::stdout();
    let mut out = out.lock();
    let mut reader = PcapReader::open(&args.input)?;
    let mut handle = |f, out: &mut dyn Write| -> io::Result<()> {
        let stats = FrameStats::from_flows(&f);
        if let Some(r) = detector.push(stats.clone()) {
            reports += 1;
            writeln!(
                out,
                "attack detected_at={} frame={} target={} port={} delta_src={:.3}",
                r.detected_at, r.frame_index, r.target_ip, r.attack_port, r.source_port.delta
            )?;
        }
        frames.push(stats);
        Ok(())
    };
    let mut pending = Vec::new();
    for view in reader.by_ref() {
        agg.push(&view?, &mut |f| pending.push(f))?;
        for f in pending.drain(..) {
            handle(f, &mut out)?;
        }
    }
    if let Some(last) = agg.finish() {
        handle(last, &mut out)?;
    }
    if frames.len() < config.history() {
        return Err(drdos_defense::detection::DetectionError::InsufficientHistory {
            needed: config.history(),
            available: frames.len(),
        }
        .into());
    }
    if let Some(path) = args.frames_csv {
        write_frame_csv(&frames, BufWriter::new(fs::File::create(path)?))?;
    }
    writeln!(out, "frames={} reports={reports} skipped_records={}", frames.len(), reader.skipped())?;
    Ok(())
}

fn mitigate(args: MitigateArgs) -> Result<(), HarnessError> {
    let settings = MitigationSettings {
        alias_subnet: args.alias_subnet,
        variant: args.variant,
        grace: args.grace,
        rotate_every: args.rotate_every,
    };
    let mut ctl = match args.seed {
        Some(seed) => MitigationController::with_seed(settings, seed),
        None => MitigationController::new(settings),
    };
    let target = HostIdentity::new(args.target_ip, args.target_mac, args.target_prefix);
    let mut counts = [0u64; 4];
    let mut writer = match &args.output {
        Some(p) => Some(PcapWriter::create(p, PcapHeader::default())?),
        None => None,
    };
    match &args.input {
        None => {
            ctl.activate(target, args.attack_port, 0.0)?;
        }
        Some(path) => {
            for view in PcapReader::open(path)? {
                let view = view?;
                ctl.activate(target, args.attack_port, view.timestamp)?;
                ctl.tick(view.timestamp)?;
                let d = ctl.process(&view)?;
                let slot = match &d {
                    Disposition::DeliveredToTarget(_) => 0,
                    Disposition::ForwardedNormal(_) => 1,
                    Disposition::Dropped => 2,
                    Disposition::EmittedReply(_) => 3,
                };
                counts[slot] += 1;
                if let (Some(w), Some(v)) = (writer.as_mut(), d.view()) {
                    w.write(v)?;
                }
            }
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let Some(plan) = ctl.plan() else {
        println!("no packets, no plan");
        return Ok(());
    };
    let state = plan.to_state_string();
    print!("{state}");
    println!();
    print!("{}", dump_table(&ctl.table().snapshot()));
    if args.input.is_some() {
        println!("delivered={} forwarded={} dropped={} replies={}", counts[0], counts[1], counts[2], counts[3]);
    }
    if let Some(path) = args.state_out {
        fs::write(path, state)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let grid = match &args.config {
        Some(path) => SweepGrid::from_kv_str(&fs::read_to_string(path)?)?,
        None => SweepGrid::default(),
    };
    let profile = args.profile.load()?;
    let template = AttackTemplate { attack_port: args.attack_port, ..Default::default() };
    let data = collect_sweep_data(&profile, &template, &grid.frame_lengths, &grid.scenarios())?;
    let outcome = evaluate(&data, &grid)?;
    emit_csv(&outcome.results, &args.out)?;
    if let Some(plot) = args.plot {
        emit_plot_data(&outcome.results, plot)?;
    }
    for (l, g, e) in &outcome.skipped {
        eprintln!("skipped l={l} g={g} e={e}: not enough frames");
    }
    println!(
        "{} results, {} monotonicity violations, written to {}",
        outcome.results.len(),
        outcome.monotonicity_violations,
        args.out.display()
    );
    Ok(())
}

fn scenario(args: ScenarioArgs) -> Result<(), HarnessError> {
    let profile = args.profile.load()?;
    let attack = args.attack.spec(&profile);
    let mut cfg = ScenarioConfig::new(profile, attack, args.detector.config(), args.variant);
    cfg.rotate_every = args.rotate_every;
    cfg.grace = args.grace;
    let r = run_scenario_with(&cfg)?;
    println!("detection_time={}", r.detection_time);
    if let Some(rep) = &r.report {
        println!("reported_target={} reported_port={}", rep.target_ip, rep.attack_port);
    }
    let rows = [
        ("illegitimate_before_activation", r.illegitimate_before_activation),
        ("illegitimate_delivered", r.illegitimate_delivered),
        ("illegitimate_dropped", r.illegitimate_dropped),
        ("legitimate_delivered", r.legitimate_delivered),
        ("legitimate_rewritten", r.legitimate_rewritten),
        ("legitimate_dropped", r.legitimate_dropped),
        ("in_flight_dropped", r.in_flight_dropped),
        ("previous_alias_delivered", r.previous_alias_delivered),
        ("grace_stragglers", r.grace_stragglers),
        ("late_old_alias_delivered", r.late_old_alias_delivered),
        ("incoming_requests", r.incoming_requests),
        ("incoming_requests_unmodified", r.incoming_requests_unmodified),
        ("target_responses", r.target_responses),
        ("target_responses_unmodified", r.target_responses_unmodified),
        ("arp_replies", r.arp_replies),
        ("rotations", r.rotations),
        ("variant_mismatches", r.variant_mismatches),
        ("packets", r.packets),
    ];
    for (k, v) in rows {
        println!("{k}={v}");
    }
    Ok(())
}

fn equivalence(args: EquivalenceArgs) -> Result<bool, HarnessError> {
    let target = HostIdentity::new(args.target_ip, MacAddr::new(2, 0, 0, 0, 0, 1), 24);
    let r = check_equivalence(target, args.alias_subnet, args.attack_port, args.packets, args.seed)?;
    println!("packets={} mismatches={}", r.packets, r.mismatches);
    for (row, n) in &r.switch_rows {
        println!("switch_row {row}={n}");
    }
    for m in &r.examples {
        println!("mismatch packet={:?} controller={:?} switch={:?}", m.packet, m.controller, m.switch);
    }
    Ok(r.mismatches == 0)
}

fn report(args: ReportArgs) -> Result<(), HarnessError> {
    let results = read_results_csv(fs::File::open(&args.input)?)?;
    print!("{}", summary_table(&results));
    if let Some(plot) = args.plot {
        emit_plot_data(&results, plot)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Detect(a) => detect(a),
        Command::Mitigate(a) => mitigate(a),
        Command::Sweep(a) => sweep(a),
        Command::Scenario(a) => scenario(a),
        Command::Equivalence(a) => match equivalence(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
