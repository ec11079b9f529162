use std::path::Path;
use std::process::{Command, Output};

fn drdos(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drdos")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_detect_mitigate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = drdos(
        &["generate", "--duration", "200", "-a", "4", "--attack-start", "100", "-o", "t.pcap", "--profile-out", "p.kv"],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    assert!(std::fs::read_to_string(d.join("p.kv")).unwrap().contains("seed="));

    let o = drdos(&["detect", "-i", "t.pcap", "--frames-csv", "frames.csv"], d);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("target=198.51.100.8 port=53"), "{out}");
    let frames = std::fs::read_to_string(d.join("frames.csv")).unwrap();
    assert_eq!(frames.lines().count(), 21);

    let o = drdos(
        &[
            "mitigate",
            "--target-ip",
            "198.51.100.8",
            "--attack-port",
            "53",
            "--seed",
            "3",
            "-i",
            "t.pcap",
            "-o",
            "m.pcap",
            "--state-out",
            "plan.kv",
        ],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("DROP"));
    assert!(std::fs::read_to_string(d.join("plan.kv")).unwrap().contains("attack_port=53"));
    assert!(d.join("m.pcap").metadata().unwrap().len() > 24);
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("grid.kv"),
        "l=10\ng=5\ne=1,2\nT_h=-0.5,-1,-1.5,-2,-2.5,-3,-3.5\na=1\ns=1\nclassifier=src_port\n",
    )
    .unwrap();
    let o = drdos(&["sweep", "-c", "grid.kv", "--duration", "1800", "-o", "r.csv", "--plot", "r.dat"], d);
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    // 2 e x 7 T_h x 2 bases x 2 combiners
    assert_eq!(csv.lines().count(), 1 + 56);
    assert!(std::fs::read_to_string(d.join("r.dat")).unwrap().starts_with("# classifier=src_port"));
    let o = drdos(&["report", "-i", "r.csv"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("mean_acc"));
}

#[test]
fn scenario_and_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = drdos(&["scenario", "--duration", "300", "-a", "4", "--attack-start", "120"], d);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("illegitimate_delivered=0\n"), "{out}");
    assert!(out.contains("variant_mismatches=0\n"), "{out}");
    let o = drdos(&["equivalence", "--packets", "5000"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("packets=5000 mismatches=0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(drdos(&["detect", "-i", "missing.pcap"], d).status.code(), Some(3));
    assert!(drdos(&["generate", "--duration", "20", "-o", "short.pcap"], d).status.success());
    // 2 frames of 10 s cannot fill a gap of 5
    assert_eq!(drdos(&["detect", "-i", "short.pcap"], d).status.code(), Some(2));
    assert_eq!(drdos(&["detect", "-i", "short.pcap", "-e", "0"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.kv"), "l=10\nbogus=1\n").unwrap();
    assert_eq!(drdos(&["sweep", "-c", "bad.kv", "-o", "x.csv"], d).status.code(), Some(2));
}
