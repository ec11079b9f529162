//! Sweeps thresholds, frame lengths and attack magnitudes over six hours of
//! desk-scale traffic and prints an accuracy summary plus a few rows.

use drdos_defense::detection::Classifier;
use drdos_defense::harness::{collect_sweep_data, evaluate, mean_accuracy, summary_table, AttackTemplate, SweepGrid};
use drdos_defense::traffic::BenignProfile;

fn main() {
    let grid = SweepGrid {
        frame_lengths: vec![10.0, 60.0, 300.0],
        gaps: vec![1, 5],
        entropy_counts: vec![1, 3],
        magnitudes: vec![0.5, 1.0, 2.0],
        ..Default::default()
    };
    let profile = BenignProfile::desk().with_duration(6.0 * 3600.0);
    let data =
        collect_sweep_data(&profile, &AttackTemplate::default(), &grid.frame_lengths, &grid.scenarios()).unwrap();
    let outcome = evaluate(&data, &grid).unwrap();
    println!("{} results, {} monotonicity violations\n", outcome.results.len(), outcome.monotonicity_violations);
    print!("{}", summary_table(&outcome.results));

    println!("\nsource-port accuracy by magnitude:");
    for &a in &grid.magnitudes {
        let acc = mean_accuracy(&outcome.results, |r| r.classifier == Classifier::SourcePort && r.magnitude == a);
        println!("  a={a}: {:.3}", acc.unwrap());
    }
}
