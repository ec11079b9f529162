//! Sweep results as CSV and as plot-ready precision/recall series.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::metrics::{Confusion, SweepResult};
use super::HarnessError;

pub const RESULT_CSV_HEADER: [&str; 18] = [
    "classifier",
    "base",
    "combiner",
    "l",
    "g",
    "e",
    "T_h",
    "T_r",
    "a",
    "s",
    "tp",
    "fp",
    "tn",
    "fn",
    "precision",
    "recall",
    "accuracy",
    "latency_s",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(results: &[SweepResult], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_CSV_HEADER)?;
    for r in results {
        let c = &r.confusion;
        w.write_record([
            r.classifier.to_string(),
            r.base.to_string(),
            r.combiner.to_string(),
            r.frame_length.to_string(),
            r.gap.to_string(),
            r.entropy_count.to_string(),
            opt(r.entropy_threshold),
            opt(r.ratio_threshold),
            r.magnitude.to_string(),
            r.subnet_size.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            format!("{:.6}", r.precision()),
            format!("{:.6}", r.recall()),
            format!("{:.6}", r.accuracy()),
            r.latency().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(results: &[SweepResult], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    write_results_csv(results, BufWriter::new(File::create(path)?))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T, HarnessError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| HarnessError::Parse(format!("line {line}: bad {} `{raw}`", RESULT_CSV_HEADER[i])))
}

fn opt_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>, HarnessError> {
    match rec.get(i) {
        None | Some("") => Ok(None),
        Some(_) => field(rec, i, line).map(Some),
    }
}

/// Reads results written by [`write_results_csv`]. Derived columns are
/// recomputed from the counts.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<SweepResult>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_CSV_HEADER {
        return Err(HarnessError::Parse("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        out.push(SweepResult {
            classifier: field(&rec, 0, line)?,
            base: field(&rec, 1, line)?,
            combiner: field(&rec, 2, line)?,
            frame_length: field(&rec, 3, line)?,
            gap: field(&rec, 4, line)?,
            entropy_count: field(&rec, 5, line)?,
            entropy_threshold: opt_field(&rec, 6, line)?,
            ratio_threshold: opt_field(&rec, 7, line)?,
            magnitude: field(&rec, 8, line)?,
            subnet_size: field(&rec, 9, line)?,
            confusion: Confusion::new(
                field(&rec, 10, line)?,
                field(&rec, 11, line)?,
                field(&rec, 12, line)?,
                field(&rec, 13, line)?,
            ),
        });
    }
    Ok(out)
}

/// One precision/recall curve: everything but the threshold fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    /// `(threshold, precision, recall)`, in result order.
    pub points: Vec<(f64, f64, f64)>,
}

/// Groups results into per-threshold series keyed by classifier, base,
/// combiner, l, g, e, a and s.
pub fn plot_series(results: &[SweepResult]) -> Vec<PlotSeries> {
    let mut out: Vec<PlotSeries> = Vec::new();
    for r in results {
        let label = format!(
            "classifier={} base={} combiner={} l={} g={} e={} a={} s={}",
            r.classifier, r.base, r.combiner, r.frame_length, r.gap, r.entropy_count, r.magnitude, r.subnet_size
        );
        let threshold = r.entropy_threshold.or(r.ratio_threshold).unwrap_or(f64::NAN);
        let point = (threshold, r.precision(), r.recall());
        match out.iter_mut().rev().find(|s| s.label == label) {
            Some(s) => s.points.push(point),
            None => out.push(PlotSeries { label, points: vec![point] }),
        }
    }
    out
}

/// Gnuplot-style blocks: a `#` label line, then `threshold precision recall`
/// rows, blocks separated by blank lines.
pub fn write_plot_data<W: Write>(results: &[SweepResult], mut out: W) -> Result<(), HarnessError> {
    for (i, s) in plot_series(results).iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "# {}", s.label)?;
        for (t, p, r) in &s.points {
            writeln!(out, "{t} {p:.6} {r:.6}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn emit_plot_data(results: &[SweepResult], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    write_plot_data(results, BufWriter::new(File::create(path)?))
}

/// Mean and best accuracy per classifier, base, combiner and frame length,
/// as aligned text.
pub fn summary_table(results: &[SweepResult]) -> String {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for r in results {
        let key = format!(
            "{:<10} {:<8} {:<8} {:>6}",
            r.classifier.to_string(),
            r.base.to_string(),
            r.combiner.to_string(),
            r.frame_length
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, accs)) => accs.push(r.accuracy()),
            None => groups.push((key, vec![r.accuracy()])),
        }
    }
    let mut out = format!(
        "{:<10} {:<8} {:<8} {:>6} {:>7} {:>9} {:>9}\n",
        "classifier", "base", "combiner", "l", "rows", "mean_acc", "best_acc"
    );
    for (key, accs) in groups {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let best = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("{key} {:>7} {mean:>9.4} {best:>9.4}\n", accs.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Base, Classifier, Combiner};

    fn result(t_h: f64, tp: u64) -> SweepResult {
        SweepResult {
            classifier: Classifier::SourcePort,
            base: Base::Flows,
            combiner: Combiner::Mean,
            frame_length: 10.0,
            gap: 5,
            entropy_count: 1,
            entropy_threshold: Some(t_h),
            ratio_threshold: None,
            magnitude: 1.0,
            subnet_size: 1,
            confusion: Confusion::new(tp, 1, 9, 10 - tp),
        }
    }

    #[test]
    fn empty_results_give_header_only() {
        let mut buf = Vec::new();
        write_results_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), RESULT_CSV_HEADER.join(","));
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![result(-1.5, 7)];
        let mut buf = Vec::new();
        write_results_csv(&rs, &mut buf).unwrap();
        assert_eq!(read_results_csv(&buf[..]).unwrap(), rs);
    }

    #[test]
    fn plot_groups_by_threshold() {
        let rs: Vec<_> = [-0.5, -1.0, -1.5, -2.0, -2.5, -3.0, -3.5].iter().map(|&t| result(t, 5)).collect();
        let series = plot_series(&rs);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].points.len(), 7);
        let mut buf = Vec::new();
        write_plot_data(&rs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 8);
    }
}
