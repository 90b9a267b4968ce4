//! CSV reports: `metrics.csv` (one column per model) and `history.csv` (one row per
//! training iteration). Values are written with 6 decimal places and LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{HistoryRow, MetricsRecord, TrainingHistory};

pub const METRIC_ROWS: [&str; 5] = ["Accuracy", "Precision", "Recall", "F1-Score", "Training Time"];
pub const HISTORY_HEADER: [&str; 5] = ["iteration", "train_acc", "train_loss", "val_acc", "val_loss"];

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn metric_values(r: &MetricsRecord) -> [f64; 5] {
    [r.accuracy, r.macro_precision, r.macro_recall, r.f1, r.training_time_s]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = BufWriter::new(File::create(path)?);
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

/// Header `Metric,<model 1>,...`, then Accuracy, Precision, Recall, F1-Score and
/// Training Time rows. Accuracy is a fraction, training time is in seconds.
pub fn write_metrics_csv(records: &[(String, MetricsRecord)], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Metrics("no metrics to write".into()));
    }
    let mut w = csv_writer(path)?;
    let mut header = vec!["Metric".to_string()];
    header.extend(records.iter().map(|(name, _)| name.clone()));
    w.write_record(&header)?;
    for (row, label) in METRIC_ROWS.iter().enumerate() {
        let mut fields = vec![label.to_string()];
        fields.extend(records.iter().map(|(_, r)| fmt6(metric_values(r)[row])));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, MetricsRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut values = vec![[0.0f64; 5]; names.len()];
    let mut seen = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if row >= METRIC_ROWS.len() || rec.get(0) != Some(METRIC_ROWS[row]) {
            return Err(Error::Metrics(format!("unexpected metrics row {:?}", rec.get(0))));
        }
        for (m, field) in rec.iter().skip(1).enumerate() {
            values[m][row] = field
                .parse()
                .map_err(|_| Error::Metrics(format!("bad number {field:?} in metrics.csv")))?;
        }
        seen += 1;
    }
    if seen != METRIC_ROWS.len() {
        return Err(Error::Metrics(format!("metrics.csv has {seen} rows, expected 5")));
    }
    Ok(names
        .into_iter()
        .zip(values)
        .map(|(n, v)| {
            (n, MetricsRecord { accuracy: v[0], macro_precision: v[1], macro_recall: v[2], f1: v[3], training_time_s: v[4] })
        })
        .collect())
}

/// `iteration,train_acc,train_loss,val_acc,val_loss`; validation fields are empty on
/// iterations where validation did not run.
pub fn write_history(history: &TrainingHistory, path: &Path) -> Result<()> {
    if history.is_empty() {
        return Err(Error::Metrics("no history to write".into()));
    }
    let mut w = csv_writer(path)?;
    w.write_record(HISTORY_HEADER)?;
    let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
    for r in history.rows() {
        w.write_record([
            r.iteration.to_string(),
            fmt6(r.train_acc),
            fmt6(r.train_loss),
            opt(r.val_acc),
            opt(r.val_loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<TrainingHistory> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(HISTORY_HEADER) {
        return Err(Error::Metrics("history.csv has an unexpected header".into()));
    }
    let bad = |f: &str| Error::Metrics(format!("bad field {f:?} in history.csv"));
    let num = |f: &str| f.parse::<f64>().map_err(|_| bad(f));
    let opt = |f: &str| if f.is_empty() { Ok(None) } else { num(f).map(Some) };
    let mut history = TrainingHistory::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        history.push(HistoryRow {
            iteration: field(0).parse().map_err(|_| bad(field(0)))?,
            train_acc: num(field(1))?,
            train_loss: num(field(2))?,
            val_acc: opt(field(3))?,
            val_loss: opt(field(4))?,
        })?;
    }
    Ok(history)
}

/// Human-readable side-by-side metrics table.
pub fn format_metrics_table(records: &[(String, MetricsRecord)]) -> String {
    let mut out = String::new();
    let _ = write!(ByteSink(&mut out), "{:<21}", "Metric");
    for (name, _) in records {
        out.push_str(&format!("| {name:<20} "));
    }
    out.push('\n');
    out.push_str(&"-".repeat(21 + 23 * records.len()));
    out.push('\n');
    for (row, label) in METRIC_ROWS.iter().enumerate() {
        out.push_str(&format!("{label:<21}"));
        for (_, r) in records {
            let v = metric_values(r)[row];
            let cell = match row {
                0 => format!("{:.2}%", v * 100.0),
                4 => format!("{v:.2} s"),
                _ => format!("{v:.4}"),
            };
            out.push_str(&format!("| {cell:<20} "));
        }
        out.push('\n');
    }
    out
}

struct ByteSink<'a>(&'a mut String);

impl Write for ByteSink<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.push_str(&String::from_utf8_lossy(buf));
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(acc: f64) -> MetricsRecord {
        MetricsRecord { accuracy: acc, macro_precision: 0.877, macro_recall: 0.872, f1: 0.8745, training_time_s: 311.25 }
    }

    #[test]
    fn metrics_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let one = MetricsRecord { accuracy: 1.0, ..Default::default() };
        write_metrics_csv(&[("Model".into(), one)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "Metric,Model");
        assert_eq!(lines[1], "Accuracy,1.000000");
        assert_eq!(lines[5], "Training Time,0.000000");
        assert!(write_metrics_csv(&[], &path).is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let recs = vec![("OkanNet".to_string(), record(0.881)), ("Other".to_string(), record(0.5))];
        write_metrics_csv(&recs, &path).unwrap();
        let back = read_metrics_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, a), (n2, b)) in recs.iter().zip(&back) {
            assert_eq!(n1, n2);
            for (x, y) in metric_values(a).iter().zip(metric_values(b)) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn history_round_trip_with_sparse_validation() {
        let mut h = TrainingHistory::new();
        for i in 1..=120 {
            let val = (i % 50 == 0).then_some(0.5 + i as f64 / 1000.0);
            h.push(HistoryRow { iteration: i, train_acc: 0.25, train_loss: 1.3862943, val_acc: val, val_loss: val.map(|v| 1.0 - v) })
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history(&h, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,train_acc,train_loss,val_acc,val_loss");
        assert_eq!(lines[1], "1,0.250000,1.386294,,");
        assert!(lines[50].starts_with("50,") && !lines[50].ends_with(",,"));
        let back = read_history(&path).unwrap();
        assert_eq!(back.len(), 120);
        for (a, b) in h.rows().iter().zip(back.rows()) {
            assert_eq!(a.iteration, b.iteration);
            assert!((a.train_loss - b.train_loss).abs() < 1e-6);
            assert_eq!(a.val_acc.is_some(), b.val_acc.is_some());
        }
        assert!(write_history(&TrainingHistory::new(), &path).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_metrics_csv(&[("m".into(), record(1.0))], Path::new("/nonexistent/dir/metrics.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
