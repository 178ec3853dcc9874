//! CSV output for run logs.

use std::io::Write;

use resgs_core::trainer::{EventKind, LogEntry, RunLog};

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 8] = [
    "iteration",
    "loss",
    "psnr",
    "ssim",
    "count",
    "stage",
    "substage",
    "max_level",
];
pub const COMPARE_HEADER: [&str; 5] = ["mode", "iteration", "psnr", "ssim", "count"];
pub const EVENTS_HEADER: [&str; 9] = [
    "iteration",
    "kind",
    "substage",
    "selected",
    "created",
    "replaced",
    "pruned",
    "count_before",
    "count_after",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Usage(format!("csv: {e}"))
}

/// Floats print in shortest round-trip form; infinite PSNR prints `inf`.
fn num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:?}")
    }
}

fn metrics_row(e: &LogEntry) -> [String; 8] {
    [
        e.iteration.to_string(),
        num(e.loss),
        num(e.psnr),
        num(e.ssim),
        e.count.to_string(),
        e.stage.to_string(),
        e.substage.to_string(),
        e.max_level.to_string(),
    ]
}

/// One row per evaluation point.
pub fn write_metrics<W: Write>(log: &RunLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for e in &log.entries {
        w.write_record(metrics_row(e)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Usage(format!("csv: {e}")))
}

/// One row per density-control event.
pub fn write_events<W: Write>(log: &RunLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER).map_err(csv_err)?;
    for ev in &log.events {
        let kind = match ev.kind {
            EventKind::Densify => "densify",
            EventKind::OpacityReduction => "opacity-reduction",
        };
        let r = &ev.report;
        w.write_record([
            ev.iteration.to_string(),
            kind.to_string(),
            ev.substage.to_string(),
            r.selected.len().to_string(),
            r.created.len().to_string(),
            r.replaced.len().to_string(),
            r.pruned.len().to_string(),
            r.count_before.to_string(),
            r.count_after.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Usage(format!("csv: {e}")))
}

/// Long-format comparison table: every evaluation point of every mode.
pub fn write_compare<W: Write>(runs: &[(&str, &RunLog)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARE_HEADER).map_err(csv_err)?;
    for (mode, log) in runs {
        for e in &log.entries {
            w.write_record([
                mode.to_string(),
                e.iteration.to_string(),
                num(e.psnr),
                num(e.ssim),
                e.count.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Usage(format!("csv: {e}")))
}
