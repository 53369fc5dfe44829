//! Flat CSV views of reports.

use std::io::{self, Write};

use super::BoundReport;
use crate::processes::fmt_float;

pub const CSV_HEADER: &str = "scenario,predictor,seed,p,mode,source,entropy,bound,empirical,std_error,gap,valid,mi,te";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_float)
}

fn entropy(v: f64) -> String {
    if v.is_finite() {
        fmt_float(v)
    } else {
        format!("{v}")
    }
}

/// One row per report. `mi` and `te` are the joint-window innovation
/// self-information and the transfer entropy, empty without diagnostics.
pub fn write_reports_csv<W: Write>(reports: &[BoundReport], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        let d = r.diagnostics.as_ref();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.predictor,
            r.seed,
            r.p,
            r.mode.as_str(),
            serde_json::to_value(r.entropy_source).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
            entropy(r.conditional_entropy.0),
            fmt_float(r.lower_bound),
            fmt_float(r.empirical_lp),
            fmt_float(r.empirical_std_error),
            fmt_float(r.gap),
            r.valid.map_or("", |v| if v { "true" } else { "false" }),
            opt(d.map(|d| d.innovation_mi.reported())),
            opt(d.map(|d| d.transfer_entropy.reported())),
        )?;
    }
    Ok(())
}

/// `(bound, empirical)` pairs per series `scenario/predictor/mode/seed`, one
/// row per `p`, for external plotting.
pub fn write_plot_data<W: Write>(reports: &[BoundReport], mut w: W) -> io::Result<()> {
    writeln!(w, "series,p,bound,empirical")?;
    for r in reports {
        writeln!(
            w,
            "{}/{}/{}/{},{},{},{}",
            r.scenario,
            r.predictor,
            r.mode.as_str(),
            r.seed,
            r.p,
            fmt_float(r.lower_bound),
            fmt_float(r.empirical_lp)
        )?;
    }
    Ok(())
}
