//! Plot data as CSV: score distributions, Δ curves, ROC curves and shaded
//! threshold intervals. Rendering is left to external tools.

use std::io::Write;

use crate::diagnose::DbdFinding;
use crate::error::Result;
use crate::rates::{ConditionalCdf, DeltaCurve, RocCurve};

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| csv::Error::from(e).into())
}

fn opt(v: Option<impl ToString>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Columns `event, group, label, weighted, theta, cdf`, one row per support
/// point of each distribution.
pub fn write_cdfs<W: Write>(writer: W, cdfs: &[&ConditionalCdf], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["event", "group", "label", "weighted", "theta", "cdf"])?;
    for cdf in cdfs {
        let c = cdf.conditioning();
        let group = labels.get(c.group).cloned().unwrap_or_else(|| c.group.to_string());
        for (theta, f) in cdf.support().iter().zip(cdf.cumulative()) {
            w.write_record([
                c.event.to_string(),
                group.clone(),
                u8::from(c.label).to_string(),
                c.weighted.to_string(),
                theta.to_string(),
                f.to_string(),
            ])?;
        }
    }
    flush(w)
}

/// Columns `group, theta, train_cdf, target_cdf, delta` on the merged
/// support of each curve.
pub fn write_deltas<W: Write>(writer: W, deltas: &[&DeltaCurve], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "theta", "train_cdf", "target_cdf", "delta"])?;
    for d in deltas {
        let g = d.train().conditioning().group;
        let group = labels.get(g).cloned().unwrap_or_else(|| g.to_string());
        for theta in d.support() {
            let (a, b) = (d.train().eval(theta), d.target().eval(theta));
            w.write_record([group.clone(), theta.to_string(), a.to_string(), b.to_string(), (a - b).to_string()])?;
        }
    }
    flush(w)
}

/// Columns `event, group, fpr, tpr, accept_from`.
pub fn write_rocs<W: Write>(writer: W, rocs: &[&RocCurve], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["event", "group", "fpr", "tpr", "accept_from"])?;
    for roc in rocs {
        let group = labels.get(roc.group).cloned().unwrap_or_else(|| roc.group.to_string());
        for v in &roc.points {
            w.write_record([
                roc.event.to_string(),
                group.clone(),
                v.fpr.to_string(),
                v.tpr.to_string(),
                v.accept_from.to_string(),
            ])?;
        }
    }
    flush(w)
}

/// Shaded regions, `kind, advantaged, disadvantaged, theta_lo, theta_hi,
/// tpr_lo, tpr_hi`. Findings without an interval are skipped.
pub fn write_intervals<W: Write>(writer: W, findings: &[DbdFinding], labels: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["kind", "advantaged", "disadvantaged", "theta_lo", "theta_hi", "tpr_lo", "tpr_hi"])?;
    let name = |g: Option<usize>| g.map(|g| labels.get(g).cloned().unwrap_or_else(|| g.to_string()));
    for f in findings {
        let Some((lo, hi)) = f.interval else { continue };
        let kind = serde_json::to_value(f.kind)?;
        w.write_record([
            kind.as_str().unwrap_or_default().to_owned(),
            opt(name(f.advantaged)),
            opt(name(f.disadvantaged)),
            lo.to_string(),
            hi.to_string(),
            opt(f.tpr_range.map(|r| r.0)),
            opt(f.tpr_range.map(|r| r.1)),
        ])?;
    }
    flush(w)
}
