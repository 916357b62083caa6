//! CSV export of trial traces and detection streams.

use std::io::Write;

use super::trial::{DetectionRow, TraceRow};
use super::HarnessError;

pub const TRACE_SCHEMA: &str = "# needle-grasp trace v1";
pub const DETECTION_SCHEMA: &str = "# needle-grasp detections v1";

const TRACE_HEADER: [&str; 13] = [
    "trial_id", "t", "phase", "tip_x", "tip_y", "tip_z", "needle_x", "needle_y", "needle_z", "e_x", "e_y", "e_z", "d3",
];

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> Result<(), HarnessError> {
    writeln!(out, "{TRACE_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = TRACE_HEADER.to_vec();
    header.push("outcome");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.trial_id.to_string(), r.t.to_string(), r.phase.as_str().to_string()];
        rec.extend(
            r.tip
                .iter()
                .chain(&r.needle_middle)
                .chain(&r.error)
                .map(|v| v.to_string()),
        );
        rec.push(r.d3.to_string());
        rec.push(r.outcome.map(|o| o.as_str().to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_detections_csv<W: Write>(mut out: W, rows: &[DetectionRow]) -> Result<(), HarnessError> {
    writeln!(out, "{DETECTION_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &std::path::Path, contents: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
