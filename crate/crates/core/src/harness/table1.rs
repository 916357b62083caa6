//! Arithmetic check of the published path-planning accuracy table: each
//! row's error is the Euclidean distance between the measured and the
//! ideal tool position in `/rc`.

use serde::Serialize;
use thiserror::Error;

/// Allowed gap between a recomputed and a printed value (one-decimal
/// rounding).
pub const ROUNDING_TOLERANCE: f64 = 0.05;
/// Published mean error over all rows (mm).
pub const PUBLISHED_MEAN: f64 = 3.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Row {
    pub id: usize,
    pub measured: [f64; 3],
    pub ideal: [f64; 3],
    pub reported_error: f64,
}

impl Table1Row {
    pub fn error(&self) -> f64 {
        (0..3)
            .map(|i| (self.ideal[i] - self.measured[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

const fn row(id: usize, measured: [f64; 3], ideal: [f64; 3], reported_error: f64) -> Table1Row {
    Table1Row {
        id,
        measured,
        ideal,
        reported_error,
    }
}

pub const TABLE1: [Table1Row; 15] = [
    row(1, [-10.5, 4.3, -151.5], [-11.4, 6.2, -150.6], 2.3),
    row(2, [-8.7, -5.9, -151.4], [-9.4, -3.1, -152.6], 3.1),
    row(3, [-10.8, -5.5, -164.0], [-11.0, -6.1, -163.7], 0.7),
    row(4, [-10.1, -3.6, -148.8], [-12.2, -1.8, -153.8], 5.7),
    row(5, [-107.2, -5.8, -155.4], [-108.0, -4.4, -156.7], 2.1),
    row(6, [-2.0, 2.9, -136.2], [-2.8, 3.0, -142.8], 6.6),
    row(7, [-6.3, 5.9, -143.0], [-7.3, 7.4, -142.0], 2.1),
    row(8, [-9.1, -6.7, -142.4], [-17.0, -5.9, -143.9], 8.1),
    row(9, [3.6, 6.3, -143.4], [2.4, 7.0, -145.9], 2.9),
    row(10, [0.9, 12.0, -151.0], [0.1, 13.7, -150.4], 2.0),
    row(11, [-10.2, -7.7, -144.4], [-10.5, -8.1, -144.2], 0.5),
    row(12, [-16.0, 2.0, -143.4], [-11.6, 4.6, -144.5], 5.2),
    row(13, [-11.0, -0.9, -148.5], [-10.0, 0.1, -145.7], 3.1),
    row(14, [-9.1, 0.3, -145.0], [-10.5, 0.1, -147.9], 3.2),
    row(15, [-14.5, -5.5, -152.0], [-14.4, -6.0, -151.9], 0.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowCheck {
    pub id: usize,
    pub computed: f64,
    pub reported: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub rows: Vec<RowCheck>,
    pub mean: f64,
    pub reported_mean: f64,
    pub mean_ok: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("table check failed: rows {rows:?} mismatch{}", if *mean_ok { "" } else { ", mean mismatch" })]
pub struct MismatchReport {
    pub rows: Vec<usize>,
    pub mean_ok: bool,
    pub report: Table1Report,
}

pub fn verify_table1(rows: &[Table1Row]) -> Result<Table1Report, MismatchReport> {
    let checks: Vec<RowCheck> = rows
        .iter()
        .map(|r| {
            let computed = r.error();
            RowCheck {
                id: r.id,
                computed,
                reported: r.reported_error,
                ok: (computed - r.reported_error).abs() <= ROUNDING_TOLERANCE,
            }
        })
        .collect();
    let mean = checks.iter().map(|c| c.computed).sum::<f64>() / checks.len().max(1) as f64;
    let mean_ok = (mean - PUBLISHED_MEAN).abs() <= ROUNDING_TOLERANCE;
    let report = Table1Report {
        rows: checks,
        mean,
        reported_mean: PUBLISHED_MEAN,
        mean_ok,
    };
    let bad: Vec<usize> = report.rows.iter().filter(|c| !c.ok).map(|c| c.id).collect();
    if bad.is_empty() && mean_ok {
        Ok(report)
    } else {
        Err(MismatchReport {
            rows: bad,
            mean_ok,
            report,
        })
    }
}
