use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::simenv::SessionMetrics;

use super::Variant;

pub const METRICS: [&str; 3] = ["T_int", "R_cum", "R_sin"];

/// Per-session metrics of one evaluated variant plus run metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub variant: Variant,
    pub seed: u64,
    pub fingerprint: String,
    pub sessions: Vec<SessionMetrics>,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl MetricsReport {
    pub fn new(variant: Variant, seed: u64, fingerprint: impl Into<String>, sessions: Vec<SessionMetrics>) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::domain("a report needs at least one session"));
        }
        if let Some(bad) = sessions.iter().position(|s| !s.identity_holds()) {
            return Err(Error::numerical(format!("session {bad}: R_sin * T_int != R_cum")));
        }
        Ok(MetricsReport {
            variant,
            seed,
            fingerprint: fingerprint.into(),
            sessions,
        })
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.sessions
            .iter()
            .map(|s| match metric {
                "T_int" => s.t_int as f64,
                "R_cum" => s.r_cum(),
                "R_sin" => s.r_sin(),
                other => panic!("unknown metric {other}"),
            })
            .collect()
    }

    /// `(mean, std)` of one of [`METRICS`].
    pub fn aggregate(&self, metric: &str) -> (f64, f64) {
        mean_std(&self.values(metric))
    }

    pub fn n_sessions(&self) -> usize {
        self.sessions.len()
    }
}

/// `variant,metric,mean,std,n_sessions,seed`, one row per variant and metric.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("variant,metric,mean,std,n_sessions,seed\n");
    for r in reports {
        for m in METRICS {
            let (mean, std) = r.aggregate(m);
            let _ = writeln!(out, "{},{m},{mean},{std},{},{}", r.variant, r.n_sessions(), r.seed);
        }
    }
    out
}

/// Aligned text table, one row per variant, `mean ± std` cells.
pub fn reports_to_table(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![vec![
        "variant".into(),
        "T_int".into(),
        "R_cum".into(),
        "R_sin".into(),
        "n".into(),
    ]];
    for r in reports {
        let mut row = vec![r.variant.to_string()];
        for m in METRICS {
            let (mean, std) = r.aggregate(m);
            row.push(format!("{mean:.3} ± {std:.3}"));
        }
        row.push(r.n_sessions().to_string());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    if let Some(first) = reports.first() {
        let _ = writeln!(out, "\nseed {}  config {}", first.seed, first.fingerprint);
    }
    out
}
