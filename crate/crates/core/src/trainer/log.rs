use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::fixed6;

/// Per-epoch record. Loss terms are sample-weighted means over the epoch's
/// batches; warmup epochs leave `l_clu` and `l_fair` at zero because they are
/// never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_clu: f64,
    pub l_fair: f64,
    pub l_total: f64,
    /// `I(G;C)` of the full-data soft assignment at epoch end.
    pub mi_gc: f64,
    /// `I(X;C|G)` estimate of the same assignment.
    pub cmi_xcg: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub bal: Option<f64>,
    pub mnce: Option<f64>,
    pub f_beta: Option<f64>,
}

pub const LOG_COLUMNS: [&str; 12] = [
    "epoch", "l_rec", "l_clu", "l_fair", "l_total", "mi_gc", "cmi_xcg", "acc", "nmi", "bal",
    "mnce", "f_beta",
];

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fixed6).unwrap_or_default();
        [
            self.epoch.to_string(),
            fixed6(self.l_rec),
            fixed6(self.l_clu),
            fixed6(self.l_fair),
            fixed6(self.l_total),
            fixed6(self.mi_gc),
            fixed6(self.cmi_xcg),
            opt(self.acc),
            opt(self.nmi),
            opt(self.bal),
            opt(self.mnce),
            opt(self.f_beta),
        ]
        .join(",")
    }
}

/// Header plus one row per epoch, six decimals per real, empty cells for
/// metrics that need labels.
pub fn log_csv(logs: &[EpochLog]) -> String {
    let mut s = LOG_COLUMNS.join(",");
    s.push('\n');
    for log in logs {
        writeln!(s, "{}", log.csv_row()).expect("write to string");
    }
    s
}

pub fn write_log_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    std::fs::write(path, log_csv(logs)).map_err(|e| Error::io(path, e))
}
