//! Clustering quality and fairness metrics over hard labels.
//!
//! * ACC: best one-to-one cluster↔class matching (Hungarian on the
//!   contingency table) divided by `n`.
//! * NMI: `I(P;T) / sqrt(H(P) H(T))`.
//! * Balance: over clusters, min of (smallest group count / largest group
//!   count); a cluster missing a group scores 0.
//! * MNCE: `min_k H(G | cluster k) / H(G)`, 1 exactly when every cluster's
//!   group entropy equals the global one.
//! * F_β: `(1+β²)uv / (β²u + v)` of NMI `u` and MNCE `v`.
//!
//! Empty clusters are skipped by Balance and MNCE.

mod assignment;
mod report;

use log::warn;

pub use assignment::{max_weight_matching, min_cost_assignment};
pub use report::MetricsReport;
pub(crate) use report::fixed6;

use crate::clustering::{HardPartition, SoftAssignment};
use crate::error::{Error, Result};
use crate::objectives;

/// Co-occurrence counts of two labelings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `rows × cols`; `counts[a][b]` is the number of samples labelled `a`
    /// by the first labeling and `b` by the second.
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl ContingencyTable {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid(format!(
                "labelings differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::invalid("empty labeling"));
        }
        let rows = a.iter().max().map_or(0, |m| m + 1);
        let cols = b.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&x, &y) in a.iter().zip(b) {
            counts[x][y] += 1;
        }
        Ok(Self {
            counts,
            total: a.len() as u64,
        })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Shannon entropy (nats) of a histogram; empty bins contribute 0.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    0.0 - counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Mutual information (nats) of the two labelings behind a table.
pub fn mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.total as f64;
    let rs = table.row_sums();
    let cs = table.col_sums();
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rs[i] as f64 * cs[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn accuracy(pred: &HardPartition, truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(&pred.labels, truth)?;
    Ok(max_weight_matching(&table.counts) as f64 / table.total as f64)
}

pub fn nmi(pred: &HardPartition, truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(&pred.labels, truth)?;
    let hp = entropy_of_counts(&table.row_sums());
    let ht = entropy_of_counts(&table.col_sums());
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    Ok((mutual_information(&table) / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Per-cluster group counts over the groups present in the data, skipping
/// empty clusters.
fn cluster_group_counts(pred: &HardPartition, groups: &[usize]) -> Result<Vec<Vec<u64>>> {
    let table = ContingencyTable::new(&pred.labels, groups)?;
    let present: Vec<usize> = table
        .col_sums()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(t, _)| t)
        .collect();
    let k = pred.k.max(table.counts.len());
    let mut out = Vec::new();
    for c in 0..k {
        match table.counts.get(c) {
            Some(row) if row.iter().any(|&v| v > 0) => {
                out.push(present.iter().map(|&t| row[t]).collect());
            }
            _ => warn!("cluster {c} is empty and is excluded from fairness metrics"),
        }
    }
    Ok(out)
}

pub fn balance(pred: &HardPartition, groups: &[usize]) -> Result<f64> {
    let clusters = cluster_group_counts(pred, groups)?;
    if clusters.is_empty() {
        return Err(Error::invalid("no non-empty clusters"));
    }
    Ok(clusters
        .iter()
        .map(|counts| {
            let min = *counts.iter().min().expect("≥ 1 group") as f64;
            let max = *counts.iter().max().expect("≥ 1 group") as f64;
            min / max
        })
        .fold(f64::INFINITY, f64::min))
}

/// `H(G | cluster k)` for every non-empty cluster together with `H(G)`.
pub fn group_entropies(pred: &HardPartition, groups: &[usize]) -> Result<(Vec<f64>, f64)> {
    let clusters = cluster_group_counts(pred, groups)?;
    let table = ContingencyTable::new(&pred.labels, groups)?;
    let h_g = entropy_of_counts(&table.col_sums());
    Ok((clusters.iter().map(|c| entropy_of_counts(c)).collect(), h_g))
}

pub fn mnce(pred: &HardPartition, groups: &[usize]) -> Result<f64> {
    let (per_cluster, h_g) = group_entropies(pred, groups)?;
    if h_g == 0.0 {
        return Err(Error::invalid(
            "single-group dataset: H(G) = 0 so MNCE is undefined",
        ));
    }
    let min = per_cluster.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min / h_g).clamp(0.0, 1.0))
}

/// Weighted harmonic mean of `u` (clustering quality) and `v` (fairness);
/// larger `beta` weights `v` more.
pub fn f_beta(u: f64, v: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("F_β inputs must lie in [0, 1]: u={u}, v={v}")));
    }
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::invalid(format!("F_β weight must be non-negative, got {beta}")));
    }
    if u == 0.0 || v == 0.0 {
        return Ok(0.0);
    }
    let b2 = beta * beta;
    Ok((1.0 + b2) * u * v / (b2 * u + v))
}

/// Every metric for one labeling. ACC, NMI and F_β need `truth` and are
/// `None` without it.
pub fn full_report(
    pred: &HardPartition,
    truth: Option<&[usize]>,
    groups: &[usize],
    beta: f64,
) -> Result<MetricsReport> {
    if pred.is_empty() {
        return Err(Error::invalid("empty labeling"));
    }
    let t_count = groups.iter().max().map_or(0, |m| m + 1);
    let (acc, nmi_v) = match truth {
        Some(t) => (Some(accuracy(pred, t)?), Some(nmi(pred, t)?)),
        None => (None, None),
    };
    let mnce_v = mnce(pred, groups)?;
    let f = match nmi_v {
        Some(u) => Some(f_beta(u, mnce_v, beta)?),
        None => None,
    };
    let one_hot = SoftAssignment::one_hot(pred);
    Ok(MetricsReport {
        acc,
        nmi: nmi_v,
        bal: balance(pred, groups)?,
        mnce: mnce_v,
        f_beta: f,
        mi_gc: objectives::loss_fair(&one_hot, groups, t_count)?,
        cmi_xcg: objectives::estimate_cmi(&one_hot, groups, t_count)?,
        n: pred.len(),
        k: pred.k,
        t: t_count,
    })
}
