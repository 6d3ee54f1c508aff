//! Reconstruction, clustering and fairness losses, and the probability
//! estimators they are built from.
//!
//! With soft assignments `c_ik`, groups `g_i ∈ [0, T)` and `n` samples:
//!
//! * `p_c[k]     = (1/n) Σ_i c_ik`
//! * `p_gc[t][k] = (1/n) Σ_i 1[g_i = t] c_ik`
//! * `H(C)       = −Σ_k p_c log p_c`
//! * `H(C|X)     = −(1/n) Σ_ik c_ik log c_ik`
//! * `L_clu      = −H(C) + H(C|X)`
//! * `L_fair     = I(G;C) = Σ_tk p_gc log(p_gc / (p_g p_c))`
//! * `L          = L_rec + α L_clu + β L_fair`
//!
//! and `I(X;C|G) = H(C) − H(C|X) − I(G;C)` is reported as a measurement.
//! Logs are natural and `0·log 0 = 0`.
//!
//! Every quantity exists twice: as a plain function over arrays (used for
//! reporting) and as a graph builder (used for training).

use crate::autodiff::{Array, Graph, NodeId, LOG_FLOOR};
use crate::clustering::SoftAssignment;
use crate::error::{Error, Result};

fn xlogx(p: f64) -> f64 {
    p * p.max(LOG_FLOOR).ln()
}

/// Mean squared Euclidean distance between corresponding rows.
pub fn loss_rec(x: &Array, x_prime: &Array) -> Result<f64> {
    if x.shape() != x_prime.shape() || x.ndim() != 2 {
        return Err(Error::invalid(format!(
            "reconstruction shapes {:?} and {:?} differ",
            x.shape(),
            x_prime.shape()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let sq: f64 = x
        .data()
        .iter()
        .zip(x_prime.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / x.rows() as f64)
}

/// Cluster marginal `p_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMarginal {
    pub p_c: Vec<f64>,
}

impl ClusterMarginal {
    pub fn from_assignment(c: &SoftAssignment) -> Self {
        let k = c.k();
        let n = c.n() as f64;
        let mut p_c = vec![0.0; k];
        for row in c.matrix().iter_rows() {
            for (p, v) in p_c.iter_mut().zip(row) {
                *p += v;
            }
        }
        p_c.iter_mut().for_each(|p| *p /= n);
        Self { p_c }
    }
}

/// Joint table `p_gc` with its group and cluster marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGroupCluster {
    /// `T × K`, row-major.
    pub p_gc: Vec<Vec<f64>>,
    pub p_g: Vec<f64>,
    pub p_c: Vec<f64>,
}

impl JointGroupCluster {
    pub fn new(c: &SoftAssignment, groups: &[usize], t_count: usize) -> Result<Self> {
        check_groups(c, groups, t_count)?;
        let k = c.k();
        let n = c.n() as f64;
        let mut p_gc = vec![vec![0.0; k]; t_count];
        let mut p_g = vec![0.0; t_count];
        for (row, &g) in c.matrix().iter_rows().zip(groups) {
            p_g[g] += 1.0;
            for (p, v) in p_gc[g].iter_mut().zip(row) {
                *p += v;
            }
        }
        p_gc.iter_mut().flatten().for_each(|p| *p /= n);
        p_g.iter_mut().for_each(|p| *p /= n);
        let p_c = ClusterMarginal::from_assignment(c).p_c;
        Ok(Self { p_gc, p_g, p_c })
    }

    /// `I(G;C)`; rows of empty groups contribute nothing.
    pub fn mutual_information(&self) -> f64 {
        let mut mi = 0.0;
        for (t, row) in self.p_gc.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (self.p_g[t] * self.p_c[k])).ln();
                }
            }
        }
        mi
    }
}

fn check_groups(c: &SoftAssignment, groups: &[usize], t_count: usize) -> Result<()> {
    if t_count == 0 {
        return Err(Error::invalid("need at least one group"));
    }
    if groups.len() != c.n() {
        return Err(Error::invalid(format!(
            "{} group ids for {} samples",
            groups.len(),
            c.n()
        )));
    }
    if let Some(&bad) = groups.iter().find(|&&g| g >= t_count) {
        return Err(Error::invalid(format!("group id {bad} outside [0, {t_count})")));
    }
    Ok(())
}

/// `H(C)` of a cluster marginal.
pub fn entropy_cluster(p_c: &ClusterMarginal) -> f64 {
    -p_c.p_c.iter().map(|&p| xlogx(p)).sum::<f64>()
}

/// `H(C|X) = −(1/n) Σ_ik c_ik log c_ik`.
pub fn cond_entropy_cx(c: &SoftAssignment) -> f64 {
    -c.matrix().data().iter().map(|&p| xlogx(p)).sum::<f64>() / c.n() as f64
}

/// `−H(C) + H(C|X)`, in `[−log K, log K]`.
pub fn loss_clu(c: &SoftAssignment) -> f64 {
    -entropy_cluster(&ClusterMarginal::from_assignment(c)) + cond_entropy_cx(c)
}

/// `I(G;C)`. Every group in `[0, T)` must have at least one member.
pub fn loss_fair(c: &SoftAssignment, groups: &[usize], t_count: usize) -> Result<f64> {
    let joint = JointGroupCluster::new(c, groups, t_count)?;
    if let Some(t) = joint.p_g.iter().position(|&p| p == 0.0) {
        return Err(Error::invalid(format!("group {t} has no members")));
    }
    Ok(joint.mutual_information())
}

pub fn total_loss(l_rec: f64, l_clu: f64, l_fair: f64, alpha: f64, beta: f64) -> Result<f64> {
    if alpha.is_nan() || beta.is_nan() || alpha < 0.0 || beta < 0.0 {
        return Err(Error::invalid(format!(
            "loss weights must be non-negative, got α={alpha}, β={beta}"
        )));
    }
    Ok(l_rec + alpha * l_clu + beta * l_fair)
}

/// `Î(X;C|G) = H(C) − H(C|X) − I(G;C)`. Small negative values from
/// estimation error are returned as-is.
pub fn estimate_cmi(c: &SoftAssignment, groups: &[usize], t_count: usize) -> Result<f64> {
    let fair = loss_fair(c, groups, t_count)?;
    Ok(entropy_cluster(&ClusterMarginal::from_assignment(c)) - cond_entropy_cx(c) - fair)
}

/// Graph form of [`loss_rec`] for a constant target `x`.
pub fn rec_graph(graph: &mut Graph, x: NodeId, x_prime: NodeId, n: usize) -> NodeId {
    let diff = graph.sub(x_prime, x);
    let sq = graph.square(diff);
    let total = graph.sum(sq);
    graph.scale(total, 1.0 / n as f64)
}

/// `Σ p log p` of a node, with the guarded log.
fn neg_entropy(graph: &mut Graph, p: NodeId) -> NodeId {
    let lp = graph.guarded_log(p);
    let plp = graph.mul(p, lp);
    graph.sum(plp)
}

/// Graph nodes shared by the clustering and fairness losses of one batch.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentStats {
    /// `1 × K` cluster marginal.
    pub p_c: NodeId,
    /// `Σ_k p_c log p_c = −H(C)`.
    pub neg_h_c: NodeId,
}

pub fn assignment_stats(graph: &mut Graph, c: NodeId, n: usize) -> AssignmentStats {
    let avg = graph.constant(Array::full(&[1, n], 1.0 / n as f64));
    let p_c = graph.matmul(avg, c);
    let neg_h_c = neg_entropy(graph, p_c);
    AssignmentStats { p_c, neg_h_c }
}

/// Graph form of [`loss_clu`].
pub fn clu_graph(graph: &mut Graph, c: NodeId, stats: AssignmentStats, n: usize) -> NodeId {
    let sum_clogc = neg_entropy(graph, c);
    let h_cx = graph.scale(sum_clogc, -1.0 / n as f64);
    graph.add(stats.neg_h_c, h_cx)
}

/// Graph form of `I(G;C)` over one batch, written as
/// `Σ p_gc log p_gc + H(G) − Σ p_c log p_c`. Groups absent from the batch
/// contribute nothing. Gradients flow through `c` only.
pub fn fair_graph(
    graph: &mut Graph,
    c: NodeId,
    stats: AssignmentStats,
    groups: &[usize],
    t_count: usize,
) -> NodeId {
    let n = groups.len();
    let mut membership = Array::zeros(&[t_count, n]);
    let mut counts = vec![0usize; t_count];
    for (i, &g) in groups.iter().enumerate() {
        membership.set(g, i, 1.0 / n as f64);
        counts[g] += 1;
    }
    let h_g: f64 = -counts
        .iter()
        .map(|&m| xlogx(m as f64 / n as f64))
        .sum::<f64>();
    let m = graph.constant(membership);
    let p_gc = graph.matmul(m, c);
    let joint = neg_entropy(graph, p_gc);
    let h_g = graph.constant(Array::scalar(h_g));
    let with_h_g = graph.add(joint, h_g);
    graph.sub(with_h_g, stats.neg_h_c)
}
