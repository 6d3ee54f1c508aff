//! Lloyd's k-means over latent features and the temperature softmax over
//! cosine similarities to the fitted centers.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{normalize_rows, softmax_rows, Array, Graph, NodeId, ZERO_ROW_JITTER};
use crate::error::{Error, Result};
use crate::model::LatentBatch;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// `K × d` cluster centers, `K ≥ 2`, no zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenters {
    centers: Array,
}

impl ClusterCenters {
    pub fn new(centers: Array) -> Result<Self> {
        if centers.ndim() != 2 || centers.rows() < 2 {
            return Err(Error::invalid(format!(
                "need a K×d matrix with K ≥ 2, got {:?}",
                centers.shape()
            )));
        }
        if let Some(k) = centers
            .iter_rows()
            .position(|r| r.iter().all(|&v| v == 0.0))
        {
            return Err(Error::Degenerate(format!("center {k} is the zero vector")));
        }
        if !centers.all_finite() {
            return Err(Error::NonFinite("cluster centers".into()));
        }
        Ok(Self { centers })
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn as_array(&self) -> &Array {
        &self.centers
    }

    /// Row-normalized centers, transposed to `d × K`.
    fn unit_transposed(&self) -> Array {
        normalize_rows(&self.centers).0.transpose()
    }
}

/// Row-stochastic `N × K` soft assignment produced at temperature `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    c: Array,
    tau: f64,
}

impl SoftAssignment {
    /// Wraps a matrix whose rows each sum to 1 (within 1e-9) with
    /// entries in `[0, 1]`.
    pub fn new(c: Array, tau: f64) -> Result<Self> {
        if c.ndim() != 2 || c.cols() == 0 {
            return Err(Error::invalid(format!("bad assignment shape {:?}", c.shape())));
        }
        if tau.is_nan() || tau <= 0.0 {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        for (i, row) in c.iter_rows().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self { c, tau })
    }

    /// One-hot rows from hard labels (the `tau → 0` limit).
    pub fn one_hot(partition: &HardPartition) -> Self {
        let k = partition.k.max(1);
        let mut c = Array::zeros(&[partition.labels.len(), k]);
        for (i, &l) in partition.labels.iter().enumerate() {
            c.set(i, l, 1.0);
        }
        Self { c, tau: f64::MIN_POSITIVE }
    }

    pub fn matrix(&self) -> &Array {
        &self.c
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.c.rows()
    }

    pub fn k(&self) -> usize {
        self.c.cols()
    }

    /// Hard labels by row argmax (lowest index wins ties).
    pub fn argmax(&self) -> HardPartition {
        let labels = self
            .c
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
                        if v > best.1 {
                            (j, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect();
        HardPartition {
            labels,
            k: self.k(),
        }
    }
}

/// Hard cluster labels in `[0, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardPartition {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl HardPartition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self { labels, k })
    }

    /// Uses `max + 1` as the label count.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self { labels, k }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: ClusterCenters,
    pub partition: HardPartition,
    /// Sum of squared distances to the assigned centers.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, final assignment last.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while d2[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            // Fewer distinct points than clusters: take any unchosen index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points[next]));
        }
    }
    chosen.iter().map(|&i| points[i].to_vec()).collect()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops once no center moves more than `tol` or after `max_iter` update
/// steps. A cluster that empties is re-seeded at the point farthest from its
/// own center.
pub fn kmeans(features: &Array, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    if features.ndim() != 2 {
        return Err(Error::invalid("features must be a matrix"));
    }
    let n = features.rows();
    if k < 2 {
        return Err(Error::invalid(format!("need K ≥ 2 clusters, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} points cannot form {k} clusters")));
    }
    if max_iter == 0 || tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid("max_iter must be ≥ 1 and tol ≥ 0"));
    }
    if !features.all_finite() {
        return Err(Error::NonFinite("k-means features".into()));
    }
    let points: Vec<&[f64]> = features.iter_rows().collect();
    if points.iter().all(|p| *p == points[0]) {
        return Err(Error::Degenerate("all points are identical".into()));
    }
    let d = features.cols();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(&points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, dist) = nearest(p, &centers);
            labels[i] = c;
            dists[i] = dist;
            inertia += dist;
        }
        history.push(inertia);
        if iterations == max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        let mut taken = Vec::new();
        for c in 0..k {
            let updated = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n ≥ k");
                taken.push(far);
                points[far].to_vec()
            };
            shift = shift.max(sq_dist(&updated, &centers[c]).sqrt());
            centers[c] = updated;
        }
        if shift <= tol {
            let mut inertia = 0.0;
            for (i, p) in points.iter().enumerate() {
                let (c, dist) = nearest(p, &centers);
                labels[i] = c;
                inertia += dist;
            }
            history.push(inertia);
            break;
        }
    }

    for (c, center) in centers.iter_mut().enumerate() {
        if center.iter().all(|&v| v == 0.0) {
            warn!("k-means center {c} is the zero vector; jittering");
            center.iter_mut().for_each(|v| *v = ZERO_ROW_JITTER);
        }
    }
    let inertia = *history.last().expect("at least one assignment");
    let centers = ClusterCenters::new(Array::matrix(k, d, centers.concat())?)?;
    Ok(KMeansFit {
        centers,
        partition: HardPartition { labels, k },
        inertia,
        iterations,
        inertia_history: history,
    })
}

/// Best of `restarts` k-means runs (lowest inertia), seeds `seed, seed+1, …`.
pub fn kmeans_restarts(
    features: &Array,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    restarts: usize,
) -> Result<KMeansFit> {
    let mut best = kmeans(features, k, seed, max_iter, tol)?;
    for r in 1..restarts.max(1) as u64 {
        let fit = kmeans(features, k, seed.wrapping_add(r), max_iter, tol)?;
        if fit.inertia < best.inertia {
            best = fit;
        }
    }
    Ok(best)
}

/// Cosine of the angle between two non-zero vectors.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("vectors differ in length"));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

fn warn_zero_rows(h: &Array) {
    let zeros = h.iter_rows().filter(|r| r.iter().all(|&v| v == 0.0)).count();
    if zeros > 0 {
        warn!("{zeros} zero-norm latent rows jittered before cosine similarity");
    }
}

/// `c_ik = softmax_k(cos(h_i, u_k) / tau)`.
pub fn soft_assign(h: &LatentBatch, centers: &ClusterCenters, tau: f64) -> Result<SoftAssignment> {
    check_tau(tau)?;
    if h.h.ndim() != 2 || h.h.cols() != centers.dim() {
        return Err(Error::invalid(format!(
            "latents {:?} do not match {}-dimensional centers",
            h.h.shape(),
            centers.dim()
        )));
    }
    warn_zero_rows(&h.h);
    let (unit, _) = normalize_rows(&h.h);
    let sims = unit.matmul(&centers.unit_transposed())?;
    let c = softmax_rows(&sims.map(|s| s * (1.0 / tau)));
    Ok(SoftAssignment { c, tau })
}

/// The same assignment expressed in a graph, differentiable w.r.t. `h`.
/// Centers enter as constants.
pub fn soft_assign_graph(
    graph: &mut Graph,
    h: NodeId,
    centers: &ClusterCenters,
    tau: f64,
) -> Result<NodeId> {
    check_tau(tau)?;
    let unit = graph.normalize_rows(h);
    let u = graph.constant(centers.unit_transposed());
    let sims = graph.matmul(unit, u);
    let logits = graph.scale(sims, 1.0 / tau);
    Ok(graph.softmax_rows(logits))
}

/// Replaces every all-zero row with seeded uniform noise in `±ZERO_ROW_JITTER`,
/// returning how many rows were touched.
pub fn jitter_zero_rows(h: &mut Array, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut touched = 0;
    let d = h.cols();
    for row in h.data_mut().chunks_mut(d.max(1)) {
        if row.iter().all(|&v| v == 0.0) {
            touched += 1;
            for v in row.iter_mut() {
                *v = rng.random_range(-ZERO_ROW_JITTER..=ZERO_ROW_JITTER);
            }
        }
    }
    if touched > 0 {
        warn!("{touched} zero-norm latent rows jittered");
    }
    touched
}
