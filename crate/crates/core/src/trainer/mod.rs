//! The training loop: reconstruction-only warmup, then joint optimization of
//! reconstruction, clustering and fairness losses with a k-means center
//! refresh at the start of every epoch.
//!
//! All randomness is derived from `TrainConfig::seed` and the epoch index, so
//! a run is a pure function of its config and data.

mod adam;
mod config;
mod log;

pub use adam::{adam_step, Adam, AdamHyper};
pub use config::TrainConfig;
pub use log::{log_csv, write_log_csv, EpochLog, LOG_COLUMNS};

use crate::autodiff::{Array, Graph};
use crate::clustering::{
    jitter_zero_rows, kmeans_restarts, soft_assign, soft_assign_graph, ClusterCenters,
    SoftAssignment, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::data::{minibatches, Dataset, TrainingView};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::model::{encode, init_params, LatentBatch, ModelNodes, ModelParams};
use crate::objectives::{
    assignment_stats, clu_graph, estimate_cmi, fair_graph, loss_fair, rec_graph,
};

/// k-means runs per center refresh; the lowest-inertia fit wins.
pub const KMEANS_RESTARTS: usize = 5;

const STREAM_JITTER: u64 = 1;
const STREAM_KMEANS: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_LOG_JITTER: u64 = 4;
/// Epoch slot reserved for [`evaluate`].
const EVAL_EPOCH: u64 = u64::MAX;

/// SplitMix64 over the seed, epoch and stream.
fn derive_seed(seed: u64, epoch: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss values of one batch. `l_clu` and `l_fair` are `None` during warmup,
/// when their graphs are not built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchTerms {
    pub size: usize,
    pub l_rec: f64,
    pub l_clu: Option<f64>,
    pub l_fair: Option<f64>,
    pub l_total: f64,
}

/// Hooks into the loop. Every method defaults to doing nothing.
pub trait TrainObserver {
    fn centers_refreshed(&mut self, _epoch: usize, _centers: &ClusterCenters) {}
    fn batch_done(&mut self, _epoch: usize, _batch: usize, _terms: &BatchTerms) {}
    fn epoch_done(&mut self, _log: &EpochLog, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Everything that survives from one epoch to the next.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub optimizer: Adam,
    /// Centers of the most recent refresh.
    pub centers: Option<ClusterCenters>,
    /// Epochs completed.
    pub epoch: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig, layer_dims: &[usize], group_count: usize) -> Result<Self> {
        let params = init_params(layer_dims, group_count, config.seed)?;
        let optimizer = Adam::new(
            &params,
            AdamHyper {
                lr: config.learning_rate,
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                eps: config.adam_eps,
            },
        );
        Ok(Self {
            params,
            optimizer,
            centers: None,
            epoch: 0,
        })
    }
}

fn with_context(e: Error, epoch: usize, batch: Option<usize>) -> Error {
    let at = match batch {
        Some(b) => format!("epoch {epoch}, batch {b}"),
        None => format!("epoch {epoch}"),
    };
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{at}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("{at}: {m}")),
        Error::LogDomain { node, value } => {
            Error::NonFinite(format!("{at}: log of {value} at node {node}"))
        }
        other => other,
    }
}

/// Encodes all rows, jitters zero latents and fits k-means on them.
fn refresh_centers(
    params: &ModelParams,
    features: &Array,
    k: usize,
    seed: u64,
    epoch: u64,
) -> Result<(LatentBatch, ClusterCenters)> {
    let mut latent = encode(params, features)?;
    jitter_zero_rows(&mut latent.h, derive_seed(seed, epoch, STREAM_JITTER));
    let fit = kmeans_restarts(
        &latent.h,
        k,
        derive_seed(seed, epoch, STREAM_KMEANS),
        DEFAULT_MAX_ITER,
        DEFAULT_TOL,
        KMEANS_RESTARTS,
    )?;
    Ok((latent, fit.centers))
}

/// Forward and backward for one batch followed by an Adam step.
fn train_batch(
    state: &mut TrainState,
    config: &TrainConfig,
    view: TrainingView<'_>,
    idx: &[usize],
    warm: bool,
) -> Result<BatchTerms> {
    let m = idx.len();
    let groups: Vec<usize> = idx.iter().map(|&i| view.groups[i]).collect();
    let mut g = Graph::new();
    let nodes = ModelNodes::register(&mut g, &state.params);
    let x = g.constant(view.features.select_rows(idx));
    let h = nodes.encode(&mut g, x);
    let x_prime = nodes.decode(&mut g, h, &groups)?;
    let rec = rec_graph(&mut g, x, x_prime, m);
    let (root, clu, fair) = if warm {
        (rec, None, None)
    } else {
        let centers = state.centers.as_ref().expect("centers refreshed before batches");
        let c = soft_assign_graph(&mut g, h, centers, config.tau)?;
        let stats = assignment_stats(&mut g, c, m);
        let clu = clu_graph(&mut g, c, stats, m);
        let fair = fair_graph(&mut g, c, stats, &groups, view.group_count);
        let a = g.scale(clu, config.alpha);
        let b = g.scale(fair, config.beta_fair);
        let partial = g.add(rec, a);
        (g.add(partial, b), Some(clu), Some(fair))
    };
    let l_total = g.forward(root, &state.params.bindings())?.item();
    let scalar = |id| g.value(id).expect("evaluated").item();
    let terms = BatchTerms {
        size: m,
        l_rec: scalar(rec),
        l_clu: clu.map(scalar),
        l_fair: fair.map(scalar),
        l_total,
    };
    let grads = g.backward(root)?;
    state.optimizer.update(&mut state.params, &grads)?;
    Ok(terms)
}

/// Sample-weighted loss means of one epoch.
#[derive(Debug, Default, Clone, Copy)]
struct EpochMeans {
    l_rec: f64,
    l_clu: f64,
    l_fair: f64,
    l_total: f64,
}

/// One pass over the data. Sees only the label-free view.
fn train_epoch(
    state: &mut TrainState,
    config: &TrainConfig,
    view: TrainingView<'_>,
    observer: &mut dyn TrainObserver,
) -> Result<EpochMeans> {
    let epoch = state.epoch;
    let n = view.features.rows();
    let (_, centers) = refresh_centers(&state.params, view.features, config.k, config.seed, epoch as u64)
        .map_err(|e| with_context(e, epoch, None))?;
    observer.centers_refreshed(epoch, &centers);
    state.centers = Some(centers);

    let warm = epoch < config.warmup_epochs;
    let batch_size = config.batch_size.min(n);
    let batches = minibatches(n, batch_size, derive_seed(config.seed, epoch as u64, STREAM_SHUFFLE))?;
    let mut sums = EpochMeans::default();
    for (b, idx) in batches.iter().enumerate() {
        let terms = train_batch(state, config, view, idx, warm)
            .map_err(|e| with_context(e, epoch, Some(b)))?;
        observer.batch_done(epoch, b, &terms);
        let w = terms.size as f64;
        sums.l_rec += w * terms.l_rec;
        sums.l_clu += w * terms.l_clu.unwrap_or(0.0);
        sums.l_fair += w * terms.l_fair.unwrap_or(0.0);
        sums.l_total += w * terms.l_total;
    }
    let n = n as f64;
    Ok(EpochMeans {
        l_rec: sums.l_rec / n,
        l_clu: sums.l_clu / n,
        l_fair: sums.l_fair / n,
        l_total: sums.l_total / n,
    })
}

/// Information terms and, with labels, quality metrics of the current model
/// under the epoch's centers.
fn epoch_log(
    state: &TrainState,
    config: &TrainConfig,
    view: TrainingView<'_>,
    labels: Option<&[usize]>,
    means: EpochMeans,
) -> Result<EpochLog> {
    let epoch = state.epoch;
    let centers = state.centers.as_ref().expect("centers refreshed");
    let mut latent = encode(&state.params, view.features)?;
    jitter_zero_rows(
        &mut latent.h,
        derive_seed(config.seed, epoch as u64, STREAM_LOG_JITTER),
    );
    let c = soft_assign(&latent, centers, config.tau)?;
    let t = view.group_count;
    let mut log = EpochLog {
        epoch,
        l_rec: means.l_rec,
        l_clu: means.l_clu,
        l_fair: means.l_fair,
        l_total: means.l_total,
        mi_gc: loss_fair(&c, view.groups, t)?,
        cmi_xcg: estimate_cmi(&c, view.groups, t)?,
        acc: None,
        nmi: None,
        bal: None,
        mnce: None,
        f_beta: None,
    };
    if let Some(truth) = labels {
        let pred = c.argmax();
        let nmi = metrics::nmi(&pred, truth)?;
        log.acc = Some(metrics::accuracy(&pred, truth)?);
        log.nmi = Some(nmi);
        if t >= 2 {
            let mnce = metrics::mnce(&pred, view.groups)?;
            log.bal = Some(metrics::balance(&pred, view.groups)?);
            log.mnce = Some(mnce);
            log.f_beta = Some(metrics::f_beta(nmi, mnce, config.f_beta_weight)?);
        }
    }
    Ok(log)
}

/// Trains from scratch and returns the final parameters and one log per epoch.
pub fn fit(config: &TrainConfig, dataset: &Dataset) -> Result<(ModelParams, Vec<EpochLog>)> {
    fit_observed(config, dataset, &mut NoObserver)
}

/// [`fit`] with instrumentation hooks.
pub fn fit_observed(
    config: &TrainConfig,
    dataset: &Dataset,
    observer: &mut dyn TrainObserver,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    config.validate()?;
    let layer_dims = config.resolve_layer_dims(dataset.dim())?;
    if dataset.len() < config.k {
        return Err(Error::invalid(format!(
            "{} samples cannot form {} clusters",
            dataset.len(),
            config.k
        )));
    }
    let view = dataset.training_view();
    let mut state = TrainState::new(config, &layer_dims, view.group_count)?;
    let mut logs = Vec::with_capacity(config.max_epochs);
    while state.epoch < config.max_epochs {
        let means = train_epoch(&mut state, config, view, observer)?;
        let log = epoch_log(&state, config, view, dataset.labels(), means)?;
        ::log::debug!(
            "epoch {}: l_total {:.6} mi_gc {:.6}",
            log.epoch,
            log.l_total,
            log.mi_gc
        );
        state.epoch += 1;
        observer.epoch_done(&log, &state)?;
        logs.push(log);
    }
    Ok((state.params, logs))
}

/// Clusters `dataset` with a trained model: encode, k-means in latent space,
/// argmax of the soft assignment, then every metric.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, config: &TrainConfig) -> Result<MetricsReport> {
    config.validate()?;
    if params.input_dim() != dataset.dim() {
        return Err(Error::invalid(format!(
            "model expects {} features, data has {}",
            params.input_dim(),
            dataset.dim()
        )));
    }
    let (latent, centers) =
        refresh_centers(params, dataset.features(), config.k, config.seed, EVAL_EPOCH)?;
    let c: SoftAssignment = soft_assign(&latent, &centers, config.tau)?;
    metrics::full_report(
        &c.argmax(),
        dataset.labels(),
        dataset.groups(),
        config.f_beta_weight,
    )
}
