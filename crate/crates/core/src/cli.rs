//! Command-line front end: `synth`, `train`, `eval` and `metrics`.
//!
//! Exit status is 0 on success, 2 for usage errors and 1 for runtime
//! failures. Diagnostics go to stderr; results only to the named files.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clustering::HardPartition;
use crate::data::{csv_header, generate_synthetic, load_csv, write_csv, CsvOptions, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::full_report;
use crate::model::ModelParams;
use crate::trainer::{evaluate, fit_observed, write_log_csv, EpochLog, TrainConfig, TrainObserver, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const CHECKPOINT_FILE: &str = "model.fcmi";
pub const LOG_FILE: &str = "train_log.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "fcmi", version, about = "Fair deep clustering with per-group decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with class/group confounding.
    Synth {
        /// JSON synthetic spec; omitted keys take defaults.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoint, log, report and manifest.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write `checkpoint_epoch<N>.fcmi` every N epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Cluster a dataset with a trained checkpoint and score it.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Score an existing labeling.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "pred")]
        pred_col: String,
        #[arg(long)]
        groups_col: String,
        #[arg(long)]
        truth_col: Option<String>,
        /// Weight of the fairness term in F_β.
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Ground-truth column, used only for reporting. Defaults to `label` when
    /// the file has one.
    #[arg(long)]
    label_col: Option<String>,
    /// Keep features as read instead of standardizing each column.
    #[arg(long)]
    no_standardize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let label = match &self.label_col {
            Some(l) => Some(l.clone()),
            None => csv_header(&self.data)?
                .iter()
                .any(|h| h.trim() == "label")
                .then(|| "label".to_string()),
        };
        let opts = CsvOptions {
            group_column: self.group_col.clone(),
            label_column: label,
            standardize: !self.no_standardize,
        };
        load_csv(&self.data, &opts)
    }
}

#[derive(Debug, Serialize)]
struct DatasetRecord {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Artifacts {
    checkpoint: PathBuf,
    log_csv: PathBuf,
    report_json: PathBuf,
}

/// What a `train` run consumed and produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    tool_version: &'static str,
    seed: u64,
    config: TrainConfig,
    dataset: DatasetRecord,
    artifacts: Artifacts,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct PeriodicCheckpoints<'a> {
    dir: &'a Path,
    every: Option<usize>,
}

impl TrainObserver for PeriodicCheckpoints<'_> {
    fn epoch_done(&mut self, log: &EpochLog, state: &TrainState) -> Result<()> {
        log::info!(
            "epoch {} l_total {:.6} mi_gc {:.6} cmi_xcg {:.6}",
            log.epoch,
            log.l_total,
            log.mi_gc,
            log.cmi_xcg
        );
        match self.every {
            Some(k) if k > 0 && state.epoch.is_multiple_of(k) => state
                .params
                .save(&self.dir.join(format!("checkpoint_epoch{}.fcmi", state.epoch))),
            _ => Ok(()),
        }
    }
}

fn synth(spec: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec).map_err(|e| Error::io(spec, e))?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
    let ds = generate_synthetic(&spec)?;
    write_csv(&ds, out, "group", "label")
}

fn train(data: &DataArgs, config: &Path, out_dir: &Path, every: Option<usize>) -> Result<()> {
    let cfg = TrainConfig::load(config)?;
    let bytes = std::fs::read(&data.data).map_err(|e| Error::io(&data.data, e))?;
    let ds = data.load()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut observer = PeriodicCheckpoints { dir: out_dir, every };
    let (params, logs) = fit_observed(&cfg, &ds, &mut observer)?;
    params.save(&out_dir.join(CHECKPOINT_FILE))?;
    write_log_csv(&out_dir.join(LOG_FILE), &logs)?;
    let report = evaluate(&params, &ds, &cfg)?;
    write_text(&out_dir.join(REPORT_FILE), &report.to_json())?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        dataset: DatasetRecord {
            path: data.data.clone(),
            sha256: sha256_hex(&bytes),
        },
        artifacts: Artifacts {
            checkpoint: CHECKPOINT_FILE.into(),
            log_csv: LOG_FILE.into(),
            report_json: REPORT_FILE.into(),
        },
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&out_dir.join(MANIFEST_FILE), &(json + "\n"))
}

fn eval(data: &DataArgs, checkpoint: &Path, config: &Path, report: &Path) -> Result<()> {
    let cfg = TrainConfig::load(config)?;
    let params = ModelParams::load(checkpoint)?;
    let ds = data.load()?;
    let r = evaluate(&params, &ds, &cfg)?;
    write_text(report, &r.to_json())
}

/// Dense ids by first appearance of each distinct cell value.
fn dense_ids(values: &[String]) -> Vec<usize> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    values
        .iter()
        .map(|v| {
            let next = seen.len();
            *seen.entry(v.as_str()).or_insert(next)
        })
        .collect()
}

fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let idx = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| Error::format(path, format!("no column named `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        for (c, &j) in idx.iter().enumerate() {
            let cell = record.get(j).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(Error::CsvCell {
                    path: path.to_path_buf(),
                    row: row + 1,
                    column: names[c].to_string(),
                    message: "missing value".into(),
                });
            }
            cols[c].push(cell.to_string());
        }
    }
    if cols[0].is_empty() {
        return Err(Error::format(path, "no data rows"));
    }
    Ok(cols)
}

fn metrics(
    pred: &Path,
    pred_col: &str,
    groups_col: &str,
    truth_col: Option<&str>,
    beta: f64,
    report: &Path,
) -> Result<()> {
    let mut names = vec![pred_col, groups_col];
    names.extend(truth_col);
    let cols = read_columns(pred, &names)?;
    let partition = HardPartition::from_labels(dense_ids(&cols[0]));
    let groups = dense_ids(&cols[1]);
    let truth = cols.get(2).map(|c| dense_ids(c));
    let r = full_report(&partition, truth.as_deref(), &groups, beta)?;
    write_text(report, &r.to_json())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Train {
            data,
            config,
            out_dir,
            checkpoint_every,
        } => train(&data, &config, &out_dir, checkpoint_every),
        Command::Eval {
            data,
            checkpoint,
            config,
            report,
        } => eval(&data, &checkpoint, &config, &report),
        Command::Metrics {
            pred,
            pred_col,
            groups_col,
            truth_col,
            beta,
            report,
        } => metrics(&pred, &pred_col, &groups_col, truth_col.as_deref(), beta, &report),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            // Help and version go to stdout, usage errors to stderr.
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
