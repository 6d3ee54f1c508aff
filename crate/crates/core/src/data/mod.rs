//! Datasets: CSV and binary ingestion, a synthetic generator with
//! class/group confounding, and seeded mini-batching.

mod batches;
mod binary;
mod csv_io;
mod synthetic;

pub use batches::minibatches;
pub use csv_io::{csv_header, load_csv, write_csv, CsvOptions};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Features `X` (`N × D`), sensitive groups `G` and optional ground truth.
///
/// Every group id in `[0, group_count)` has at least one member. Labels are
/// only for evaluation; the training path sees a [`TrainingView`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array,
    groups: Vec<usize>,
    group_count: usize,
    labels: Option<Vec<usize>>,
    pub feature_names: Option<Vec<String>>,
    /// Original group values, indexed by dense id.
    pub group_names: Option<Vec<String>>,
}

/// The label-free part of a dataset that the loss path is allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub features: &'a Array,
    pub groups: &'a [usize],
    pub group_count: usize,
}

impl Dataset {
    pub fn new(features: Array, groups: Vec<usize>, labels: Option<Vec<usize>>) -> Result<Self> {
        if features.ndim() != 2 || features.rows() == 0 || features.cols() == 0 {
            return Err(Error::invalid(format!(
                "features must be a non-empty N×D matrix, got {:?}",
                features.shape()
            )));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        let n = features.rows();
        if groups.len() != n {
            return Err(Error::invalid(format!("{} group ids for {n} rows", groups.len())));
        }
        let group_count = groups.iter().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; group_count];
        for &g in &groups {
            sizes[g] += 1;
        }
        if let Some(t) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("group {t} has no members")));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} rows", l.len())));
            }
        }
        Ok(Self {
            features,
            groups,
            group_count,
            labels,
            feature_names: None,
            group_names: None,
        })
    }

    pub fn features(&self) -> &Array {
        &self.features
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            features: &self.features,
            groups: &self.groups,
            group_count: self.group_count,
        }
    }

    /// Shifts and scales every column to zero mean and unit variance.
    /// Constant columns are only centered.
    pub fn standardize(&mut self) {
        let (n, d) = (self.features.rows(), self.features.cols());
        for j in 0..d {
            let mean = (0..n).map(|i| self.features.get(i, j)).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|i| (self.features.get(i, j) - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for i in 0..n {
                let v = self.features.get(i, j);
                self.features.set(i, j, (v - mean) * scale);
            }
        }
    }

    pub fn save_binary(&self, path: &std::path::Path) -> Result<()> {
        binary::save(self, path)
    }

    pub fn load_binary(path: &std::path::Path) -> Result<Self> {
        binary::load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_group() {
        let x = Array::zeros(&[3, 2]);
        assert!(Dataset::new(x.clone(), vec![0, 2, 0], None).is_err());
        assert!(Dataset::new(x, vec![0, 1, 0], None).is_ok());
    }

    #[test]
    fn rejects_mismatched_lengths_and_nan() {
        let x = Array::zeros(&[2, 2]);
        assert!(Dataset::new(x.clone(), vec![0], None).is_err());
        assert!(Dataset::new(x, vec![0, 0], Some(vec![1])).is_err());
        let bad = Array::matrix(1, 1, vec![f64::NAN]).unwrap();
        assert!(Dataset::new(bad, vec![0], None).is_err());
    }

    #[test]
    fn standardize_centers_and_scales() {
        let x = Array::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]).unwrap();
        let mut ds = Dataset::new(x, vec![0, 0, 0], None).unwrap();
        ds.standardize();
        let col0: Vec<f64> = (0..3).map(|i| ds.features().get(i, 0)).collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        let var = col0.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-12);
        assert!((0..3).all(|i| ds.features().get(i, 1) == 0.0));
    }
}
