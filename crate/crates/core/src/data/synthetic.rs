use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Gaussian blobs: one per (class, group) cell.
///
/// Class `c` is centred at `(class_sep / √2)·e_c`, so any two class means are
/// exactly `class_sep` apart. Group `t` adds `t·group_shift·e_K` where `K` is
/// the number of classes, a direction orthogonal to every class mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub groups: usize,
    pub per_cell_count: usize,
    pub class_sep: f64,
    pub group_shift: f64,
    pub dim: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            groups: 2,
            per_cell_count: 150,
            class_sep: 8.0,
            group_shift: 6.0,
            dim: 16,
            noise_sd: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.groups == 0 || self.per_cell_count == 0 || self.dim == 0 {
            return Err(Error::invalid("synthetic counts must all be positive"));
        }
        if !(self.class_sep > 0.0 && self.class_sep.is_finite()) {
            return Err(Error::invalid(format!("class_sep must be > 0, got {}", self.class_sep)));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) || !self.group_shift.is_finite() {
            return Err(Error::invalid("noise_sd must be >= 0 and group_shift finite"));
        }
        let needed = if self.groups > 1 && self.group_shift != 0.0 {
            self.classes + 1
        } else {
            self.classes
        };
        if self.dim < needed {
            return Err(Error::invalid(format!(
                "dim {} cannot hold {} orthogonal directions",
                self.dim, needed
            )));
        }
        Ok(())
    }
}

/// Draws the dataset row by row: class-major, then group, then sample.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.classes * spec.groups * spec.per_cell_count;
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut groups = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let radius = spec.class_sep / std::f64::consts::SQRT_2;
    for c in 0..spec.classes {
        for t in 0..spec.groups {
            let mut mean = vec![0.0; spec.dim];
            mean[c] = radius;
            if t > 0 && spec.group_shift != 0.0 {
                mean[spec.classes] += t as f64 * spec.group_shift;
            }
            for _ in 0..spec.per_cell_count {
                data.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
                groups.push(t);
                labels.push(c);
            }
        }
    }
    let features = Array::matrix(n, spec.dim, data)?;
    Dataset::new(features, groups, Some(labels))
}
