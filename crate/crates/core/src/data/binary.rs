use std::path::Path;

use super::Dataset;
use crate::autodiff::Array;
use crate::container::{self, ContainerKind, Header};
use crate::error::{Error, Result};

pub(super) fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let header = Header {
        kind: ContainerKind::Dataset,
        dims: vec![ds.len() as u64, ds.dim() as u64],
        groups: ds.group_count() as u64,
    };
    let mut ints: Vec<u64> = ds.groups().iter().map(|&g| g as u64).collect();
    if let Some(labels) = ds.labels() {
        ints.extend(labels.iter().map(|&l| l as u64));
    }
    container::write(path, &header, ds.features().data(), &ints)
}

pub(super) fn load(path: &Path) -> Result<Dataset> {
    let (header, floats, ints) = container::read(path, ContainerKind::Dataset)?;
    let [n, d] = header.dims[..] else {
        return Err(Error::format(path, "dataset header needs exactly [N, D]"));
    };
    let (n, d) = (n as usize, d as usize);
    let features = Array::matrix(n, d, floats).map_err(|e| Error::format(path, e.to_string()))?;
    let labels = match ints.len() {
        x if x == n => None,
        x if x == 2 * n => Some(ints[n..].iter().map(|&l| l as usize).collect()),
        x => {
            return Err(Error::format(
                path,
                format!("{x} integer entries do not fit {n} rows"),
            ))
        }
    };
    let groups = ints[..n].iter().map(|&g| g as usize).collect();
    let ds = Dataset::new(features, groups, labels).map_err(|e| Error::format(path, e.to_string()))?;
    if ds.group_count() as u64 != header.groups {
        return Err(Error::format(path, "group count does not match header"));
    }
    Ok(ds)
}
