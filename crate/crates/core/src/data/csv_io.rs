use std::collections::HashMap;
use std::path::Path;

use super::Dataset;
use crate::autodiff::Array;
use crate::error::{Error, Result};

/// How to read a feature CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub group_column: String,
    pub label_column: Option<String>,
    pub standardize: bool,
}

impl CsvOptions {
    pub fn new(group_column: impl Into<String>) -> Self {
        Self {
            group_column: group_column.into(),
            label_column: None,
            standardize: true,
        }
    }

    pub fn with_labels(mut self, label_column: impl Into<String>) -> Self {
        self.label_column = Some(label_column.into());
        self
    }

    pub fn raw(mut self) -> Self {
        self.standardize = false;
        self
    }
}

/// Dense ids by first appearance.
#[derive(Default)]
struct Interner {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, value: &str) -> usize {
        if let Some(&id) = self.ids.get(value) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(value.to_string(), id);
        self.names.push(value.to_string());
        id
    }
}

/// Reads the header of a CSV file to list its column names.
pub fn csv_header(path: &Path) -> Result<Vec<String>> {
    let mut reader = open(path)?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok(header)
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Loads a dataset. Every column other than the group and label columns is a
/// numeric feature, in header order. Rows are numbered from 1, header
/// excluded.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = open(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::format(path, "empty file"));
    }
    for (j, name) in header.iter().enumerate() {
        if header[..j].contains(name) {
            return Err(Error::format(path, format!("duplicate column `{name}`")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(path, format!("no column named `{name}`")))
    };
    let group_col = find(&opts.group_column)?;
    let label_col = opts.label_column.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != group_col && Some(j) != label_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::format(path, "no feature columns"));
    }

    let mut values = Vec::new();
    let mut groups_seen = Interner::default();
    let mut labels_seen = Interner::default();
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |j: usize| record.get(j).unwrap_or("").trim();
        let bad = |j: usize, message: String| Error::CsvCell {
            path: path.to_path_buf(),
            row,
            column: header[j].clone(),
            message,
        };
        for &j in &feature_cols {
            let text = cell(j);
            let v: f64 = text
                .parse()
                .map_err(|_| bad(j, format!("`{text}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(j, format!("`{text}` is not finite")));
            }
            values.push(v);
        }
        let g = cell(group_col);
        if g.is_empty() {
            return Err(bad(group_col, "missing group value".into()));
        }
        groups.push(groups_seen.intern(g));
        if let Some(j) = label_col {
            let l = cell(j);
            if l.is_empty() {
                return Err(bad(j, "missing label value".into()));
            }
            labels.push(labels_seen.intern(l));
        }
    }
    if groups.is_empty() {
        return Err(Error::format(path, "no data rows"));
    }

    let features = Array::matrix(groups.len(), feature_cols.len(), values)?;
    let mut ds = Dataset::new(features, groups, label_col.map(|_| labels))?;
    ds.feature_names = Some(feature_cols.iter().map(|&j| header[j].clone()).collect());
    ds.group_names = Some(groups_seen.names);
    if opts.standardize {
        ds.standardize();
    }
    Ok(ds)
}

/// Writes features, the group column and (if present) labels. Reals use the
/// shortest representation that parses back to the same value.
pub fn write_csv(ds: &Dataset, path: &Path, group_column: &str, label_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (0..ds.dim()).map(|j| format!("f{j}")).collect(),
    };
    header.push(group_column.to_string());
    if ds.labels().is_some() {
        header.push(label_column.to_string());
    }
    writer.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..ds.len() {
        let mut record: Vec<String> = ds.features().row(i).iter().map(f64::to_string).collect();
        let g = ds.groups()[i];
        record.push(match &ds.group_names {
            Some(names) => names[g].clone(),
            None => g.to_string(),
        });
        if let Some(labels) = ds.labels() {
            record.push(labels[i].to_string());
        }
        writer.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
