//! Manifest-driven CSV ingestion, column encoding, standardization and
//! deterministic train/validation/test splitting.
//!
//! Encoding rules (applied per column over all retained rows):
//!
//! * `continuous`: parsed as `f64`; standardized with the training split's
//!   mean and population standard deviation (a zero deviation maps to 1).
//! * `binary`: numeric `{0,1}` values are kept as is; any other pair of labels
//!   is sorted (numerically when every label parses, otherwise
//!   lexicographically) and mapped to `0` and `1` in that order.
//! * `discrete`: numeric labels keep their value; string labels receive
//!   integer codes `0..k` in lexicographic order.
//!
//! Rows holding an empty cell, `?`, `NA` or `NaN` in any manifest column are
//! dropped before splitting.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Sensitive,
    Target,
    /// Precomputed model output, scored without a trained model.
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Binary,
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    pub dtype: DType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub csv_path: PathBuf,
    pub task: Task,
    pub seed: u64,
    pub split: [f64; 3],
    pub columns: Vec<ColumnSpec>,
}

impl DatasetManifest {
    pub fn columns_with_role(&self, role: Role) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(move |c| c.role == role)
    }

    /// Checks the manifest on its own, without touching the CSV.
    pub fn validate(&self) -> Result<()> {
        for (i, f) in self.split.iter().enumerate() {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::Manifest(format!(
                    "split fraction {i} is {f}, must lie in (0, 1)"
                )));
            }
        }
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Manifest(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Manifest(format!("column `{}` listed twice", c.name)));
            }
        }
        match self.columns_with_role(Role::Target).count() {
            0 => return Err(Error::Manifest("no target column".into())),
            1 => {}
            n => {
                return Err(Error::Manifest(format!(
                    "duplicate target: {n} target columns"
                )))
            }
        }
        if self.columns_with_role(Role::Sensitive).count() == 0 {
            return Err(Error::Manifest(
                "at least one sensitive column is required".into(),
            ));
        }
        if self.columns_with_role(Role::Prediction).count() > 1 {
            return Err(Error::Manifest(
                "at most one prediction column is allowed".into(),
            ));
        }
        Ok(())
    }
}

/// Reads and validates a TOML manifest. A relative `csv_path` is resolved
/// against the manifest's directory, and every listed column must appear in
/// the CSV header.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        toml::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.csv_path.is_relative() {
        if let Some(dir) = path.parent() {
            manifest.csv_path = dir.join(&manifest.csv_path);
        }
    }
    manifest.validate()?;

    let mut reader =
        csv::Reader::from_path(&manifest.csv_path).map_err(|e| csv_error(&manifest.csv_path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(&manifest.csv_path, e))?
        .clone();
    for c in &manifest.columns {
        if !header.iter().any(|h| h == c.name) {
            return Err(Error::UnknownColumn(c.name.clone()));
        }
    }
    Ok(manifest)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Affine map fitted on the training split for one continuous column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

/// One split of a dataset. Rows of `x`, `a`, `y` (and `predictions`) line up.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTable {
    pub task: Task,
    pub x: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub predictions: Option<DMatrix<f64>>,
    pub feature_columns: Vec<ColumnSpec>,
    pub sensitive_columns: Vec<ColumnSpec>,
    pub target_columns: Vec<ColumnSpec>,
    /// Indices into the retained CSV rows.
    pub rows: Vec<usize>,
}

impl DatasetTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Model inputs: features, followed by the sensitive columns unless
    /// `unaware` is set.
    pub fn inputs(&self, unaware: bool) -> DMatrix<f64> {
        if unaware {
            return self.x.clone();
        }
        let n = self.len();
        let (dx, da) = (self.x.ncols(), self.a.ncols());
        DMatrix::from_fn(n, dx + da, |i, j| {
            if j < dx {
                self.x[(i, j)]
            } else {
                self.a[(i, j - dx)]
            }
        })
    }

    /// The `k`-th sensitive attribute as an `N×1` matrix.
    pub fn sensitive_column(&self, k: usize) -> DMatrix<f64> {
        self.a.columns(k, 1).into_owned()
    }

    /// Subset of rows, in the order given.
    pub fn select_rows(&self, idx: &[usize]) -> DatasetTable {
        DatasetTable {
            task: self.task,
            x: self.x.select_rows(idx),
            a: self.a.select_rows(idx),
            y: self.y.select_rows(idx),
            predictions: self.predictions.as_ref().map(|p| p.select_rows(idx)),
            feature_columns: self.feature_columns.clone(),
            sensitive_columns: self.sensitive_columns.clone(),
            target_columns: self.target_columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetTable,
    pub val: DatasetTable,
    pub test: DatasetTable,
    pub standardization: Vec<Standardization>,
    pub dropped_rows: usize,
}

impl Splits {
    pub fn into_tuple(self) -> (DatasetTable, DatasetTable, DatasetTable) {
        (self.train, self.val, self.test)
    }
}

const MISSING: [&str; 4] = ["", "?", "NA", "NaN"];

/// Loads the CSV named by `manifest`, encodes every listed column and splits
/// the rows with the manifest seed.
pub fn ingest(manifest: &DatasetManifest) -> Result<Splits> {
    manifest.validate()?;
    let path = &manifest.csv_path;
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let positions = manifest
        .columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c.name)
                .ok_or_else(|| Error::UnknownColumn(c.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); manifest.columns.len()];
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row: Vec<&str> = positions
            .iter()
            .map(|&p| record.get(p).unwrap_or("").trim())
            .collect();
        if row.iter().any(|v| MISSING.contains(v)) {
            dropped += 1;
            continue;
        }
        for (col, v) in cells.iter_mut().zip(row) {
            col.push(v.to_string());
        }
    }
    if dropped > 0 {
        log::warn!(
            "dropped {dropped} rows with missing values from {}",
            path.display()
        );
    }
    let n = cells.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::Data(format!(
            "need at least 2 complete rows, found {n}"
        )));
    }

    let mut encoded = Vec::with_capacity(manifest.columns.len());
    for (spec, raw) in manifest.columns.iter().zip(&cells) {
        encoded.push(encode_column(spec, raw)?);
    }

    let (train_idx, val_idx, test_idx) = split_indices(n, manifest.split, manifest.seed)?;

    let mut standardization = Vec::new();
    for (spec, values) in manifest.columns.iter().zip(encoded.iter_mut()) {
        if spec.dtype != DType::Continuous {
            continue;
        }
        let (mean, std) = mean_std(train_idx.iter().map(|&i| values[i]));
        let std = if std > 0.0 { std } else { 1.0 };
        for v in values.iter_mut() {
            *v = (*v - mean) / std;
        }
        standardization.push(Standardization {
            column: spec.name.clone(),
            mean,
            std,
        });
    }

    let build = |idx: &[usize]| table_from_columns(manifest, &encoded, idx);
    Ok(Splits {
        train: build(&train_idx),
        val: build(&val_idx),
        test: build(&test_idx),
        standardization,
        dropped_rows: dropped,
    })
}

fn table_from_columns(
    manifest: &DatasetManifest,
    encoded: &[Vec<f64>],
    idx: &[usize],
) -> DatasetTable {
    let gather = |role: Role| -> (DMatrix<f64>, Vec<ColumnSpec>) {
        let cols: Vec<(usize, &ColumnSpec)> = manifest
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.role == role)
            .collect();
        let m = DMatrix::from_fn(idx.len(), cols.len(), |i, j| encoded[cols[j].0][idx[i]]);
        (m, cols.into_iter().map(|(_, c)| c.clone()).collect())
    };
    let (x, feature_columns) = gather(Role::Feature);
    let (a, sensitive_columns) = gather(Role::Sensitive);
    let (y, target_columns) = gather(Role::Target);
    let (p, pred_cols) = gather(Role::Prediction);
    DatasetTable {
        task: manifest.task,
        x,
        a,
        y,
        predictions: (!pred_cols.is_empty()).then_some(p),
        feature_columns,
        sensitive_columns,
        target_columns,
        rows: idx.to_vec(),
    }
}

fn encode_column(spec: &ColumnSpec, raw: &[String]) -> Result<Vec<f64>> {
    let parsed: Vec<Option<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let all_numeric = parsed.iter().all(Option::is_some);
    match spec.dtype {
        DType::Continuous => raw
            .iter()
            .zip(&parsed)
            .enumerate()
            .map(|(row, (s, p))| {
                p.filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    row,
                    column: spec.name.clone(),
                    value: s.clone(),
                })
            })
            .collect(),
        DType::Binary => {
            if all_numeric {
                let values: Vec<f64> = parsed.into_iter().flatten().collect();
                let mut distinct: Vec<f64> = values.clone();
                distinct.sort_by(f64::total_cmp);
                distinct.dedup();
                if distinct.len() > 2 {
                    return Err(Error::Data(format!(
                        "binary column `{}` has {} distinct values",
                        spec.name,
                        distinct.len()
                    )));
                }
                if distinct.iter().all(|v| *v == 0.0 || *v == 1.0) {
                    return Ok(values);
                }
                Ok(values
                    .iter()
                    .map(|v| {
                        if distinct.len() == 2 && *v == distinct[1] {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect())
            } else {
                let labels = lexicographic_labels(raw);
                if labels.len() > 2 {
                    return Err(Error::Data(format!(
                        "binary column `{}` has {} distinct labels",
                        spec.name,
                        labels.len()
                    )));
                }
                Ok(encode_labels(raw, &labels))
            }
        }
        DType::Discrete => {
            if all_numeric {
                Ok(parsed.into_iter().flatten().collect())
            } else {
                Ok(encode_labels(raw, &lexicographic_labels(raw)))
            }
        }
    }
}

fn lexicographic_labels(raw: &[String]) -> Vec<&str> {
    raw.iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn encode_labels(raw: &[String], labels: &[&str]) -> Vec<f64> {
    raw.iter()
        .map(|s| labels.binary_search(&s.as_str()).expect("label present") as f64)
        .collect()
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shuffles `0..n` with the seed, then takes `floor` train and validation
/// counts and leaves the remainder to test. Each split is returned in
/// ascending row order.
pub fn split_indices(
    n: usize,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let n_train = (fractions[0] * n as f64 + 1e-9).floor() as usize;
    let n_val = (fractions[1] * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Data(format!(
            "split {fractions:?} of {n} rows leaves an empty split"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((train, val, test))
}

/// `1` where the value is strictly above the lower median, `0` elsewhere.
pub fn binarise_at_median(values: &[f64]) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(sorted.len() - 1) / 2];
    values.iter().map(|v| *v > median).collect()
}
