#![allow(dead_code)]

use std::path::PathBuf;

use faircocco::data::{ColumnSpec, DType, DatasetTable, Role, Task};
use nalgebra::DMatrix;

pub fn data_manifest(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(format!("{name}.toml"))
}

fn spec(name: String, role: Role, dtype: DType) -> ColumnSpec {
    ColumnSpec { name, role, dtype }
}

/// In-memory table with generated column names `x0.., a0.., y`.
pub fn table(
    task: Task,
    x: DMatrix<f64>,
    a: DMatrix<f64>,
    y: DMatrix<f64>,
    a_dtype: DType,
) -> DatasetTable {
    let n = x.nrows();
    let y_dtype = match task {
        Task::Classification => DType::Binary,
        Task::Regression => DType::Continuous,
    };
    DatasetTable {
        task,
        feature_columns: (0..x.ncols())
            .map(|k| spec(format!("x{k}"), Role::Feature, DType::Continuous))
            .collect(),
        sensitive_columns: (0..a.ncols())
            .map(|k| spec(format!("a{k}"), Role::Sensitive, a_dtype))
            .collect(),
        target_columns: vec![spec("y".into(), Role::Target, y_dtype)],
        x,
        a,
        y,
        predictions: None,
        rows: (0..n).collect(),
    }
}

/// Rows `[0, n_train)`, `[n_train, n_train + n_val)` and the rest.
pub fn split(
    t: &DatasetTable,
    n_train: usize,
    n_val: usize,
) -> (DatasetTable, DatasetTable, DatasetTable) {
    let n = t.len();
    let idx: Vec<usize> = (0..n).collect();
    (
        t.select_rows(&idx[..n_train]),
        t.select_rows(&idx[n_train..n_train + n_val]),
        t.select_rows(&idx[n_train + n_val..]),
    )
}

pub fn write_file(dir: &std::path::Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}
