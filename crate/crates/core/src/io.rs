//! File formats: the dataset container (CSV matrix + JSON sidecar),
//! prediction/discrepancy tables, and eigenvalue exports.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, MeasureTag};
use crate::error::Result;

/// Sidecar metadata stored next to a dataset CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub n: usize,
    pub d: usize,
    pub measure: MeasureTag,
    pub seed: u64,
    /// Free-form description of the teacher that produced the targets.
    pub teacher: String,
}

/// Write `dataset` as `<stem>.csv` (row: x_1..x_d, target) plus
/// `<stem>.json` with the sidecar.
pub fn write_dataset(stem: &Path, dataset: &Dataset, teacher: &str) -> Result<()> {
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let d = dataset.inputs.ncols();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("target".into());
    w.write_record(&header)?;
    for mu in 0..dataset.inputs.nrows() {
        let mut rec: Vec<String> = (0..d).map(|j| format!("{:.17e}", dataset.inputs[(mu, j)])).collect();
        rec.push(format!("{:.17e}", dataset.targets[mu]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let sidecar = DatasetSidecar {
        n: dataset.inputs.nrows(),
        d,
        measure: dataset.measure,
        seed: dataset.seed,
        teacher: teacher.to_string(),
    };
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Read a dataset container written by [`write_dataset`].
pub fn read_dataset(stem: &Path) -> Result<(Dataset, DatasetSidecar)> {
    let sidecar: DatasetSidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
    let mut r = csv::Reader::from_path(stem.with_extension("csv"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    let n = rows.len();
    let d = sidecar.d;
    let inputs = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let targets = DVector::from_fn(n, |i, _| rows[i][d]);
    Ok((
        Dataset { inputs, targets, measure: sidecar.measure, seed: sidecar.seed },
        sidecar,
    ))
}

/// Write the prediction table `{index, target, prediction, discrepancy}`.
pub fn write_predictions(
    path: &Path,
    targets: &DVector<f64>,
    predictions: &DVector<f64>,
    header_comment: Option<&str>,
) -> Result<()> {
    let mut out = String::new();
    if let Some(c) = header_comment {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str("index,target,prediction,discrepancy\n");
    for i in 0..targets.len() {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e}\n",
            i,
            targets[i],
            predictions[i],
            targets[i] - predictions[i]
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a Gram (or any) matrix in the dataset container layout.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..m.nrows() {
        let rec: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
