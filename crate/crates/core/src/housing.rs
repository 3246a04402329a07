//! Binarised Housing data: CSV ingest, standardisation and the simulated
//! performative shift on a few manipulable coordinates.

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{DataError, Error, Result};
use crate::losses::{Loss, Surrogate};
use crate::model::{BaseDistribution, EmpiricalPool, Label, PerformativeModel, ShiftOperator};
use crate::seed::stream_rng;
use crate::tasks::Task;

pub const LABEL_COLUMN: &str = "binaryClass";
pub const DEFAULT_SHIFTED: [usize; 3] = [0, 4, 6];

/// Parsed table: numeric features and a 0/1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct HousingTable {
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub features: DMatrix<f64>,
    pub labels: Vec<Label>,
}

fn parse_label(raw: &str, line: u64) -> std::result::Result<Label, DataError> {
    match raw.trim() {
        "N" | "n" => Ok(0),
        "P" | "p" => Ok(1),
        t => match t.parse::<f64>() {
            Ok(0.0) => Ok(0),
            Ok(1.0) => Ok(1),
            _ => Err(DataError::NonBinaryLabel {
                line,
                value: raw.to_string(),
            }),
        },
    }
}

impl HousingTable {
    pub fn read_csv(path: &Path) -> std::result::Result<Self, DataError> {
        if !path.exists() {
            return Err(DataError::Missing(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 {
            return Err(DataError::ColumnCount {
                line: 1,
                expected: 2,
                found: header.len(),
            });
        }
        let label_idx = header
            .iter()
            .position(|h| h == LABEL_COLUMN)
            .unwrap_or(header.len() - 1);
        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let p = feature_names.len();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |pos| pos.line());
            if record.len() != header.len() {
                return Err(DataError::ColumnCount {
                    line,
                    expected: header.len(),
                    found: record.len(),
                });
            }
            for (i, field) in record.iter().enumerate() {
                if i == label_idx {
                    labels.push(parse_label(field, line)?);
                } else {
                    let v = field.parse::<f64>().ok().filter(|v| v.is_finite());
                    values.push(v.ok_or_else(|| DataError::Parse {
                        line,
                        column: header[i].clone(),
                        value: field.to_string(),
                    })?);
                }
            }
        }
        if labels.is_empty() {
            return Err(DataError::Empty(path.to_path_buf()));
        }
        Ok(Self {
            feature_names,
            label_name: header[label_idx].clone(),
            features: DMatrix::from_row_slice(labels.len(), p, &values),
            labels,
        })
    }

    /// Features first, label last. Values use the shortest representation
    /// that parses back to the same `f64`.
    pub fn write_csv(&self, path: &Path) -> std::result::Result<(), DataError> {
        self.write_with_labels(path, |y| if y == 1 { "1" } else { "0" })
    }

    fn write_with_labels(
        &self,
        path: &Path,
        label: fn(Label) -> &'static str,
    ) -> std::result::Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(self.label_name.clone());
        w.write_record(&header)?;
        for (i, &y) in self.labels.iter().enumerate() {
            let mut row: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            row.push(label(y).to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Z-scores every column with its population mean and standard
    /// deviation. Constant columns are only centred.
    pub fn standardize(&mut self) {
        let n = self.len() as f64;
        for mut col in self.features.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
            let std = (col.norm_squared() / n).sqrt();
            if std > 0.0 {
                col /= std;
            }
        }
    }

    /// Feature rows carrying `label`.
    pub fn class_rows(&self, label: Label) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.features.select_rows(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HousingTaskSpec {
    pub csv_path: PathBuf,
    /// Magnitude `λ` of the shift `λθᵢ` on the manipulable coordinates.
    pub lambda_shift: f64,
    pub shifted_coords: Vec<usize>,
    pub standardize: bool,
    /// Append a constant, never-shifted feature.
    pub intercept: bool,
}

impl HousingTaskSpec {
    pub fn new(csv_path: impl Into<PathBuf>, lambda_shift: f64) -> Self {
        Self {
            csv_path: csv_path.into(),
            lambda_shift,
            shifted_coords: DEFAULT_SHIFTED.to_vec(),
            standardize: true,
            intercept: false,
        }
    }
}

/// Empirical two-class model: class 0 (low price) moves by `λθᵢ` on the
/// shifted coordinates; class 1 is fixed. `ρ` is the class-1 share.
pub fn load_housing(spec: &HousingTaskSpec) -> Result<Task> {
    let mut table = HousingTable::read_csv(&spec.csv_path)?;
    let p = table.dim();
    for &index in &spec.shifted_coords {
        if index >= p {
            return Err(DataError::ShiftedCoordinate { index, dim: p }.into());
        }
    }
    if !spec.lambda_shift.is_finite() {
        return Err(Error::NonFinite("lambda_shift"));
    }
    if spec.standardize {
        table.standardize();
    }
    if spec.intercept {
        table.features = table.features.clone().insert_column(p, 1.0);
        table.feature_names.push("intercept".to_string());
    }
    let d = table.dim();
    let pools = [0u8, 1].map(|c| table.class_rows(c));
    if pools.iter().any(|m| m.nrows() == 0) {
        return Err(crate::error::invalid("housing data must contain both classes"));
    }
    let rho = pools[1].nrows() as f64 / table.len() as f64;
    let mut diag = vec![0.0; d];
    for &i in &spec.shifted_coords {
        diag[i] = spec.lambda_shift;
    }
    let [p0, p1] = pools;
    let model = PerformativeModel::classification(
        BaseDistribution::Empirical(EmpiricalPool::new(p0)?),
        BaseDistribution::Empirical(EmpiricalPool::new(p1)?),
        rho,
        ShiftOperator::diagonal(&diag)?,
    )?;
    Ok(Task {
        model,
        loss: Loss::Classification(Surrogate::Logistic),
        theta0: DVector::zeros(d),
    })
}

pub const SYNTHETIC_COLUMNS: [&str; 8] = [
    "median_income",
    "housing_median_age",
    "total_rooms",
    "total_bedrooms",
    "population",
    "households",
    "latitude",
    "longitude",
];

/// Writes a synthetic table with the Housing schema: eight positive,
/// differently scaled features and an `N`/`P` label driven by a noisy
/// linear score.
pub fn write_synthetic_housing(path: &Path, n: usize, seed: u64) -> std::result::Result<(), DataError> {
    let mut rng = stream_rng(seed, 0);
    let scales = [3.0, 12.0, 2000.0, 400.0, 1100.0, 380.0, 2.1, 2.0];
    let centres = [3.9, 28.0, 2600.0, 540.0, 1400.0, 500.0, 35.6, -119.6];
    let weights = [1.0, 0.2, 0.1, -0.1, -0.4, 0.2, -0.5, -0.3];
    let mut features = DMatrix::zeros(n, SYNTHETIC_COLUMNS.len());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut score = 0.0;
        for j in 0..SYNTHETIC_COLUMNS.len() {
            let z: f64 = rng.sample(StandardNormal);
            features[(i, j)] = ((centres[j] + scales[j] * z) * 1000.0).round() / 1000.0;
            score += weights[j] * z;
        }
        let noise: f64 = rng.sample(StandardNormal);
        labels.push(u8::from(score + 0.5 * noise > 0.0));
    }
    let table = HousingTable {
        feature_names: SYNTHETIC_COLUMNS.iter().map(|s| s.to_string()).collect(),
        label_name: LABEL_COLUMN.to_string(),
        features,
        labels,
    };
    table.write_with_labels(path, |y| if y == 1 { "P" } else { "N" })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_label_by_name_or_last_column() {
        let dir = tempfile::tempdir().unwrap();
        let named = write(dir.path(), "a.csv", "x,binaryClass,y\n1.5,P,2\n-1,N,0.25\n");
        let t = HousingTable::read_csv(&named).unwrap();
        assert_eq!(t.feature_names, vec!["x", "y"]);
        assert_eq!(t.labels, vec![1, 0]);
        assert_eq!(t.features, DMatrix::from_row_slice(2, 2, &[1.5, 2.0, -1.0, 0.25]));
        let last = write(dir.path(), "b.csv", "x,y,label\n1,2,0\n3,4,1\n");
        let t = HousingTable::read_csv(&last).unwrap();
        assert_eq!(t.label_name, "label");
        assert_eq!(t.labels, vec![0, 1]);
    }

    #[test]
    fn reports_bad_input() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            HousingTable::read_csv(&dir.path().join("none.csv")),
            Err(DataError::Missing(_))
        ));
        let bad_label = write(dir.path(), "l.csv", "x,binaryClass\n1,2\n");
        assert!(matches!(
            HousingTable::read_csv(&bad_label),
            Err(DataError::NonBinaryLabel { line: 2, .. })
        ));
        let short = write(dir.path(), "s.csv", "x,y,binaryClass\n1,2,0\n1,0\n");
        assert!(matches!(
            HousingTable::read_csv(&short),
            Err(DataError::ColumnCount { line: 3, expected: 3, found: 2 })
        ));
        let text = write(dir.path(), "t.csv", "x,binaryClass\nabc,0\n");
        assert!(matches!(HousingTable::read_csv(&text), Err(DataError::Parse { .. })));
        let empty = write(dir.path(), "e.csv", "x,binaryClass\n");
        assert!(matches!(HousingTable::read_csv(&empty), Err(DataError::Empty(_))));
    }

    #[test]
    fn standardized_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_synthetic_housing(&p, 2000, 3).unwrap();
        let mut t = HousingTable::read_csv(&p).unwrap();
        t.standardize();
        let n = t.len() as f64;
        for col in t.features.column_iter() {
            let mean = col.sum() / n;
            let std = (col.map(|v| (v - mean) * (v - mean)).sum() / n).sqrt();
            assert!(mean.abs() < 1e-10);
            assert!((std - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shift_only_touches_manipulable_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_synthetic_housing(&p, 500, 4).unwrap();
        let task = load_housing(&HousingTaskSpec::new(&p, 2.0)).unwrap();
        let mut e0 = DVector::zeros(8);
        e0[0] = 1.0;
        let base = task.model.sample_base(300, 1).unwrap();
        let moved = task.model.sample_deployed(&e0, 300, 1).unwrap();
        let delta = moved.x() - base.x();
        for i in 0..300 {
            for j in 0..8 {
                let expected = if j == 0 && base.labels()[i] == 0 { 2.0 } else { 0.0 };
                assert!((delta[(i, j)] - expected).abs() < 1e-12);
            }
        }
        let full = DVector::from_element(8, 1.0);
        let shift = task.model.shift().apply(&full);
        let support: Vec<usize> = (0..8).filter(|&i| shift[i] != 0.0).collect();
        assert_eq!(support, DEFAULT_SHIFTED.to_vec());

        let static_task = load_housing(&HousingTaskSpec::new(&p, 0.0)).unwrap();
        assert!(static_task.model.shift().is_zero());

        let mut spec = HousingTaskSpec::new(&p, 1.0);
        spec.intercept = true;
        let with_icpt = load_housing(&spec).unwrap();
        assert_eq!(with_icpt.model.dim(), 9);
        assert_eq!(with_icpt.model.shift().matrix()[(8, 8)], 0.0);

        spec.shifted_coords = vec![9];
        assert!(matches!(
            load_housing(&spec),
            Err(Error::Data(DataError::ShiftedCoordinate { index: 9, dim: 8 }))
        ));
    }
}
