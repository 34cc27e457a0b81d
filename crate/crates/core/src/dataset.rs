//! Tabular ingestion: CSV loading with imputation, one-hot encoding,
//! standardization and seeded train/test splits.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Numeric => None,
            FeatureKind::Categorical { categories } => Some(categories),
        }
    }

    /// Number of encoded columns this feature expands to.
    pub fn width(&self) -> usize {
        self.categories().map_or(1, <[String]>::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label_column: String,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, label_column: impl Into<String>) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            label_column: label_column.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
            if let Some(cats) = f.categories() {
                if cats.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "categorical feature `{}` needs at least 2 categories",
                        f.name
                    )));
                }
                let distinct: HashSet<_> = cats.iter().collect();
                if distinct.len() != cats.len() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical feature `{}` repeats a category",
                        f.name
                    )));
                }
            }
        }
        if seen.contains(self.label_column.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "label column `{}` is also a feature",
                self.label_column
            )));
        }
        Ok(())
    }

    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureSpec::width).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Numeric(f64),
    Category(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Vec<Cell>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<Cell>>, labels: Vec<u8>) -> Result<Self> {
        schema.validate()?;
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        for (r, (row, &label)) in rows.iter().zip(&labels).enumerate() {
            if label > 1 {
                return Err(Error::NonBinaryLabel {
                    row: r,
                    value: label.to_string(),
                });
            }
            if row.len() != schema.features.len() {
                return Err(Error::DimensionMismatch {
                    expected: schema.features.len(),
                    found: row.len(),
                });
            }
            for (cell, spec) in row.iter().zip(&schema.features) {
                match (cell, spec.categories()) {
                    (Cell::Numeric(_), None) => {}
                    (Cell::Category(c), Some(cats)) if *c < cats.len() => {}
                    (cell, _) => {
                        return Err(Error::UnknownCategory {
                            feature: spec.name.clone(),
                            token: format!("{cell:?}"),
                            row: r,
                        })
                    }
                }
            }
        }
        Ok(Dataset {
            schema,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Missing cells filled in by [`load_csv`], per feature in schema order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub per_feature: Vec<(String, usize)>,
}

impl ImputationReport {
    pub fn total(&self) -> usize {
        self.per_feature.iter().map(|(_, c)| c).sum()
    }
}

fn is_missing(token: &str) -> bool {
    token.is_empty() || token == "?"
}

pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<(Dataset, ImputationReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Reads a header-bearing CSV. Missing cells (empty or `?`) are imputed with
/// the observed column mean (numeric) or mode (categorical, ties to the
/// lowest category index).
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<(Dataset, ImputationReport)> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| position(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_col = position(&schema.label_column)?;

    let mut raw: Vec<Vec<Option<Cell>>> = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(feature_cols.len());
        for (spec, &col) in schema.features.iter().zip(&feature_cols) {
            let token = record.get(col).unwrap_or("");
            if is_missing(token) {
                row.push(None);
                continue;
            }
            let cell = match spec.categories() {
                None => Cell::Numeric(token.parse().map_err(|_| Error::InvalidNumber {
                    feature: spec.name.clone(),
                    token: token.to_string(),
                    row: r,
                })?),
                Some(cats) => Cell::Category(cats.iter().position(|c| c == token).ok_or_else(
                    || Error::UnknownCategory {
                        feature: spec.name.clone(),
                        token: token.to_string(),
                        row: r,
                    },
                )?),
            };
            row.push(Some(cell));
        }
        let token = record.get(label_col).unwrap_or("");
        let label = match token.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::NonBinaryLabel {
                    row: r,
                    value: token.to_string(),
                })
            }
        };
        raw.push(row);
        labels.push(label);
    }

    let mut report = ImputationReport::default();
    let mut fill = Vec::with_capacity(schema.features.len());
    for (j, spec) in schema.features.iter().enumerate() {
        let observed = raw.iter().filter_map(|row| row[j]);
        let value = match spec.categories() {
            None => {
                let (sum, count) = observed.fold((0.0, 0usize), |(s, c), cell| match cell {
                    Cell::Numeric(v) => (s + v, c + 1),
                    Cell::Category(_) => (s, c),
                });
                Cell::Numeric(if count == 0 { 0.0 } else { sum / count as f64 })
            }
            Some(cats) => {
                let mut counts = vec![0usize; cats.len()];
                for cell in observed {
                    if let Cell::Category(c) = cell {
                        counts[c] += 1;
                    }
                }
                // max_by_key keeps the last maximum, so scan in reverse
                let mode = (0..cats.len()).rev().max_by_key(|&c| counts[c]).unwrap_or(0);
                Cell::Category(mode)
            }
        };
        fill.push(value);
        let missing = raw.iter().filter(|row| row[j].is_none()).count();
        report.per_feature.push((spec.name.clone(), missing));
    }

    let rows = raw
        .into_iter()
        .map(|row| row.into_iter().zip(&fill).map(|(c, f)| c.unwrap_or(*f)).collect())
        .collect();
    let dataset = Dataset::new(schema.clone(), rows, labels)?;
    Ok((dataset, report))
}

/// Where an encoded column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSource {
    pub feature: usize,
    pub category: Option<usize>,
}

/// Contiguous block of one-hot columns belonging to one categorical feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalGroup {
    pub feature: usize,
    pub columns: std::ops::Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub schema: FeatureSchema,
    pub matrix: Array2<f64>,
    pub column_map: Vec<ColumnSource>,
    pub labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.matrix.ncols()
    }

    /// `feature` for numeric columns, `feature=category` for one-hot columns.
    pub fn column_names(&self) -> Vec<String> {
        self.column_map
            .iter()
            .map(|src| column_name(&self.schema, *src))
            .collect()
    }

    pub fn categorical_groups(&self) -> Vec<CategoricalGroup> {
        categorical_groups(&self.column_map)
    }

    pub fn select_rows(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            schema: self.schema.clone(),
            matrix: self.matrix.select(Axis(0), indices),
            column_map: self.column_map.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn with_matrix(&self, matrix: Array2<f64>) -> Result<EncodedDataset> {
        if matrix.dim() != self.matrix.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: matrix.ncols(),
            });
        }
        Ok(EncodedDataset {
            matrix,
            ..self.clone()
        })
    }
}

pub fn column_name(schema: &FeatureSchema, src: ColumnSource) -> String {
    let spec = &schema.features[src.feature];
    match (src.category, spec.categories()) {
        (Some(c), Some(cats)) => format!("{}={}", spec.name, cats[c]),
        _ => spec.name.clone(),
    }
}

pub fn categorical_groups(column_map: &[ColumnSource]) -> Vec<CategoricalGroup> {
    let mut groups: Vec<CategoricalGroup> = Vec::new();
    for (j, src) in column_map.iter().enumerate() {
        if src.category.is_none() {
            continue;
        }
        match groups.last_mut() {
            Some(g) if g.feature == src.feature && g.columns.end == j => g.columns.end = j + 1,
            _ => groups.push(CategoricalGroup {
                feature: src.feature,
                columns: j..j + 1,
            }),
        }
    }
    groups
}

pub fn one_hot_encode(ds: &Dataset) -> EncodedDataset {
    let mut column_map = Vec::with_capacity(ds.schema.encoded_width());
    let mut offsets = Vec::with_capacity(ds.schema.features.len());
    for (f, spec) in ds.schema.features.iter().enumerate() {
        offsets.push(column_map.len());
        match spec.categories() {
            None => column_map.push(ColumnSource {
                feature: f,
                category: None,
            }),
            Some(cats) => column_map.extend((0..cats.len()).map(|c| ColumnSource {
                feature: f,
                category: Some(c),
            })),
        }
    }
    let mut matrix = Array2::zeros((ds.len(), column_map.len()));
    for (r, row) in ds.rows.iter().enumerate() {
        for (cell, &offset) in row.iter().zip(&offsets) {
            match *cell {
                Cell::Numeric(v) => matrix[[r, offset]] = v,
                Cell::Category(c) => matrix[[r, offset + c]] = 1.0,
            }
        }
    }
    EncodedDataset {
        schema: ds.schema.clone(),
        matrix,
        column_map,
        labels: ds.labels.clone(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

/// Per-column standardization, `(x - mean) / std`.
///
/// Columns whose standard deviation is exactly zero are flagged constant and
/// divided by 1 instead, so they map to all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Scaler {
    pub fn fit(matrix: &Array2<f64>) -> Result<Scaler> {
        Scaler::fit_with(matrix, StdConvention::Population)
    }

    pub fn fit_with(matrix: &Array2<f64>, convention: StdConvention) -> Result<Scaler> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let ddof = match convention {
            StdConvention::Population => 0,
            StdConvention::Sample if n > 1 => 1,
            StdConvention::Sample => 0,
        };
        let mut mean = Vec::with_capacity(matrix.ncols());
        let mut std = Vec::with_capacity(matrix.ncols());
        for col in matrix.columns() {
            let m = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            mean.push(m);
            std.push((ss / (n - ddof) as f64).sqrt());
        }
        let constant = std.iter().map(|&s| s == 0.0).collect();
        Ok(Scaler {
            mean,
            std,
            constant,
        })
    }

    pub fn identity(columns: usize) -> Scaler {
        Scaler {
            mean: vec![0.0; columns],
            std: vec![1.0; columns],
            constant: vec![false; columns],
        }
    }

    pub fn n_columns(&self) -> usize {
        self.mean.len()
    }

    pub fn effective_std(&self, column: usize) -> f64 {
        if self.constant[column] {
            1.0
        } else {
            self.std[column]
        }
    }

    pub fn transform(&self, matrix: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(matrix.ncols())?;
        let mut out = matrix.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.effective_std(j));
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.effective_std(j))
            .collect())
    }

    pub fn inverse_transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check(row.len())?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, v)| v * self.effective_std(j) + self.mean[j])
            .collect())
    }

    fn check(&self, columns: usize) -> Result<()> {
        if columns != self.n_columns() {
            return Err(Error::DimensionMismatch {
                expected: self.n_columns(),
                found: columns,
            });
        }
        Ok(())
    }
}

/// Seeded Fisher-Yates permutation of `0..n`; the first `floor(n * fraction)`
/// indices are the training side.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split(
    ds: &EncodedDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    let (train, test) = split_indices(ds.n_rows(), train_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}
