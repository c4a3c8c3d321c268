//! Datasets, featurization, train/validation splitting and CSV ingestion.
//!
//! All types here are immutable once built. A [`Split`] owns copies of the
//! labeled samples on each side, so code that trains on the training side
//! cannot reach validation samples.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SimRng;

/// A featurized input. When built with an intercept, coordinate 0 is the
/// constant 1 and the remaining coordinates are the raw input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    intercept: bool,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, intercept: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must have at least one entry"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite feature value {bad}")));
        }
        if intercept && values[0] != 1.0 {
            return Err(Error::invalid(format!(
                "intercept coordinate must be 1, got {}",
                values[0]
            )));
        }
        Ok(Self { values, intercept })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// The raw input the features were built from.
    pub fn raw(&self) -> &[f64] {
        if self.intercept {
            &self.values[1..]
        } else {
            &self.values
        }
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Prepend the constant intercept feature when `intercept` is set.
pub fn featurize(raw: &[f64], intercept: bool) -> Result<FeatureVector> {
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite raw input {bad}")));
    }
    let mut values = Vec::with_capacity(raw.len() + usize::from(intercept));
    if intercept {
        values.push(1.0);
    }
    values.extend_from_slice(raw);
    FeatureVector::new(values, intercept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: f64,
}

impl Sample {
    pub fn new(features: FeatureVector, label: f64) -> Result<Self> {
        if !label.is_finite() {
            return Err(Error::invalid(format!("non-finite label {label}")));
        }
        Ok(Self { features, label })
    }
}

/// Labeled samples `S` plus an optional unlabeled pool `Sᵘ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    labeled: Vec<Sample>,
    unlabeled: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(labeled: Vec<Sample>, unlabeled: Vec<FeatureVector>) -> Result<Self> {
        let mut shape = None;
        let all = labeled.iter().map(|s| &s.features).chain(unlabeled.iter());
        for x in all {
            let this = (x.dim(), x.has_intercept());
            match shape {
                None => shape = Some(this),
                Some((d, _)) if d != this.0 => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: this.0,
                    })
                }
                Some((_, i)) if i != this.1 => {
                    return Err(Error::invalid("mixed intercept and non-intercept features"))
                }
                _ => {}
            }
        }
        Ok(Self { labeled, unlabeled })
    }

    /// Labeled samples only.
    pub fn labeled_only(labeled: Vec<Sample>) -> Result<Self> {
        Self::new(labeled, Vec::new())
    }

    /// `N`
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    /// `N_u`
    pub fn n_unlabeled(&self) -> usize {
        self.unlabeled.len()
    }

    /// `N_t = N + N_u`
    pub fn n_total(&self) -> usize {
        self.n() + self.n_unlabeled()
    }

    /// Feature dimension `d`, or 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.all_features().next().map_or(0, FeatureVector::dim)
    }

    pub fn intercept(&self) -> bool {
        self.all_features()
            .next()
            .is_some_and(FeatureVector::has_intercept)
    }

    pub fn labeled(&self) -> &[Sample] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[FeatureVector] {
        &self.unlabeled
    }

    pub fn labeled_features(&self) -> impl Iterator<Item = &FeatureVector> {
        self.labeled.iter().map(|s| &s.features)
    }

    /// Labeled features followed by the unlabeled pool.
    pub fn all_features(&self) -> impl Iterator<Item = &FeatureVector> {
        self.labeled_features().chain(self.unlabeled.iter())
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.labeled.iter().map(|s| s.label)
    }

    /// Write in the ingestion schema: raw feature columns `x1..xk`, then the
    /// label column. Unlabeled rows get an empty label cell.
    pub fn write_csv(&self, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
        let path = path.as_ref();
        let raw_dim = self.all_features().next().map_or(0, |x| x.raw().len());
        let mut out = String::new();
        let mut header: Vec<String> = (1..=raw_dim).map(|i| format!("x{i}")).collect();
        header.push(label_column.to_string());
        out.push_str(&header.join(","));
        out.push('\n');
        let mut row = |x: &FeatureVector, label: Option<f64>| {
            let mut cells: Vec<String> = x.raw().iter().map(f64::to_string).collect();
            cells.push(label.map(|v| v.to_string()).unwrap_or_default());
            out.push_str(&cells.join(","));
            out.push('\n');
        };
        for s in &self.labeled {
            row(&s.features, Some(s.label));
        }
        for x in &self.unlabeled {
            row(x, None);
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Disjoint training and validation sides of a labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    /// Indices into the source dataset's labeled samples.
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

impl Split {
    /// `N₁`
    pub fn n_train(&self) -> usize {
        self.train.n()
    }

    /// `N₂`
    pub fn n_validation(&self) -> usize {
        self.validation.n()
    }
}

/// Uniformly random partition of the labeled samples: a seeded shuffle of the
/// indices, the first `round(ratio·N)` of which go to training.
pub fn split_dataset(dataset: &Dataset, ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must lie in (0,1), got {ratio}")));
    }
    let n = dataset.n();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} labeled samples")));
    }
    let n_train = (ratio * n as f64).round() as usize;
    if n_train < 1 || n_train > n - 1 {
        return Err(Error::invalid(format!(
            "ratio {ratio} of {n} samples leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SimRng::new(seed).shuffle(&mut order);
    let (train_idx, val_idx) = order.split_at(n_train);
    let take = |idx: &[usize]| -> Result<Dataset> {
        Dataset::labeled_only(idx.iter().map(|&i| dataset.labeled[i].clone()).collect())
    };
    Ok(Split {
        train: take(train_idx)?,
        validation: take(val_idx)?,
        train_indices: train_idx.to_vec(),
        validation_indices: val_idx.to_vec(),
        seed,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsProvenance {
    /// Observed extremes of a sample.
    Empirical,
    /// Supplied population bounds.
    Assumed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsPair {
    pub lower: f64,
    pub upper: f64,
    pub provenance: BoundsProvenance,
}

impl BoundsPair {
    pub fn assumed(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::invalid(format!("bounds out of order: {lower} > {upper}")));
        }
        Ok(Self {
            lower,
            upper,
            provenance: BoundsProvenance::Assumed,
        })
    }

    /// `UB - LB`
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Sample minimum and maximum.
pub fn empirical_bounds(values: &[f64]) -> Result<BoundsPair> {
    if values.is_empty() {
        return Err(Error::invalid("empirical bounds of an empty list"));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {bad}")));
    }
    let (lower, upper) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(BoundsPair {
        lower,
        upper,
        provenance: BoundsProvenance::Empirical,
    })
}

/// Read a CSV with a header row. `label_column` holds the response; every
/// other column is a raw feature, in file order. A blank label cell makes the
/// row part of the unlabeled pool. Row numbers in errors count data rows
/// from 1.
pub fn load_dataset_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    intercept: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("no column named {label_column:?} in header"),
        })?;
    let width = headers.len();

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                message: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let mut raw = Vec::with_capacity(width - 1);
        let mut label = None;
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                if !cell.is_empty() {
                    label = Some(parse_cell(cell, row, &headers[col])?);
                }
            } else {
                raw.push(parse_cell(cell, row, &headers[col])?);
            }
        }
        let features = featurize(&raw, intercept).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        match label {
            Some(y) => labeled.push(Sample::new(features, y).map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?),
            None => unlabeled.push(features),
        }
    }
    Dataset::new(labeled, unlabeled)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("column {column:?}: {cell:?} is not a number"),
    })
}
