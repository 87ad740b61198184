//! Curve tables on a shared grid: CSV input/output, the Tecator and Phoneme
//! layouts, stratified resampling and smoothing.
//!
//! # Curve CSV layout
//!
//! The first row is a header. Every header cell that parses as a finite
//! number is a grid point; the optional label column is identified by name
//! (default `label`). Each following row is one curve: its values in the
//! grid columns and its class name in the label column. Columns are
//! comma-separated; no other columns are allowed. Written files use the same
//! layout with the label column first and shortest round-trip float
//! formatting, so reading a written table reproduces it exactly.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::classifiers::MethodSpec;
use crate::error::{FdaError, Result};
use crate::experiment::{evaluate_methods, run_replications, tuning_seed, ExperimentResults};
use crate::fpca::LabeledSample;
use crate::rng::stream_rng;
use crate::tuning::TuningGrid;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "FDMAHA_DATA_DIR";
/// Expected Tecator file name inside the data directory.
pub const TECATOR_FILE: &str = "tecator.txt";
/// Expected Phoneme file name inside the data directory.
pub const PHONEME_FILE: &str = "phoneme.txt";

/// Data directory from [`DATA_DIR_ENV`], if set and non-empty.
pub fn data_dir() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// Fat percentage above which a Tecator sample is high-fat.
pub const TECATOR_FAT_THRESHOLD: f64 = 20.0;
/// Numbers per record in the Tecator file: 100 absorbances, 22 principal
/// components, moisture, fat, protein.
pub const TECATOR_RECORD_LEN: usize = 125;
pub const TECATOR_CHANNELS: usize = 100;
const TECATOR_FAT_OFFSET: usize = 123;
/// Records used from the Tecator file (training, monitoring and test sets).
pub const TECATOR_SAMPLES: usize = 215;
pub const PHONEME_POINTS: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Class index per curve, into `class_names`.
    pub labels: Option<Vec<usize>>,
    pub class_names: Vec<String>,
    pub source: String,
}

impl CurveTable {
    pub fn new(
        grid: Vec<f64>,
        values: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
        class_names: Vec<String>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if grid.windows(2).any(|w| w[1].is_nan() || w[0].is_nan() || w[1] <= w[0]) {
            return Err(FdaError::Format { row: 0, message: "grid must be strictly increasing".into() });
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(FdaError::Format {
                    row: i + 1,
                    message: format!("{} values for {} grid points", row.len(), grid.len()),
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(FdaError::Format { row: 0, message: "one label per curve required".into() });
            }
            if l.iter().any(|&c| c >= class_names.len()) {
                return Err(FdaError::Format { row: 0, message: "label outside class list".into() });
            }
        }
        Ok(Self { grid, values, labels, class_names, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in self.labels.iter().flatten() {
            counts[l] += 1;
        }
        counts
    }

    fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| FdaError::InvalidConfiguration(format!("{} has no labels", self.source)))
    }

    /// Same curves with the grid mapped affinely onto [0, 1].
    pub fn normalized(&self) -> CurveTable {
        let (a, b) = (self.grid[0], *self.grid.last().expect("non-empty grid"));
        let span = b - a;
        let grid = self
            .grid
            .iter()
            .enumerate()
            .map(|(j, &t)| if j + 1 == self.grid.len() { 1.0 } else { (t - a) / span })
            .collect();
        CurveTable { grid, ..self.clone() }
    }

    /// Rows `indices`, keeping the class list.
    pub fn select(&self, indices: &[usize]) -> CurveTable {
        CurveTable {
            grid: self.grid.clone(),
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_names: self.class_names.clone(),
            source: self.source.clone(),
        }
    }
}

/// How to read a curve CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Name of the label column; `None` for unlabeled tables.
    pub label_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { label_column: Some("label".into()) }
    }
}

fn class_order(names: &BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = names.iter().cloned().collect();
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().expect("checked integer"));
    }
    v
}

pub fn read_curves_csv<R: Read>(reader: R, schema: &CsvSchema, source: &str) -> Result<CurveTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| FdaError::Format { row: 1, message: e.to_string() })?.clone();
    let mut label_col = None;
    let mut grid_cols = Vec::new();
    let mut grid = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        let h = h.trim();
        if schema.label_column.as_deref() == Some(h) {
            label_col = Some(j);
        } else {
            match h.parse::<f64>() {
                Ok(t) if t.is_finite() => {
                    grid_cols.push(j);
                    grid.push(t);
                }
                _ => {
                    return Err(FdaError::Parse { row: 1, column: j + 1, value: h.to_string() });
                }
            }
        }
    }
    if schema.label_column.is_some() && label_col.is_none() {
        return Err(FdaError::Format {
            row: 1,
            message: format!("label column {:?} not found", schema.label_column.as_deref().unwrap_or("")),
        });
    }
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| FdaError::Format { row, message: e.to_string() })?;
        if rec.len() != headers.len() {
            return Err(FdaError::Format {
                row,
                message: format!("{} fields, header has {}", rec.len(), headers.len()),
            });
        }
        let mut curve = Vec::with_capacity(grid_cols.len());
        for &j in &grid_cols {
            let cell = rec[j].trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => curve.push(v),
                _ => return Err(FdaError::Parse { row, column: j + 1, value: cell.to_string() }),
            }
        }
        values.push(curve);
        if let Some(j) = label_col {
            raw_labels.push(rec[j].trim().to_string());
        }
    }
    let (labels, class_names) = if label_col.is_some() {
        let names = class_order(&raw_labels.iter().cloned().collect());
        let labels = raw_labels
            .iter()
            .map(|l| names.iter().position(|n| n == l).expect("name collected"))
            .collect();
        (Some(labels), names)
    } else {
        (None, Vec::new())
    };
    CurveTable::new(grid, values, labels, class_names, source)
}

pub fn load_curves_csv(path: &Path, schema: &CsvSchema) -> Result<CurveTable> {
    let file = std::fs::File::open(path).map_err(|e| FdaError::Io(format!("{}: {e}", path.display())))?;
    read_curves_csv(file, schema, &path.display().to_string())
}

pub fn write_curves_csv<W: Write>(table: &CurveTable, writer: W, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| FdaError::Io(e.to_string());
    let mut header = Vec::new();
    if table.labels.is_some() {
        header.push(label_column.to_string());
    }
    header.extend(table.grid.iter().map(|t| format!("{t:?}")));
    w.write_record(&header).map_err(io)?;
    for (i, row) in table.values.iter().enumerate() {
        let mut rec = Vec::with_capacity(row.len() + 1);
        if let Some(l) = &table.labels {
            rec.push(table.class_names[l[i]].clone());
        }
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Tecator class: 1 (high fat) above the threshold, 0 (low fat) otherwise;
/// exactly 20% counts as low fat.
pub fn tecator_class(fat: f64) -> usize {
    usize::from(fat > TECATOR_FAT_THRESHOLD)
}

/// Parse the raw Tecator file: free-form text header lines followed by
/// whitespace-separated numbers, [`TECATOR_RECORD_LEN`] per sample. At most
/// the first [`TECATOR_SAMPLES`] records are used; classes are `low` (0) and
/// `high` (1) fat. The grid is the wavelength range 850–1050 nm.
pub fn parse_tecator(text: &str, source: &str) -> Result<CurveTable> {
    let mut numbers = Vec::new();
    let mut started = false;
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = tokens.iter().map(|t| t.parse::<f64>()).collect();
        match parsed {
            Ok(v) => {
                started = true;
                numbers.extend(v);
            }
            Err(_) if !started => continue,
            Err(_) => {
                let (col, bad) = tokens
                    .iter()
                    .enumerate()
                    .find(|(_, t)| t.parse::<f64>().is_err())
                    .expect("some token failed");
                return Err(FdaError::Parse { row: i + 1, column: col + 1, value: bad.to_string() });
            }
        }
    }
    let records = numbers.len() / TECATOR_RECORD_LEN;
    if records == 0 {
        return Err(FdaError::Format { row: 0, message: "no complete Tecator record".into() });
    }
    if records < TECATOR_SAMPLES && numbers.len() % TECATOR_RECORD_LEN != 0 {
        return Err(FdaError::Format {
            row: 0,
            message: format!("trailing partial record after {records} Tecator records"),
        });
    }
    let mut values = Vec::with_capacity(TECATOR_SAMPLES);
    let mut labels = Vec::with_capacity(TECATOR_SAMPLES);
    for r in numbers.chunks_exact(TECATOR_RECORD_LEN).take(TECATOR_SAMPLES) {
        values.push(r[..TECATOR_CHANNELS].to_vec());
        labels.push(tecator_class(r[TECATOR_FAT_OFFSET]));
    }
    let grid = (0..TECATOR_CHANNELS).map(|j| 850.0 + 2.0 * j as f64 * 100.0 / 99.0).collect();
    CurveTable::new(grid, values, Some(labels), vec!["low".into(), "high".into()], source)
}

pub fn load_tecator(path: &Path) -> Result<CurveTable> {
    let text = std::fs::read_to_string(path).map_err(|e| FdaError::Io(format!("{}: {e}", path.display())))?;
    parse_tecator(&text, &path.display().to_string())
}

/// Class codes of "aa" and "ao" in the 150-point Phoneme layout, whose
/// classes are numbered sh, iy, dcl, aa, ao.
pub const PHONEME_DEFAULT_CLASSES: [&str; 2] = ["4", "5"];

fn same_code(token: &str, code: &str) -> bool {
    token == code
        || matches!((token.parse::<f64>(), code.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
}

/// Parse a Phoneme file: one curve per line, whitespace- or
/// comma-separated, [`PHONEME_POINTS`] log-periodogram values followed by a
/// class token (numeric code or name, quotes allowed). Only rows whose token
/// matches an entry of `keep` are retained, and classes are numbered in the
/// order of `keep`. Non-numeric first lines are treated as headers.
pub fn parse_phoneme(text: &str, keep: &[String], source: &str) -> Result<CurveTable> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut seen_data = false;
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.trim_matches('"'))
            .collect();
        if tokens.is_empty() {
            continue;
        }
        if !seen_data && tokens[0].parse::<f64>().is_err() {
            continue;
        }
        seen_data = true;
        if tokens.len() != PHONEME_POINTS + 1 {
            return Err(FdaError::Format {
                row: i + 1,
                message: format!("{} fields, expected {}", tokens.len(), PHONEME_POINTS + 1),
            });
        }
        let mut curve = Vec::with_capacity(PHONEME_POINTS);
        for (j, t) in tokens[..PHONEME_POINTS].iter().enumerate() {
            match t.parse::<f64>() {
                Ok(v) if v.is_finite() => curve.push(v),
                _ => return Err(FdaError::Parse { row: i + 1, column: j + 1, value: t.to_string() }),
            }
        }
        let code = tokens[PHONEME_POINTS];
        if let Some(class) = keep.iter().position(|k| same_code(code, k)) {
            values.push(curve);
            labels.push(class);
        }
    }
    let grid = (1..=PHONEME_POINTS).map(|j| j as f64).collect();
    CurveTable::new(grid, values, Some(labels), keep.to_vec(), source)
}

pub fn load_phoneme(path: &Path, keep: &[String]) -> Result<CurveTable> {
    let text = std::fs::read_to_string(path).map_err(|e| FdaError::Io(format!("{}: {e}", path.display())))?;
    parse_phoneme(&text, keep, &path.display().to_string())
}

/// Train/test row indices of one resample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Class-stratified draw without replacement: `train_counts[g]` rows of class
/// `g` for training, the rest for testing. Deterministic in
/// `(seed, replication)`.
pub fn resample_split(labels: &[usize], train_counts: &[usize], seed: u64, replication: usize) -> Result<Split> {
    let classes = train_counts.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(FdaError::InvalidSplit(format!("label {l} has no training count")));
        }
        members[l].push(i);
    }
    for (g, m) in members.iter().enumerate() {
        if train_counts[g] > m.len() {
            return Err(FdaError::InvalidSplit(format!(
                "class {g}: {} training curves requested, {} available",
                train_counts[g],
                m.len()
            )));
        }
    }
    let mut rng = stream_rng(seed, replication as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, mut m) in members.into_iter().enumerate() {
        m.shuffle(&mut rng);
        train.extend_from_slice(&m[..train_counts[g]]);
        test.extend_from_slice(&m[train_counts[g]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Splits for replications `0..replications`.
pub fn resample_splits<'a>(
    labels: &'a [usize],
    train_counts: &[usize],
    replications: usize,
    seed: u64,
) -> impl Iterator<Item = Result<Split>> + 'a {
    let counts = train_counts.to_vec();
    (0..replications).map(move |r| resample_split(labels, &counts, seed, r))
}

/// Least-squares smoothing of every row.
pub fn smooth_table(table: &CurveTable, basis: &BasisSystem) -> Result<Vec<FunctionalDatum>> {
    let smoother = basis.smoother(&table.grid)?;
    table.values.iter().map(|row| smoother.fit(row)).collect()
}

/// Smooth every row, then differentiate twice. Returns the derivative basis
/// together with the transformed curves.
pub fn second_derivative_transform(
    table: &CurveTable,
    basis: &BasisSystem,
) -> Result<(BasisSystem, Vec<FunctionalDatum>)> {
    if basis.order() < 3 {
        return Err(FdaError::DerivativeOrderTooHigh { requested: 2, order: basis.order() });
    }
    let smoothed = smooth_table(table, basis)?;
    let d2 = smoothed.iter().map(|f| basis.derivative(f, 2)).collect::<Result<Vec<_>>>()?;
    Ok((basis.derivative_basis(2)?, d2))
}

/// Real-data resampling protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub name: String,
    pub basis_order: usize,
    pub basis_size: usize,
    pub second_derivative: bool,
    /// Training curves per class; the rest of each class is the test sample.
    pub train_counts: Vec<usize>,
}

impl Protocol {
    /// Tecator originals: order 6, 20 functions, 58 high-fat and 104 low-fat
    /// training curves (classes are ordered low, high).
    pub fn tecator() -> Self {
        Self { name: "tecator".into(), basis_order: 6, basis_size: 20, second_derivative: false, train_counts: vec![104, 58] }
    }

    /// Tecator second derivatives: smoothed with 40 functions before differentiating.
    pub fn tecator_second_derivative() -> Self {
        Self { name: "tecator-d2".into(), basis_size: 40, second_derivative: true, ..Self::tecator() }
    }

    /// Phoneme: order 6, 40 functions, 300 training curves per phoneme.
    pub fn phoneme() -> Self {
        Self { name: "phoneme".into(), basis_order: 6, basis_size: 40, second_derivative: false, train_counts: vec![300, 300] }
    }

    /// Basis the curves are smoothed in, on the normalized [0, 1] grid.
    pub fn smoothing_basis(&self) -> Result<BasisSystem> {
        BasisSystem::bspline(0.0, 1.0, self.basis_order, self.basis_size)
    }

    /// Functional representation of a table under this protocol.
    pub fn transform(&self, table: &CurveTable) -> Result<(BasisSystem, Vec<FunctionalDatum>)> {
        let table = table.normalized();
        let basis = self.smoothing_basis()?;
        if self.second_derivative {
            second_derivative_transform(&table, &basis)
        } else {
            let curves = smooth_table(&table, &basis)?;
            Ok((basis, curves))
        }
    }
}

/// Repeated stratified resampling of a labeled table under `protocol`.
pub fn run_resampling(
    table: &CurveTable,
    protocol: &Protocol,
    methods: &[MethodSpec],
    replications: usize,
    seed: u64,
    grid: &TuningGrid,
) -> Result<ExperimentResults> {
    let labels = table.require_labels()?.to_vec();
    if protocol.train_counts.len() != table.num_classes() {
        return Err(FdaError::InvalidSplit(format!(
            "protocol has {} class counts, table has {} classes",
            protocol.train_counts.len(),
            table.num_classes()
        )));
    }
    // surface split errors as configuration errors rather than retried failures
    resample_split(&labels, &protocol.train_counts, seed, 0)?;
    let (basis, curves) = protocol.transform(table)?;
    let classes = table.num_classes();
    run_replications(methods, replications, seed, |r, rng| {
        let split = resample_split(&labels, &protocol.train_counts, seed, r)?;
        let train = LabeledSample::new(
            split.train.iter().map(|&i| curves[i].clone()).collect(),
            split.train.iter().map(|&i| labels[i]).collect(),
            classes,
        )?;
        let test: Vec<FunctionalDatum> = split.test.iter().map(|&i| curves[i].clone()).collect();
        let test_labels: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
        evaluate_methods(&basis, &train, &test, &test_labels, methods, grid, tuning_seed(rng))
    })
}
