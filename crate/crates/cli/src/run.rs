//! Command dispatch.

use std::fmt;
use std::path::Path;

use fdmaha_core::datasets::{
    load_curves_csv, load_phoneme, load_tecator, run_resampling, smooth_table, CsvSchema, CurveTable, Protocol,
};
use fdmaha_core::experiment::ExperimentResults;
use fdmaha_core::rng::replication_rng;
use fdmaha_core::simulate::{generate_dataset, run_monte_carlo, smooth_dataset, ScenarioConfig, SIM_BASIS_ORDER, SIM_BASIS_SIZE};
use fdmaha_core::tuning::cross_validate;
use fdmaha_core::{
    BasisSystem, ErrorCategory, FdaError, FunctionalDatum, Hyperparameters, LabeledSample, MethodSpec, TrainedClassifier,
    TuningGrid,
};
use serde::Serialize;

use crate::config::{Command, DataSource, DatasetName, Settings};
use crate::output::{
    aligned, read_summary_csv, render_accuracy, render_components, replications_csv, summary_csv,
    summary_rows, write_csv, Artifacts,
};

/// Exit status of a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config = 1,
    Data = 2,
    Numerical = 3,
}

#[derive(Debug)]
pub struct RunError {
    pub kind: Failure,
    pub message: String,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl RunError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Failure::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: Failure::Data, message: message.into() }
    }
}

impl From<FdaError> for RunError {
    fn from(e: FdaError) -> Self {
        let kind = match e.category() {
            ErrorCategory::Config => Failure::Config,
            ErrorCategory::Data => Failure::Data,
            ErrorCategory::Numerical => Failure::Numerical,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

type RunResult<T> = Result<T, RunError>;

/// Run the command; returns the files to write and text for standard output.
pub fn dispatch(s: &Settings) -> RunResult<(Artifacts, String)> {
    let mut artifacts = match s.command {
        Command::Simulate => simulate(s)?,
        Command::Classify => match &s.source {
            DataSource::Files { train, test, label_column } => {
                classify_files(s, train, test.as_deref().expect("checked at resolve"), label_column)?
            }
            DataSource::Dataset { name, file, classes } => resample_dataset(s, *name, file, classes)?,
            DataSource::Scenario => unreachable!("classify needs data"),
        },
        Command::Tune => tune(s)?,
        Command::Report => {
            let text = report(s)?;
            let mut a = Artifacts::default();
            a.add("report.txt", text.clone());
            return Ok((a, text));
        }
    };
    let manifest = toml::to_string(&s.manifest).map_err(|e| RunError::config(e.to_string()))?;
    artifacts.add("manifest.toml", manifest);
    let summary = artifacts.names().collect::<Vec<_>>().join(", ");
    Ok((artifacts, format!("wrote {summary} to {}\n", s.out.display())))
}

fn check_failures(results: &ExperimentResults) -> RunResult<()> {
    if results.all_succeeded() {
        return Ok(());
    }
    let lines: Vec<String> =
        results.failures.iter().map(|f| format!("replication {}: {}", f.replication, f.error)).collect();
    Err(RunError {
        kind: Failure::Numerical,
        message: format!(
            "{} of {} replications failed after retries:\n  {}",
            results.failures.len(),
            results.requested,
            lines.join("\n  ")
        ),
    })
}

fn experiment_artifacts(results: &ExperimentResults, heading: &str) -> RunResult<Artifacts> {
    check_failures(results)?;
    let rows = summary_rows(results);
    let mut a = Artifacts::default();
    a.add("results.csv", summary_csv(&rows)?);
    a.add("results.txt", format!("{heading}\n{}", render_accuracy(&rows)));
    if let Some(c) = render_components(&rows) {
        a.add("components.txt", format!("{heading}\n{c}"));
    }
    a.add("replications.csv", replications_csv(results)?);
    Ok(a)
}

fn simulate(s: &Settings) -> RunResult<Artifacts> {
    let sc = &s.scenario;
    let cfg = ScenarioConfig::scenario(sc.id, sc.n, sc.grid)?;
    log::info!("scenario {} with n = {}, J = {}, {} replications", sc.id, sc.n, sc.grid, s.reps);
    let results = run_monte_carlo(&cfg, &s.methods, s.reps, s.seed, &s.grid)?;
    let heading = format!("Scenario {}, n = {}, J = {}, seed {}\n", sc.id, sc.n, sc.grid, s.seed);
    experiment_artifacts(&results, &heading)
}

fn dataset_protocol(s: &Settings, name: DatasetName) -> Protocol {
    let mut p = match name {
        DatasetName::Tecator => Protocol::tecator(),
        DatasetName::TecatorSecondDerivative => Protocol::tecator_second_derivative(),
        DatasetName::Phoneme => Protocol::phoneme(),
    };
    if let Some(o) = s.basis_order {
        p.basis_order = o;
    }
    if let Some(m) = s.basis_size {
        p.basis_size = m;
    }
    p
}

fn load_dataset(name: DatasetName, file: &Path, classes: &[String]) -> RunResult<CurveTable> {
    if !file.is_file() {
        return Err(RunError::data(format!("{}: dataset file not found", file.display())));
    }
    Ok(match name {
        DatasetName::Tecator | DatasetName::TecatorSecondDerivative => load_tecator(file)?,
        DatasetName::Phoneme => load_phoneme(file, classes)?,
    })
}

fn resample_dataset(s: &Settings, name: DatasetName, file: &Path, classes: &[String]) -> RunResult<Artifacts> {
    let table = load_dataset(name, file, classes)?;
    let protocol = dataset_protocol(s, name);
    log::info!("{}: {} curves, {} resamples", name.name(), table.len(), s.reps);
    let results = run_resampling(&table, &protocol, &s.methods, s.reps, s.seed, &s.grid)?;
    let counts: Vec<String> = protocol.train_counts.iter().map(usize::to_string).collect();
    let heading = format!(
        "Dataset {}, training counts {} ({}), seed {}\n",
        name.name(),
        counts.join("/"),
        table.class_names.join("/"),
        s.seed
    );
    experiment_artifacts(&results, &heading)
}

/// Reads a curve file, with labels when the label column is present.
fn load_table(path: &Path, label_column: &str, labels_required: bool) -> RunResult<CurveTable> {
    if !path.is_file() {
        return Err(RunError::data(format!("{}: file not found", path.display())));
    }
    let schema = CsvSchema { label_column: Some(label_column.to_string()) };
    match load_curves_csv(path, &schema) {
        Ok(t) => Ok(t),
        Err(FdaError::Format { row: 1, .. }) if !labels_required => {
            Ok(load_curves_csv(path, &CsvSchema { label_column: None })?)
        }
        Err(e) => Err(RunError::data(format!("{}: {e}", path.display()))),
    }
}

/// Basis for curves read from files: order 6 with 20 functions unless
/// configured, capped by the number of grid points.
fn file_basis(s: &Settings, grid: &[f64]) -> RunResult<BasisSystem> {
    let size = s.basis_size.unwrap_or(SIM_BASIS_SIZE).min(grid.len());
    let order = s.basis_order.unwrap_or(SIM_BASIS_ORDER).min(size);
    if grid.len() < 2 {
        return Err(RunError::data("curves need at least two grid points"));
    }
    Ok(BasisSystem::bspline(grid[0], grid[grid.len() - 1], order, size)?)
}

fn labeled_train(s: &Settings, path: &Path, label_column: &str) -> RunResult<(CurveTable, BasisSystem, LabeledSample)> {
    let table = load_table(path, label_column, true)?;
    let basis = file_basis(s, &table.grid)?;
    let labels = table.labels.clone().ok_or_else(|| RunError::data(format!("{}: no labels", path.display())))?;
    let curves = smooth_table(&table, &basis)?;
    let sample = LabeledSample::new(curves, labels, table.num_classes())?;
    Ok((table, basis, sample))
}

/// Hyperparameters for `spec`: fixed values where given, cross-validation otherwise.
fn choose(
    s: &Settings,
    basis: &BasisSystem,
    train: &LabeledSample,
    spec: MethodSpec,
) -> RunResult<(Hyperparameters, Option<f64>)> {
    let t = spec.uses_truncation().then_some(s.truncation).flatten();
    let k = spec.uses_neighbors().then_some(s.k).flatten();
    let needs_t = spec.uses_truncation() && t.is_none();
    let needs_k = spec.uses_neighbors() && k.is_none();
    if !needs_t && !needs_k {
        return Ok((Hyperparameters { truncation: t, k_neighbors: k }, None));
    }
    if t.is_some() && needs_k {
        return Err(RunError::config(format!("{spec}: give --k together with --truncation, or neither")));
    }
    let mut grid: TuningGrid = s.grid.clone();
    if let Some(k) = k {
        grid.neighbor_values = vec![k];
    }
    let outcome = cross_validate(basis, train, spec, &grid, s.seed)?;
    Ok((outcome.hyper, Some(outcome.cv_accuracy)))
}

#[derive(Serialize)]
struct ClassifyRow {
    method: String,
    truncation: Option<usize>,
    k: Option<usize>,
    cv_accuracy: Option<f64>,
    test_accuracy: Option<f64>,
}

fn classify_files(s: &Settings, train_path: &Path, test_path: &Path, label_column: &str) -> RunResult<Artifacts> {
    let (train_table, basis, train) = labeled_train(s, train_path, label_column)?;
    let test_table = load_table(test_path, label_column, false)?;
    if test_table.grid != train_table.grid {
        return Err(RunError::data(format!(
            "{}: grid differs from the training grid in {}",
            test_path.display(),
            train_path.display()
        )));
    }
    let test: Vec<FunctionalDatum> = smooth_table(&test_table, &basis)?;
    let truth: Option<Vec<&str>> = test_table
        .labels
        .as_ref()
        .map(|ls| ls.iter().map(|&l| test_table.class_names[l].as_str()).collect());

    let mut summary = Vec::new();
    let mut predicted: Vec<Vec<&str>> = Vec::new();
    for &spec in &s.methods {
        let (hyper, cv) = choose(s, &basis, &train, spec)?;
        let clf = TrainedClassifier::train(&basis, &train, spec, hyper)?;
        let labels: Vec<&str> =
            clf.classify_batch(&test)?.into_iter().map(|g| train_table.class_names[g].as_str()).collect();
        let accuracy = truth.as_ref().filter(|t| !t.is_empty()).map(|t| {
            t.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / t.len() as f64
        });
        summary.push(ClassifyRow {
            method: spec.to_string(),
            truncation: hyper.truncation,
            k: hyper.k_neighbors,
            cv_accuracy: cv,
            test_accuracy: accuracy,
        });
        predicted.push(labels);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string()];
    if truth.is_some() {
        header.push(label_column.to_string());
    }
    header.extend(s.methods.iter().map(|m| m.to_string()));
    w.write_record(&header).map_err(|e| RunError::data(e.to_string()))?;
    for i in 0..test.len() {
        let mut rec = vec![(i + 1).to_string()];
        if let Some(t) = &truth {
            rec.push(t[i].to_string());
        }
        rec.extend(predicted.iter().map(|p| p[i].to_string()));
        w.write_record(&rec).map_err(|e| RunError::data(e.to_string()))?;
    }
    let predictions = w.into_inner().map_err(|e| RunError::data(e.to_string()))?;

    let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
    let frac = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut table = vec![vec!["Method".to_string(), "K".into(), "k".into(), "CV accuracy".into(), "Test accuracy".into()]];
    for r in &summary {
        table.push(vec![r.method.clone(), opt(r.truncation), opt(r.k), frac(r.cv_accuracy), frac(r.test_accuracy)]);
    }
    let text = format!(
        "Trained on {} ({} curves), classified {} ({} curves)\n\n{}",
        train_path.display(),
        train.len(),
        test_path.display(),
        test.len(),
        aligned(&table)
    );

    let mut a = Artifacts::default();
    a.add("predictions.csv", predictions);
    a.add("classify.csv", write_csv(&summary)?);
    a.add("classify.txt", text);
    Ok(a)
}

#[derive(Serialize)]
struct TuneRow {
    method: String,
    truncation: Option<usize>,
    k: Option<usize>,
    cv_accuracy: f64,
    clamped_truncation: Option<usize>,
}

fn tune(s: &Settings) -> RunResult<Artifacts> {
    let (basis, train, origin) = match &s.source {
        DataSource::Files { train, label_column, .. } => {
            let (_, basis, sample) = labeled_train(s, train, label_column)?;
            (basis, sample, format!("{}", train.display()))
        }
        DataSource::Dataset { name, file, classes } => {
            let table = load_dataset(*name, file, classes)?;
            let labels = table.labels.clone().ok_or_else(|| RunError::data("dataset has no labels"))?;
            let (basis, curves) = dataset_protocol(s, *name).transform(&table)?;
            let sample = LabeledSample::new(curves, labels, table.num_classes())?;
            (basis, sample, format!("dataset {} (all curves)", name.name()))
        }
        DataSource::Scenario => {
            let sc = &s.scenario;
            let cfg = ScenarioConfig::scenario(sc.id, sc.n, sc.grid)?;
            let data = generate_dataset(&cfg, &mut replication_rng(s.seed, 0, 0))?;
            let basis = BasisSystem::bspline(0.0, 1.0, SIM_BASIS_ORDER, SIM_BASIS_SIZE)?;
            let (train, _, _) = smooth_dataset(&basis, &data)?;
            (basis, train, format!("scenario {} training sample (n = {}, J = {})", sc.id, sc.n, sc.grid))
        }
    };

    let mut chosen = Vec::new();
    let mut grid_rows: Vec<Vec<String>> = Vec::new();
    let mut fold_count = 0;
    for &spec in &s.methods {
        if !spec.uses_truncation() && !spec.uses_neighbors() {
            log::info!("{spec} has no hyperparameters; skipped");
            continue;
        }
        let outcome = cross_validate(&basis, &train, spec, &s.grid, s.seed)?;
        for p in &outcome.table {
            fold_count = fold_count.max(p.fold_accuracies.len());
            let mut rec = vec![
                spec.to_string(),
                p.truncation.map_or(String::new(), |t| t.to_string()),
                p.k_neighbors.map_or(String::new(), |k| k.to_string()),
                p.mean_accuracy.to_string(),
            ];
            rec.extend(p.fold_accuracies.iter().map(f64::to_string));
            grid_rows.push(rec);
        }
        chosen.push(TuneRow {
            method: spec.to_string(),
            truncation: outcome.hyper.truncation,
            k: outcome.hyper.k_neighbors,
            cv_accuracy: outcome.cv_accuracy,
            clamped_truncation: outcome.clamped_truncation,
        });
    }
    if chosen.is_empty() {
        return Err(RunError::config("none of the requested methods has hyperparameters to tune"));
    }

    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let mut header: Vec<String> = ["method", "truncation", "k", "mean_accuracy"].map(String::from).to_vec();
    header.extend((1..=fold_count).map(|f| format!("fold_{f}")));
    w.write_record(&header).map_err(|e| RunError::data(e.to_string()))?;
    for r in &grid_rows {
        w.write_record(r).map_err(|e| RunError::data(e.to_string()))?;
    }
    let grid_csv = w.into_inner().map_err(|e| RunError::data(e.to_string()))?;

    let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
    let mut table = vec![vec!["Method".to_string(), "K".into(), "k".into(), "CV accuracy".into()]];
    for r in &chosen {
        table.push(vec![r.method.clone(), opt(r.truncation), opt(r.k), format!("{:.4}", r.cv_accuracy)]);
    }
    let text = format!("Cross-validation on {origin}, {} curves, seed {}\n\n{}", train.len(), s.seed, aligned(&table));

    let mut a = Artifacts::default();
    a.add("cv_grid.csv", grid_csv);
    a.add("tune.csv", write_csv(&chosen)?);
    a.add("tune.txt", text);
    Ok(a)
}

fn report(s: &Settings) -> RunResult<String> {
    let input = s.report_input.as_deref().expect("checked at resolve");
    let path = if input.is_dir() { input.join("results.csv") } else { input.to_path_buf() };
    if !path.is_file() {
        return Err(RunError::data(format!("{}: results file not found", path.display())));
    }
    let rows = read_summary_csv(&path).map_err(RunError::data)?;
    let mut text = render_accuracy(&rows);
    if let Some(c) = render_components(&rows) {
        text.push('\n');
        text.push_str(&c);
    }
    Ok(text)
}
