//! Configuration: a TOML file overlaid by command-line flags.
//!
//! Every key in the file has a flag of the same name; flags win. The resolved
//! configuration is written back as `manifest.toml`, which is itself a valid
//! configuration file for the same command.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fdmaha_core::datasets::{data_dir, PHONEME_DEFAULT_CLASSES, PHONEME_FILE, TECATOR_FILE};
use fdmaha_core::tuning::Folds;
use fdmaha_core::{MethodSpec, TuningGrid};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_OUT: &str = "fdmaha-out";
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "fdmaha", version, about = "Functional Mahalanobis classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Monte Carlo study on a simulated scenario.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Train on a curve file and label a test file, or run a resampling study on a dataset.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Fixed number of components (skips cross-validation of the truncation).
        #[arg(long)]
        truncation: Option<usize>,
        /// Fixed number of neighbours (skips cross-validation of k).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cross-validation grid on a training sample.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Render stored results as mean (sd) tables.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// results.csv, or the directory holding it.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods such as `knn/fm_c,centroid/dh,flbcr`, or `all`.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub max_components: Option<usize>,
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// Number of cross-validation folds, or `loo`.
    #[arg(long)]
    pub folds: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Replications (Monte Carlo runs or resamples).
    #[arg(long)]
    pub reps: Option<usize>,
    /// More logging; repeat for debug output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args, Default)]
pub struct ScenarioArgs {
    /// Scenario 1 to 4.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Total sample size (both classes).
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points per curve (50 or 100).
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Training curves (CSV).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test curves (CSV).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Built-in dataset: tecator, tecator-d2 or phoneme.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Dataset file (default: the data directory from FDMAHA_DATA_DIR).
    #[arg(long)]
    pub data_file: Option<PathBuf>,
    /// Phoneme class codes to keep, comma-separated.
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub basis_order: Option<usize>,
    #[arg(long)]
    pub basis_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Classify,
    Tune,
    Report,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Classify => "classify",
            Command::Tune => "tune",
            Command::Report => "report",
        })
    }
}

/// Integer fold count or the string `"loo"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FoldsValue {
    Count(usize),
    Name(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_components: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_neighbors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<FoldsValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "SimulateSection::is_empty")]
    pub simulate: SimulateSection,
    #[serde(default, skip_serializing_if = "DataSection::is_empty")]
    pub data: DataSection,
    #[serde(default, skip_serializing_if = "ClassifySection::is_empty")]
    pub classify: ClassifySection,
    #[serde(default, skip_serializing_if = "ReportSection::is_empty")]
    pub report: ReportSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

impl SimulateSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_size: Option<usize>,
}

impl DataSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl ClassifySection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl ReportSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// A configuration problem, anchored to a file line when it came from one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Where a configuration value came from, for diagnostics.
struct Origin<'a> {
    file: Option<(&'a Path, &'a str)>,
}

impl Origin<'_> {
    /// `path:line: key: message` when `key` is set in the file, else `--flag: message`.
    fn error(&self, section: Option<&str>, key: &str, from_flag: bool, message: impl fmt::Display) -> ConfigError {
        if !from_flag {
            if let Some((path, text)) = self.file {
                if let Some(line) = key_line(text, section, key) {
                    return ConfigError { message: format!("{}:{line}: {key}: {message}", path.display()) };
                }
            }
        }
        ConfigError { message: format!("--{}: {message}", key.replace('_', "-")) }
    }
}

/// 1-based line on which `key` is assigned inside `[section]` (or at top level).
pub fn key_line(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        if lhs.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { train: PathBuf, test: Option<PathBuf>, label_column: String },
    Dataset { name: DatasetName, file: PathBuf, classes: Vec<String> },
    Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetName {
    Tecator,
    TecatorSecondDerivative,
    Phoneme,
}

impl DatasetName {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tecator" => Some(Self::Tecator),
            "tecator-d2" | "tecator_d2" => Some(Self::TecatorSecondDerivative),
            "phoneme" => Some(Self::Phoneme),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tecator => "tecator",
            Self::TecatorSecondDerivative => "tecator-d2",
            Self::Phoneme => "phoneme",
        }
    }

    fn default_file(self) -> &'static str {
        match self {
            Self::Tecator | Self::TecatorSecondDerivative => TECATOR_FILE,
            Self::Phoneme => PHONEME_FILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSettings {
    pub id: u8,
    pub n: usize,
    pub grid: usize,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub command: Command,
    pub seed: u64,
    pub out: PathBuf,
    /// Whether the output directory was given rather than defaulted.
    pub out_explicit: bool,
    pub methods: Vec<MethodSpec>,
    pub grid: TuningGrid,
    pub jobs: Option<usize>,
    pub reps: usize,
    pub verbose: u8,
    pub scenario: ScenarioSettings,
    pub source: DataSource,
    pub basis_order: Option<usize>,
    pub basis_size: Option<usize>,
    pub truncation: Option<usize>,
    pub k: Option<usize>,
    pub report_input: Option<PathBuf>,
    /// The configuration to store in the manifest.
    pub manifest: FileConfig,
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

/// Parse methods; `all` expands to the full table.
pub fn parse_methods(items: &[String]) -> Result<Vec<MethodSpec>, String> {
    let mut out = Vec::new();
    for item in items {
        if item.eq_ignore_ascii_case("all") {
            out.extend(MethodSpec::full_table());
            continue;
        }
        let spec: MethodSpec = item.parse().map_err(|e| format!("{e}"))?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err("no methods given".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|s| seen.insert(*s));
    Ok(out)
}

fn parse_folds(v: &FoldsValue) -> Result<Folds, String> {
    match v {
        FoldsValue::Count(k) if *k >= 2 => Ok(Folds::KFold(*k)),
        FoldsValue::Count(k) => Err(format!("at least 2 folds required, got {k}")),
        FoldsValue::Name(s) if s.eq_ignore_ascii_case("loo") => Ok(Folds::LeaveOneOut),
        FoldsValue::Name(s) => match s.parse::<usize>() {
            Ok(k) => parse_folds(&FoldsValue::Count(k)),
            Err(_) => Err(format!("expected a fold count or \"loo\", got {s:?}")),
        },
    }
}

fn folds_value(f: &Folds) -> FoldsValue {
    match f {
        Folds::KFold(k) => FoldsValue::Count(*k),
        Folds::LeaveOneOut => FoldsValue::Name("loo".into()),
    }
}

/// Read the configuration file, if any.
pub fn read_file(path: &Path) -> Result<(FileConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { message: format!("{}: cannot read configuration: {e}", path.display()) })?;
    let cfg: FileConfig = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        let msg = e.message().to_string();
        match line {
            Some(l) => ConfigError { message: format!("{}:{l}: {msg}", path.display()) },
            None => ConfigError { message: format!("{}: {msg}", path.display()) },
        }
    })?;
    Ok((cfg, text))
}

/// Merge flags over the file and resolve defaults.
pub fn resolve(cli: CommandArgs) -> Result<Settings, ConfigError> {
    let (command, common, scenario, data, truncation, k, input) = match cli {
        CommandArgs::Simulate { common, scenario } => {
            (Command::Simulate, common, scenario, DataArgs::default(), None, None, None)
        }
        CommandArgs::Classify { common, data, truncation, k } => {
            (Command::Classify, common, ScenarioArgs::default(), data, truncation, k, None)
        }
        CommandArgs::Tune { common, data, scenario } => (Command::Tune, common, scenario, data, None, None, None),
        CommandArgs::Report { common, input } => {
            (Command::Report, common, ScenarioArgs::default(), DataArgs::default(), None, None, input)
        }
    };

    let (file, text) = match &common.config {
        Some(p) => {
            let (f, t) = read_file(p)?;
            (f, Some(t))
        }
        None => (FileConfig::default(), None),
    };
    let origin = Origin { file: common.config.as_deref().zip(text.as_deref()) };

    if let Some(c) = file.command {
        if c != command {
            return Err(origin.error(None, "command", false, format!("configuration is for `{c}`, not `{command}`")));
        }
    }
    if let Some(v) = &file.version {
        if v != env!("CARGO_PKG_VERSION") {
            log::warn!("configuration written by version {v}, running {}", env!("CARGO_PKG_VERSION"));
        }
    }

    let seed = common.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = common.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let (method_items, methods_flag) = match (&common.methods, &file.methods) {
        (Some(m), _) => (split_list(m), true),
        (None, Some(m)) => (m.clone(), false),
        (None, None) => (vec!["all".to_string()], true),
    };
    let methods = parse_methods(&method_items).map_err(|e| origin.error(None, "methods", methods_flag, e))?;

    let max_components = common.max_components.or(file.max_components).unwrap_or(15);
    if max_components == 0 {
        return Err(origin.error(None, "max_components", common.max_components.is_some(), "must be at least 1"));
    }
    let max_neighbors = common.max_neighbors.or(file.max_neighbors).unwrap_or(9);
    if max_neighbors == 0 {
        return Err(origin.error(None, "max_neighbors", common.max_neighbors.is_some(), "must be at least 1"));
    }
    let folds_raw = match (&common.folds, &file.folds) {
        (Some(f), _) => Some((FoldsValue::Name(f.clone()), true)),
        (None, Some(f)) => Some((f.clone(), false)),
        (None, None) => None,
    };
    let folds = match folds_raw {
        Some((v, flag)) => parse_folds(&v).map_err(|e| origin.error(None, "folds", flag, e))?,
        None => Folds::KFold(DEFAULT_FOLDS),
    };
    let grid = TuningGrid::new(max_components, max_neighbors, folds)
        .map_err(|e| ConfigError { message: e.to_string() })?;

    let jobs = common.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(origin.error(None, "jobs", common.jobs.is_some(), "must be at least 1"));
    }
    let reps = common.reps.or(file.reps).unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Err(origin.error(None, "reps", common.reps.is_some(), "must be at least 1"));
    }

    let sim = &file.simulate;
    let id = scenario.scenario.or(sim.scenario).unwrap_or(1);
    if !(1..=4).contains(&id) {
        return Err(origin.error(Some("simulate"), "scenario", scenario.scenario.is_some(), "must be 1, 2, 3 or 4"));
    }
    let n = scenario.n.or(sim.n).unwrap_or(200);
    if n < 8 || n % 2 != 0 {
        return Err(origin.error(Some("simulate"), "n", scenario.n.is_some(), "must be an even number of at least 8"));
    }
    let grid_points = scenario.grid.or(sim.grid).unwrap_or(50);
    if grid_points < 2 {
        return Err(origin.error(Some("simulate"), "grid", scenario.grid.is_some(), "must be at least 2"));
    }

    let ds = &file.data;
    let train = data.train.clone().or(ds.train.clone());
    let test = data.test.clone().or(ds.test.clone());
    let label_column = data.label_column.clone().or(ds.label_column.clone()).unwrap_or_else(|| "label".into());
    let dataset = data.dataset.clone().or(ds.dataset.clone());
    let data_file = data.data_file.clone().or(ds.data_file.clone());
    let classes = data.classes.as_deref().map(split_list).or(ds.classes.clone());
    let basis_order = data.basis_order.or(ds.basis_order);
    let basis_size = data.basis_size.or(ds.basis_size);
    if let (Some(o), Some(m)) = (basis_order, basis_size) {
        if o == 0 || m < o {
            return Err(origin.error(
                Some("data"),
                "basis_size",
                data.basis_size.is_some(),
                format!("need basis_size ≥ basis_order ≥ 1, got {m} and {o}"),
            ));
        }
    }

    let source = match command {
        Command::Simulate | Command::Report => DataSource::Scenario,
        Command::Classify | Command::Tune => match (train, dataset) {
            (Some(_), Some(_)) => {
                return Err(origin.error(Some("data"), "dataset", data.dataset.is_some(), "give either train or dataset, not both"))
            }
            (Some(train), None) => {
                if command == Command::Classify && test.is_none() {
                    return Err(origin.error(Some("data"), "test", true, "classify needs a test file with train"));
                }
                DataSource::Files { train, test, label_column: label_column.clone() }
            }
            (None, Some(name)) => {
                let parsed = DatasetName::parse(&name).ok_or_else(|| {
                    origin.error(
                        Some("data"),
                        "dataset",
                        data.dataset.is_some(),
                        format!("unknown dataset {name:?}; expected tecator, tecator-d2 or phoneme"),
                    )
                })?;
                let file = match data_file.clone().or_else(|| data_dir().map(|d| d.join(parsed.default_file()))) {
                    Some(f) => f,
                    None => {
                        return Err(origin.error(
                            Some("data"),
                            "data_file",
                            true,
                            format!("no dataset file given and FDMAHA_DATA_DIR is not set (expected {})", parsed.default_file()),
                        ))
                    }
                };
                let classes = classes.clone().unwrap_or_else(|| PHONEME_DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect());
                DataSource::Dataset { name: parsed, file, classes }
            }
            (None, None) if command == Command::Tune => DataSource::Scenario,
            (None, None) => {
                return Err(origin.error(Some("data"), "train", true, "classify needs --train/--test or --dataset"))
            }
        },
    };

    let cls = &file.classify;
    let truncation = truncation.or(cls.truncation);
    let k = k.or(cls.k);
    if truncation == Some(0) || k == Some(0) {
        return Err(ConfigError { message: "--truncation and --k must be positive".into() });
    }
    let report_input = input.or(file.report.input.clone());
    if command == Command::Report && report_input.is_none() {
        return Err(origin.error(Some("report"), "input", true, "report needs --input"));
    }

    let mut manifest = FileConfig {
        version: Some(env!("CARGO_PKG_VERSION").to_string()),
        command: Some(command),
        seed: Some(seed),
        out: Some(out.clone()),
        methods: Some(methods.iter().map(|m| m.to_string()).collect()),
        max_components: Some(max_components),
        max_neighbors: Some(max_neighbors),
        folds: Some(folds_value(&folds)),
        jobs: None,
        reps: None,
        ..FileConfig::default()
    };
    match &source {
        DataSource::Scenario if command != Command::Report => {
            manifest.simulate = SimulateSection { scenario: Some(id), n: Some(n), grid: Some(grid_points) };
            manifest.reps = (command == Command::Simulate).then_some(reps);
        }
        DataSource::Files { train, test, label_column } => {
            manifest.data = DataSection {
                train: Some(train.clone()),
                test: test.clone(),
                label_column: Some(label_column.clone()),
                basis_order,
                basis_size,
                ..DataSection::default()
            };
        }
        DataSource::Dataset { name, file, classes } => {
            manifest.reps = (command == Command::Classify).then_some(reps);
            manifest.data = DataSection {
                dataset: Some(name.name().to_string()),
                data_file: Some(file.clone()),
                classes: (*name == DatasetName::Phoneme).then(|| classes.clone()),
                basis_order,
                basis_size,
                ..DataSection::default()
            };
        }
        DataSource::Scenario => {}
    }
    if command == Command::Classify {
        manifest.classify = ClassifySection { truncation, k };
    }
    if command == Command::Report {
        manifest = FileConfig {
            version: manifest.version,
            command: manifest.command,
            out: manifest.out,
            report: ReportSection { input: report_input.clone() },
            ..FileConfig::default()
        };
    }

    Ok(Settings {
        command,
        seed,
        out_explicit: common.out.is_some() || file.out.is_some(),
        out,
        methods,
        grid,
        jobs,
        reps,
        verbose: common.verbose,
        scenario: ScenarioSettings { id, n, grid: grid_points },
        source,
        basis_order,
        basis_size,
        truncation,
        k,
        report_input,
        manifest,
    })
}
