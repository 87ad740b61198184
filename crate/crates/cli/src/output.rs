//! Result files: CSV for machines, aligned text tables for humans.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use fdmaha_core::experiment::{ExperimentResults, MeanSd};
use fdmaha_core::{DistanceKind, Method};
use serde::{Deserialize, Serialize};

/// One method's summary: the row format of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub distance: Option<DistanceKind>,
    pub replications: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub truncation_mean: Option<f64>,
    pub truncation_sd: Option<f64>,
    pub k_mean: Option<f64>,
    pub k_sd: Option<f64>,
}

pub fn summary_rows(results: &ExperimentResults) -> Vec<SummaryRow> {
    let split = |m: Option<MeanSd>| (m.map(|v| v.mean), m.map(|v| v.sd));
    results
        .summaries
        .iter()
        .map(|s| {
            let (truncation_mean, truncation_sd) = split(s.truncation);
            let (k_mean, k_sd) = split(s.k_neighbors);
            SummaryRow {
                method: s.spec.method,
                distance: s.spec.distance,
                replications: s.replications,
                accuracy_mean: s.accuracy.mean,
                accuracy_sd: s.accuracy.sd,
                truncation_mean,
                truncation_sd,
                k_mean,
                k_sd,
            }
        })
        .collect()
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn summary_csv(rows: &[SummaryRow]) -> io::Result<Vec<u8>> {
    csv_bytes(rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let rows = rdr
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| format!("{}: row {}: {e}", path.display(), i + 2)))
        .collect::<Result<Vec<SummaryRow>, String>>()?;
    if rows.is_empty() {
        return Err(format!("{}: no result rows", path.display()));
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct ReplicationRow {
    replication: usize,
    attempt: usize,
    method: Method,
    distance: Option<DistanceKind>,
    accuracy: f64,
    truncation: Option<usize>,
    k: Option<usize>,
    cv_accuracy: Option<f64>,
}

/// One row per replication and method.
pub fn replications_csv(results: &ExperimentResults) -> io::Result<Vec<u8>> {
    let rows: Vec<ReplicationRow> = results
        .replications
        .iter()
        .flat_map(|r| {
            r.methods.iter().map(move |m| ReplicationRow {
                replication: r.replication,
                attempt: r.attempt,
                method: m.spec.method,
                distance: m.spec.distance,
                accuracy: m.accuracy,
                truncation: m.hyper.truncation,
                k: m.hyper.k_neighbors,
                cv_accuracy: (!m.cv_accuracy.is_nan()).then_some(m.cv_accuracy),
            })
        })
        .collect();
    csv_bytes(&rows)
}

pub fn write_csv<T: Serialize>(rows: &[T]) -> io::Result<Vec<u8>> {
    csv_bytes(rows)
}

/// Render rows of cells with the first column left-aligned and the rest right-aligned.
pub fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (j, cell) in r.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[j]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn row_label(m: Method) -> &'static str {
    match m {
        Method::Knn => "kNN",
        Method::Centroid => "Centroid",
        Method::Flbcr => "FLBCR",
        Method::Fqbcr => "FQBCR",
        Method::LbcrCoef => "LBCR Coef.",
        Method::QbcrCoef => "QBCR Coef.",
    }
}

const ROW_ORDER: [Method; 6] =
    [Method::Knn, Method::Centroid, Method::Flbcr, Method::Fqbcr, Method::LbcrCoef, Method::QbcrCoef];

pub fn accuracy_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.4} ({sd:.4})")
}

fn component_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.2} ({sd:.2})")
}

/// Methods by distance columns, plus a final `-` column for methods without one.
fn grid_table(
    rows: &[SummaryRow],
    columns: &[DistanceKind],
    cell: impl Fn(&SummaryRow) -> Option<String>,
) -> Option<String> {
    let mut header = vec!["Method".to_string()];
    header.extend(columns.iter().map(|d| d.name().to_string()));
    header.push("-".into());
    let mut table = vec![header];
    for m in ROW_ORDER {
        let mine: Vec<&SummaryRow> = rows.iter().filter(|r| r.method == m).collect();
        let mut line = vec![row_label(m).to_string()];
        let mut any = false;
        for &d in columns {
            let c = mine.iter().find(|r| r.distance == Some(d)).and_then(|r| cell(r));
            any |= c.is_some();
            line.push(c.unwrap_or_else(|| "-".into()));
        }
        let plain = mine.iter().find(|r| r.distance.is_none()).and_then(|r| cell(r));
        any |= plain.is_some();
        line.push(plain.unwrap_or_else(|| "-".into()));
        if any {
            table.push(line);
        }
    }
    (table.len() > 1).then(|| aligned(&table))
}

/// Proportion of correct classification, mean (sd), in the paper's layout.
pub fn render_accuracy(rows: &[SummaryRow]) -> String {
    let reps = rows.iter().map(|r| r.replications).max().unwrap_or(0);
    let body = grid_table(rows, &DistanceKind::ALL, |r| Some(accuracy_cell(r.accuracy_mean, r.accuracy_sd)))
        .unwrap_or_default();
    format!("Proportion of correct classification, mean (sd) over {reps} replications\n\n{body}")
}

/// Chosen number of components, mean (sd), for the truncated methods.
pub fn render_components(rows: &[SummaryRow]) -> Option<String> {
    let columns: Vec<DistanceKind> = DistanceKind::ALL.into_iter().filter(|d| d.uses_truncation()).collect();
    let body = grid_table(rows, &columns, |r| Some(component_cell(r.truncation_mean?, r.truncation_sd?)))?;
    Some(format!("Number of components chosen by cross-validation, mean (sd)\n\n{body}"))
}

/// Files produced by one command, written together at the end.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Write every file into `dir`; on failure remove what was written.
    pub fn write(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = std::fs::write(&path, bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                let _ = std::fs::remove_file(&path);
                if created_dir {
                    let _ = std::fs::remove_dir(dir);
                }
                return Err(io::Error::new(e.kind(), format!("{}: {e}", path.display())));
            }
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, distance: Option<DistanceKind>, acc: f64, t: Option<f64>) -> SummaryRow {
        SummaryRow {
            method,
            distance,
            replications: 100,
            accuracy_mean: acc,
            accuracy_sd: 0.0444,
            truncation_mean: t,
            truncation_sd: t.map(|_| 2.9),
            k_mean: None,
            k_sd: None,
        }
    }

    #[test]
    fn paper_layout() {
        let rows = vec![
            row(Method::Knn, Some(DistanceKind::FmC), 0.8314, Some(7.48)),
            row(Method::Knn, Some(DistanceKind::L2), 0.7655, None),
            row(Method::Flbcr, None, 0.8326, Some(7.45)),
        ];
        let text = render_accuracy(&rows);
        let knn = text.lines().find(|l| l.starts_with("kNN")).unwrap();
        assert!(knn.contains("0.8314 (0.0444)"));
        assert!(knn.contains("0.7655 (0.0444)"));
        assert!(!text.contains("Centroid"));
        let flbcr = text.lines().find(|l| l.starts_with("FLBCR")).unwrap();
        assert!(flbcr.trim_end().ends_with("0.8326 (0.0444)"));
        let comps = render_components(&rows).unwrap();
        assert!(comps.contains("7.48 (2.90)"));
        assert!(!comps.contains("L2"));
    }

    #[test]
    fn summary_csv_round_trip() {
        let rows = vec![row(Method::Centroid, Some(DistanceKind::Dh), 0.8, Some(6.5)), row(Method::LbcrCoef, None, 0.82, None)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        std::fs::write(&path, summary_csv(&rows).unwrap()).unwrap();
        assert_eq!(read_summary_csv(&path).unwrap(), rows);
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let mut a = Artifacts::default();
        a.add("a.txt", "x");
        a.add("missing/b.txt", "y");
        assert!(a.write(&out).is_err());
        assert!(!out.exists());
    }
}
