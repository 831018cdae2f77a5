//! File formats: sample CSVs, cause-effect pair corpora, and dataset bundles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::dag::Dag;
use super::samples::SampleMatrix;
use super::Effect;
use crate::error::{Error, Result};
use crate::Real;

pub const DATA_FILE: &str = "data.csv";
pub const DAG_FILE: &str = "dag.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.csv";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Parses comma-separated text with a header row into a sample matrix.
pub fn parse_csv(text: &str) -> Result<SampleMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Structure(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::Structure("empty file".into()));
    }
    let d = names.len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Structure(format!(
                "row {} has {len} fields, header has {expected_len}",
                r + 1
            )),
            _ => Error::Structure(e.to_string()),
        })?;
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: r + 1,
                column: names[c].clone(),
                message: format!("`{cell}` is not a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Structure("no data rows".into()));
    }
    let data = Array2::from_shape_vec((rows, d), values).map_err(|e| Error::Structure(e.to_string()))?;
    SampleMatrix::new(data, names)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<SampleMatrix<f64>> {
    parse_csv(&read_to_string(path.as_ref())?)
}

pub fn samples_to_csv<T: Real>(samples: &SampleMatrix<T>) -> String {
    let mut out = samples.names().join(",");
    out.push('\n');
    for row in samples.data().rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv<T: Real>(path: impl AsRef<Path>, samples: &SampleMatrix<T>) -> Result<()> {
    write_string(path.as_ref(), &samples_to_csv(samples))
}

/// Parses whitespace-separated columns without a header.
pub fn parse_whitespace_columns(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (r, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Structure(format!(
                    "line {} has {} fields, expected {w}",
                    r + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        for (c, f) in fields.iter().enumerate() {
            values.push(f.parse::<f64>().map_err(|_| Error::Parse {
                row: r + 1,
                column: (c + 1).to_string(),
                message: format!("`{f}` is not a number"),
            })?);
        }
        rows += 1;
    }
    let w = width.ok_or_else(|| Error::Structure("empty pair file".into()))?;
    Array2::from_shape_vec((rows, w), values).map_err(|e| Error::Structure(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct CausePair {
    pub id: String,
    pub samples: SampleMatrix<f64>,
    pub truth: Effect,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedPair {
    pub id: String,
    pub reason: String,
}

/// A cause-effect pair corpus plus a report of entries that were not loaded.
#[derive(Debug, Clone, Default)]
pub struct PairDataset {
    pub pairs: Vec<CausePair>,
    pub skipped: Vec<SkippedPair>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Loads a pair corpus from a manifest (`file,truth[,weight]`) or a directory holding
/// `manifest.csv`. Pair files are resolved relative to the manifest's directory.
pub fn load_pairs(path: impl AsRef<Path>, exclude: &[String]) -> Result<PairDataset> {
    let path = path.as_ref();
    let manifest: PathBuf = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    if !manifest.is_file() {
        return Err(Error::Structure(format!("manifest not found at {}", manifest.display())));
    }
    let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = read_to_string(&manifest)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Structure(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let file_col = col("file").ok_or_else(|| Error::Structure("manifest lacks a `file` column".into()))?;
    let truth_col = col("truth").ok_or_else(|| Error::Structure("manifest lacks a `truth` column".into()))?;
    let weight_col = col("weight");

    let mut out = PairDataset::default();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Structure(e.to_string()))?;
        let field = |c: usize| record.get(c).unwrap_or("").to_string();
        let file = field(file_col);
        let truth = match field(truth_col).as_str() {
            "1" | "+1" => Effect::Y,
            "-1" => Effect::X,
            other => {
                return Err(Error::Parse {
                    row: r + 1,
                    column: "truth".into(),
                    message: format!("expected 1 or -1, found `{other}`"),
                })
            }
        };
        let weight = match weight_col.map(field) {
            Some(w) if !w.is_empty() => w.parse::<f64>().ok().filter(|w| *w >= 0.0).ok_or_else(|| Error::Parse {
                row: r + 1,
                column: "weight".into(),
                message: format!("`{w}` is not a non-negative number"),
            })?,
            _ => 1.0,
        };
        let id = Path::new(&file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.clone());
        if exclude.iter().any(|e| *e == id || *e == file) {
            out.skipped.push(SkippedPair { id, reason: "excluded".into() });
            continue;
        }
        let loaded = fs::read_to_string(root.join(&file))
            .map_err(|e| e.to_string())
            .and_then(|t| parse_whitespace_columns(&t).map_err(|e| e.to_string()));
        let data = match loaded {
            Ok(d) => d,
            Err(reason) => {
                log_skip(&id, &reason);
                out.skipped.push(SkippedPair { id, reason });
                continue;
            }
        };
        if data.ncols() != 2 {
            let reason = format!("{} columns, expected 2", data.ncols());
            log_skip(&id, &reason);
            out.skipped.push(SkippedPair { id, reason });
            continue;
        }
        match SampleMatrix::with_default_names(data) {
            Ok(samples) => out.pairs.push(CausePair { id, samples, truth, weight }),
            Err(e) => out.skipped.push(SkippedPair { id, reason: e.to_string() }),
        }
    }
    Ok(out)
}

fn log_skip(id: &str, reason: &str) {
    if std::env::var_os("QPE_QUIET").is_none() {
        eprintln!("warning: skipping pair {id}: {reason}");
    }
}

pub fn dag_to_csv(dag: &Dag) -> String {
    let mut out = String::new();
    for row in dag.adjacency_rows() {
        let cells: Vec<&str> = row.iter().map(|&e| if e { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_dag_csv(text: &str) -> Result<Dag> {
    let mut rows = Vec::new();
    for (r, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| match cell.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse {
                    row: r + 1,
                    column: (c + 1).to_string(),
                    message: format!("adjacency entries must be 0 or 1, found `{other}`"),
                }),
            })
            .collect::<Result<Vec<bool>>>()?;
        rows.push(row);
    }
    Dag::from_adjacency(&rows)
}

/// A dataset persisted as `data.csv`, optional `dag.csv`, and a `key=value` metadata file.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub samples: SampleMatrix<f64>,
    pub dag: Option<Dag>,
    pub meta: Vec<(String, String)>,
}

pub fn write_bundle(
    dir: impl AsRef<Path>,
    samples: &SampleMatrix<f64>,
    dag: Option<&Dag>,
    meta: &[(&str, String)],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(dir.join(DATA_FILE), samples)?;
    if let Some(dag) = dag {
        write_string(&dir.join(DAG_FILE), &dag_to_csv(dag))?;
    }
    let mut text = String::new();
    for (k, v) in meta {
        let _ = writeln!(text, "{k}={v}");
    }
    write_string(&dir.join(CONFIG_FILE), &text)
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Bundle> {
    let dir = dir.as_ref();
    let samples = load_csv(dir.join(DATA_FILE))?;
    let dag_path = dir.join(DAG_FILE);
    let dag = if dag_path.is_file() {
        let dag = parse_dag_csv(&read_to_string(&dag_path)?)?;
        if dag.d() != samples.d() {
            return Err(Error::DimensionMismatch {
                expected: samples.d(),
                found: dag.d(),
            });
        }
        Some(dag)
    } else {
        None
    };
    let cfg_path = dir.join(CONFIG_FILE);
    let meta = if cfg_path.is_file() {
        read_to_string(&cfg_path)?
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    } else {
        Vec::new()
    };
    Ok(Bundle { samples, dag, meta })
}
