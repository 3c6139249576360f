use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::ParameterVector;
use crate::sampling::TrainingSet;

pub const CONFIG_FILE: &str = "config.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const GRADIENTS_FILE: &str = "gradients.csv";
pub const FIELD_FILE: &str = "gradient_field.json";
pub const MSRE_FILE: &str = "msre_curves.csv";
pub const BASIS_FILE: &str = "basis.json";
pub const TRACES_FILE: &str = "traces.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MSRE_PLOT_FILE: &str = "msre_curves.svg";
pub const TRACE_PLOT_FILE: &str = "objective_history.svg";

/// Shortest decimal that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn require(dir: &Path, files: &[&str]) -> Result<()> {
    let missing: Vec<String> =
        files.iter().filter(|f| !dir.join(f).is_file()).map(|f| dir.join(f).display().to_string()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| artifact_error(path, e))
}

fn artifact_error(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::Artifact { file: path.display().to_string(), reason: reason.to_string() }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => artifact_error(path, format!("{other:?}")),
    }
}

pub struct CsvOut {
    path: std::path::PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = BufWriter::new(File::create(path)?);
        let writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        let mut out = Self { path: path.to_path_buf(), writer };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        self.writer.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(self) -> Result<()> {
        let mut inner = self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        inner.flush()?;
        Ok(())
    }
}

/// Header plus rows of raw fields.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| artifact_error(path, format!("row {line}: cannot parse '{field}'")))
}

fn numbered_header(first: &[&str], prefix: &str, d: usize) -> Vec<String> {
    first.iter().map(|s| s.to_string()).chain((1..=d).map(|i| format!("{prefix}_{i}"))).collect()
}

pub fn write_samples(path: &Path, set: &TrainingSet) -> Result<()> {
    let d = set.points.first().map_or(0, |p| p.dim());
    let mut out = CsvOut::create(path, &numbered_header(&["n", "source_index"], "u", d))?;
    for (n, (u, source)) in set.points.iter().zip(&set.source_indices).enumerate() {
        let mut fields = vec![(n + 1).to_string(), source.to_string()];
        fields.extend(u.iter().map(|&x| fmt_f64(x)));
        out.row(&fields)?;
    }
    out.finish()
}

pub fn read_samples(path: &Path, d: usize, label: &str) -> Result<TrainingSet> {
    let (header, rows) = read_csv(path)?;
    if header.len() != d + 2 {
        return Err(artifact_error(path, format!("expected {} columns, found {}", d + 2, header.len())));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut source_indices = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        source_indices.push(parse_field(path, line + 1, &row[1])?);
        let u = row[2..].iter().map(|f| parse_field(path, line + 1, f)).collect::<Result<Vec<f64>>>()?;
        points.push(ParameterVector::new(u)?);
    }
    Ok(TrainingSet { points, source_indices, problem_label: label.to_string() })
}

pub fn write_gradients(path: &Path, gradients: &[Vec<f64>]) -> Result<()> {
    let d = gradients.first().map_or(0, Vec::len);
    let mut out = CsvOut::create(path, &numbered_header(&["n"], "g", d))?;
    for (n, g) in gradients.iter().enumerate() {
        let mut fields = vec![(n + 1).to_string()];
        fields.extend(g.iter().map(|&x| fmt_f64(x)));
        out.row(&fields)?;
    }
    out.finish()
}

pub fn read_gradients(path: &Path, d: usize) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    if header.len() != d + 1 {
        return Err(artifact_error(path, format!("expected {} columns, found {}", d + 1, header.len())));
    }
    rows.iter()
        .enumerate()
        .map(|(line, row)| row[1..].iter().map(|f| parse_field(path, line + 1, f)).collect())
        .collect()
}
