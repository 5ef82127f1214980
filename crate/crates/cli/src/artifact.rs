//! CSV tables, metadata sidecars and atomic writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::config::ExperimentConfig;
use crate::experiments::Output;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvArtifact {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvArtifact {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest decimal string that parses back to exactly `v`.
///
/// Plain notation in the usual range, exponent notation for very small or
/// large magnitudes so the digits stay short.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn int(v: impl Into<u64>) -> String {
    v.into().to_string()
}

pub fn flag(b: bool) -> String {
    b.to_string()
}

pub fn file_names(config: &ExperimentConfig) -> (String, String, String) {
    let stem = config.experiment.name();
    (format!("{stem}.csv"), format!("{stem}.meta.json"), format!("{stem}.svg"))
}

pub fn metadata(config: &ExperimentConfig, output: &Output, files: &[String]) -> serde_json::Value {
    serde_json::json!({
        "tool": "uqlab",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.experiment,
        "seed": config.seed,
        "config": config.echo,
        "files": files,
        "rows": output.csv.rows.len(),
        "details": output.details,
    })
}

/// Write every artifact of a run. All contents are staged as temp files in
/// the output directory first and renamed into place only once all of them
/// exist; a failure removes anything already renamed.
pub fn write_outputs(config: &ExperimentConfig, output: &Output, svg: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let (csv_name, meta_name, svg_name) = file_names(config);
    let mut files = vec![(csv_name, output.csv.to_bytes())];
    if let Some(s) = svg {
        files.push((svg_name, s.as_bytes().to_vec()));
    }
    let mut names: Vec<String> = files.iter().map(|f| f.0.clone()).collect();
    names.insert(1, meta_name.clone());
    let mut meta = serde_json::to_vec_pretty(&metadata(config, output, &names)).expect("metadata serializes");
    meta.push(b'\n');
    files.insert(1, (meta_name, meta));
    write_atomic(&config.output_dir, &files)
}

pub fn write_atomic(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, CliError> {
    let io = |what: &str, path: &Path, e: std::io::Error| CliError::Io(format!("{what} {}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(|e| io("cannot create", dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io("cannot stage a file in", dir, e))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| io("cannot write", tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut done: Vec<PathBuf> = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        if let Err(e) = tmp.persist(&target) {
            for p in &done {
                let _ = fs::remove_file(p);
            }
            return Err(io("cannot rename into", &target, e.error));
        }
        done.push(target);
    }
    Ok(done)
}
