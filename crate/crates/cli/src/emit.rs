use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::Format;

/// A result in both shapes: rows for CSV, a document for JSON.
pub struct Output {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub json: Value,
    pub plot: Option<PlotSpec>,
    /// Files already written while computing.
    pub side_files: Vec<PathBuf>,
}

/// A gnuplot script drawing `y` against `x` from the CSV.
pub struct PlotSpec {
    pub x: &'static str,
    pub y: &'static str,
    pub log_x: bool,
    pub log_y: bool,
}

impl Output {
    pub fn new(header: Vec<&'static str>, rows: Vec<Vec<String>>, json: Value) -> Self {
        Output { header, rows, json, plot: None, side_files: Vec::new() }
    }

    pub fn with_plot(mut self, plot: PlotSpec) -> Self {
        self.plot = Some(plot);
        self
    }
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn write_csv(path: &Path, out: &Output) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&out.header)?;
    for row in &out.rows {
        w.write_record(row)?;
    }
    w.flush()
}

pub fn write_json(path: &Path, value: &Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn write_plot(csv_path: &Path, spec: &PlotSpec, header: &[&str]) -> io::Result<PathBuf> {
    let col = |name: &str| header.iter().position(|h| *h == name).map(|i| i + 1).unwrap_or(1);
    let data = csv_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut script = String::new();
    script.push_str("set datafile separator ','\nset key off\n");
    script.push_str(&format!("set xlabel '{}'\nset ylabel '{}'\n", spec.x, spec.y));
    if spec.log_x {
        script.push_str("set logscale x\n");
    }
    if spec.log_y {
        script.push_str("set logscale y\n");
    }
    script.push_str(&format!(
        "plot '{data}' every ::1 using {}:{} with linespoints\n",
        col(spec.x),
        col(spec.y)
    ));
    let path = csv_path.with_extension("gp");
    fs::write(&path, script)?;
    Ok(path)
}

/// Writes `out` in `format` at `path` and returns every file produced.
pub fn emit(path: &Path, format: Format, out: &Output, plot: bool) -> io::Result<Vec<PathBuf>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut files = out.side_files.clone();
    files.push(path.to_path_buf());
    match format {
        Format::Json => write_json(path, &out.json)?,
        Format::Csv => {
            write_csv(path, out)?;
            if let (true, Some(spec)) = (plot, &out.plot) {
                files.push(write_plot(path, spec, &out.header)?);
            }
        }
    }
    Ok(files)
}
