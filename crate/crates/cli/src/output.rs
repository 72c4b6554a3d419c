//! Report serialization and atomic writes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ilab_core::Report;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::experiments::Check;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Status {
    Pass,
    Fail,
    FailedCertification,
}

#[derive(Debug, Serialize)]
pub struct Results {
    pub status: Status,
    pub checks: Vec<Check>,
    #[serde(flatten)]
    pub report: Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Document<'a> {
    pub schema_version: u32,
    pub experiment: &'a str,
    pub config: &'a ExperimentConfig,
    pub results: Results,
    pub pass: bool,
    pub runtime_ms: u128,
}

fn to_json(doc: &Document) -> anyhow::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(doc)?;
    out.push(b'\n');
    Ok(out)
}

/// Long format: `section,name,row,column,value`.
fn to_csv(doc: &Document) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "name", "row", "column", "value"])?;
    let r = &doc.results;
    for c in &r.checks {
        w.write_record(["check", &c.name, "0", "value", &c.value.to_string()])?;
        w.write_record(["check", &c.name, "0", "pass", &c.pass.to_string()])?;
    }
    for (k, m) in &r.report.scalars {
        w.write_record(["scalar", k, "0", "value", &m.value.to_string()])?;
        w.write_record(["scalar", k, "0", "tolerance", &m.tolerance.to_string()])?;
    }
    for (name, t) in &r.report.tables {
        for (i, row) in t.rows.iter().enumerate() {
            for (col, v) in t.columns.iter().zip(row) {
                w.write_record(["table", name, &i.to_string(), col, &v.to_string()])?;
            }
        }
    }
    w.write_record(["status", "pass", "0", "value", &doc.pass.to_string()])?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn render(doc: &Document, format: Format) -> anyhow::Result<Vec<u8>> {
    match format {
        Format::Json => to_json(doc),
        Format::Csv => to_csv(doc),
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| {
        io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name")
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
