//! CSV emission and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

/// Bumped whenever a header row changes.
pub const SCHEMA_VERSION: u32 = 1;

/// An in-memory CSV file: a provenance comment line, a header and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvFile {
    pub name: String,
    pub schema: String,
    pub provenance: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvFile {
    pub fn new(name: &str, schema: &str, header: &[&str]) -> Self {
        CsvFile {
            name: name.to_string(),
            schema: schema.to_string(),
            provenance: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    /// Column index by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Serializes to bytes. The first line is a `#` comment naming the schema,
    /// the manifest and the provenance values.
    pub fn render(&self, manifest: &str) -> Vec<u8> {
        let mut comment = format!("# schema={}/v{SCHEMA_VERSION}; manifest={manifest}", self.schema);
        for (k, v) in &self.provenance {
            comment.push_str(&format!("; {k}={v}"));
        }
        comment.push_str("\r\n");
        let mut out = comment.into_bytes();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        out.extend(w.into_inner().expect("in-memory flush"));
        out
    }
}

/// Formats a float with the shortest round-trip representation.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub code_version: String,
    pub wall_time_secs: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

/// Writes every CSV plus the manifest into `dir`, returning the paths written.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    files: &[CsvFile],
    elapsed: Duration,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let manifest_name = RunManifest::file_name(command);
    let mut written = Vec::new();
    for f in files {
        let path = dir.join(&f.name);
        fs::write(&path, f.render(&manifest_name))?;
        written.push(path);
    }
    let manifest = RunManifest {
        command: command.to_string(),
        command_line: std::env::args().collect(),
        config,
        seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: elapsed.as_secs_f64(),
        outputs: files.iter().map(|f| f.name.clone()).collect(),
    };
    let path = dir.join(&manifest_name);
    fs::write(&path, serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?)?;
    written.push(path);
    Ok(written)
}
