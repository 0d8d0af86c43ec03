//! Output directory of one run: CSV files written by the main thread and a
//! manifest listing every file with its SHA-256.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
/// First field of the row appended to a CSV when a run fails.
pub const FAILED_MARKER: &str = "FAILED";

pub struct CsvSink {
    name: String,
    columns: usize,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(io::Error::from)
    }

    /// Marker row: `FAILED`, the reason, then empty fields.
    pub fn failed(&mut self, reason: &str) -> io::Result<()> {
        let mut fields = vec![FAILED_MARKER.to_string(), reason.replace('\n', " ")];
        fields.resize(self.columns.max(2), String::new());
        self.row(&fields)
    }
}

#[derive(Serialize)]
struct FileEntry {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: serde_json::Map<String, serde_json::Value>,
    files: Vec<FileEntry>,
    wall_time_seconds: f64,
    status: &'a str,
    exit_code: i32,
}

pub struct RunDir {
    dir: PathBuf,
    subcommand: String,
    started: Instant,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `<out>/<subcommand>/`, removing a manifest left by an
    /// earlier run so a crash never leaves a stale one behind.
    pub fn create(out: &Path, subcommand: &str) -> io::Result<Self> {
        let dir = out.join(subcommand);
        fs::create_dir_all(&dir)?;
        match fs::remove_file(dir.join(MANIFEST)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
            _ => {}
        }
        Ok(Self {
            dir,
            subcommand: subcommand.to_string(),
            started: Instant::now(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn csv(&mut self, name: &str, header: &[&str]) -> io::Result<CsvSink> {
        let file = File::create(self.dir.join(name))?;
        let mut writer = csv::WriterBuilder::new().flexible(false).from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(io::Error::from)?;
        self.files.push(name.to_string());
        Ok(CsvSink {
            name: name.to_string(),
            columns: header.len(),
            writer,
        })
    }

    pub fn close(&self, mut sink: CsvSink) -> io::Result<()> {
        sink.writer.flush()?;
        debug_assert!(self.files.contains(&sink.name));
        Ok(())
    }

    pub fn write_manifest(&self, config: Vec<(&'static str, serde_json::Value)>, status: &str, exit_code: i32) -> io::Result<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let data = fs::read(self.dir.join(name))?;
            files.push(FileEntry {
                name: name.clone(),
                bytes: data.len() as u64,
                sha256: hex(&Sha256::digest(&data)),
            });
        }
        let manifest = Manifest {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: &self.subcommand,
            config: config.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            files,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            status,
            exit_code,
        };
        let path = self.dir.join(MANIFEST);
        let mut out = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut out, &manifest)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Shortest representation that round-trips, so identical values give
/// identical bytes.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}
