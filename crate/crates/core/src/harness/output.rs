use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::report::{Status, VerificationReport, SCHEMA_VERSION};

/// Everything one subcommand produced: its reports (sorted by id) and the
/// files it wrote.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub status: Status,
    pub reports: Vec<VerificationReport>,
    pub artifacts: Vec<String>,
}

impl Summary {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: command.into(), seed, status: Status::Pass, reports: Vec::new(), artifacts: Vec::new() }
    }

    pub fn add(&mut self, report: VerificationReport) {
        self.status = self.status.and(report.status);
        self.reports.push(report);
    }

    pub fn finish(mut self) -> Self {
        self.reports.sort_by(|a, b| a.id.cmp(&b.id));
        self.artifacts.sort();
        self
    }

    /// One line per report.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.reports {
            s.push_str(&format!(
                "{:<28} {:<12} events={:<5} worst_slack={}\n",
                r.id,
                format!("{:?}", r.status).to_uppercase(),
                r.events,
                crate::numeric::fmt_ext(r.worst_slack)
            ));
        }
        s.push_str(&format!("{}: {:?}\n", self.command, self.status));
        s
    }
}

/// Output directory writer that records artifact names.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.root.join(name))?))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.artifacts` plus `<command>.json`.
    pub fn finish(mut self, mut summary: Summary) -> Result<Summary> {
        let name = format!("{}.json", summary.command);
        self.written.push(name.clone());
        summary.artifacts = self.written.clone();
        let summary = summary.finish();
        let mut w = BufWriter::new(File::create(self.root.join(&name))?);
        serde_json::to_writer_pretty(&mut w, &summary)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(summary)
    }
}
