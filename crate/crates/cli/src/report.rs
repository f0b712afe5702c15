//! Run reports: a key=value summary block and a CSV table.
//!
//! Floats in the CSV use `{:.16e}` (17 significant digits, `.` decimal) and
//! rows end in `\n`, so equal results give byte-identical files. Wall time
//! appears only in the summary.

use std::io::Write;

use crate::error::CliError;

/// One checked invariant with the tolerance it was held to.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub wall_time: f64,
    pub info: Vec<(String, String)>,
    pub verdicts: Vec<Verdict>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunReport {
    pub fn new(command: &str, config_digest: String, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest,
            seed,
            ..Default::default()
        }
    }

    pub fn info(&mut self, key: &str, value: impl ToString) {
        self.info.push((key.to_string(), value.to_string()));
    }

    pub fn verdict(&mut self, name: &str, passed: bool, value: f64, tolerance: impl ToString) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            passed,
            value,
            tolerance: tolerance.to_string(),
        });
    }

    pub fn header(&mut self, cols: &[&str]) {
        self.header = cols.iter().map(|c| c.to_string()).collect();
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &str| {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        };
        line("command", &self.command);
        line("config_sha256", &self.config_digest);
        line("seed", &self.seed.to_string());
        line("wall_time_s", &format!("{:.3}", self.wall_time));
        for (k, v) in &self.info {
            line(k, v);
        }
        for v in &self.verdicts {
            let state = if v.passed { "pass" } else { "fail" };
            line(&format!("verdict.{}", v.name), &format!("{state} value={} tolerance={}", num(v.value), v.tolerance));
        }
        line("status", if self.passed() { "pass" } else { "fail" });
        s
    }

    pub fn csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Config(format!("cannot format CSV: {e}"));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Config(format!("cannot format CSV: {e}")))
    }

    /// Writes the CSV to `out` and the summary to stdout, or both to stdout
    /// (summary first, then a blank line) when `out` is `None`.
    pub fn emit(&self, out: Option<&str>) -> Result<(), CliError> {
        let csv = self.csv()?;
        let mut stdout = std::io::stdout().lock();
        let io = |e: std::io::Error| CliError::Config(format!("cannot write output: {e}"));
        stdout.write_all(self.summary().as_bytes()).map_err(io)?;
        match out {
            Some(path) => std::fs::write(path, &csv).map_err(|e| CliError::Config(format!("cannot write {path}: {e}")))?,
            None => {
                stdout.write_all(b"\n").map_err(io)?;
                stdout.write_all(&csv).map_err(io)?;
            }
        }
        Ok(())
    }
}
