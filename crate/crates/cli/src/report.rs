use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Shortest representation that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Key-value report with one PASS/FAIL line per check.
pub struct Report {
    command: &'static str,
    entries: Vec<(String, String)>,
    checks: Vec<(String, bool, String)>,
}

impl Report {
    pub fn new(command: &'static str) -> Self {
        Report { command, entries: Vec::new(), checks: Vec::new() }
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.kv(key, num(value));
    }

    pub fn opt(&mut self, key: &str, value: Option<f64>) {
        match value {
            Some(v) => self.num(key, v),
            None => self.kv(key, "none"),
        }
    }

    /// Pass iff `value ≤ limit`.
    pub fn check_le(&mut self, name: &str, value: f64, limit: f64) {
        self.check(name, value <= limit, format!("value = {} limit = {}", num(value), num(limit)));
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Display) {
        self.checks.push((name.to_string(), pass, detail.to_string()));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    pub fn render(&self) -> String {
        let mut s = format!("# fbms {}\n", self.command);
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        for (name, pass, detail) in &self.checks {
            s.push_str(&format!("{} {name} ({detail})\n", if *pass { "PASS" } else { "FAIL" }));
        }
        s
    }
}

/// Optional artifact directory.
pub struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
        }
        Ok(Output { dir: dir.map(Path::to_path_buf) })
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        if let Some(p) = self.path(name) {
            fs::write(&p, bytes).with_context(|| format!("cannot write {}", p.display()))?;
        }
        Ok(())
    }
}

/// CSV text from a header and rows of numbers.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}
