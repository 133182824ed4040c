//! Output files. Every CSV starts with `#` lines naming the control file
//! and library version; JSON is pretty-printed with serde_json's shortest
//! round-trip float formatting, so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Buffers files in memory and writes them in one go.
#[derive(Debug)]
pub struct Writer {
    dir: PathBuf,
    header: String,
    files: Vec<(String, String)>,
}

impl Writer {
    pub fn new(dir: &Path, control: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            header: format!("# dcm {VERSION} control={}", control.display()),
            files: Vec::new(),
        }
    }

    /// A CSV with the standard header, optional extra `#` lines, then `columns` and `rows`.
    pub fn csv(&mut self, name: &str, extra: &[String], columns: &[&str], rows: &[Vec<String>]) {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header);
        for e in extra {
            let _ = writeln!(out, "# {e}");
        }
        let _ = writeln!(out, "{}", columns.join(","));
        for r in rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        self.files.push((name.to_string(), out));
    }

    /// A CSV whose body (column line included) is already rendered.
    pub fn csv_body(&mut self, name: &str, body: &str) {
        self.files.push((name.to_string(), format!("{}\n{body}", self.header)));
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::config("output", format!("cannot serialize {name}: {e}")))?;
        text.push('\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn raw(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    /// Writes everything and returns the paths.
    pub fn finish(self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut paths = Vec::with_capacity(self.files.len());
        for (name, content) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `IF|DA` style flag list.
pub fn flag_list(flags: &[dcm_core::bootstrap::Instability]) -> String {
    flags.iter().map(|f| f.code()).collect::<Vec<_>>().join("|")
}
