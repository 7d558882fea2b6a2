//! Output directory with CSV/JSON writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliResult;

pub const MANIFEST: &str = "manifest.json";

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn track(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.path(name)
    }

    pub fn write_csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator,
        R::Item: AsRef<[u8]>,
    {
        let path = self.track(name);
        let mut w = csv::Writer::from_path(path).map_err(fedsgt_core::Error::from)?;
        w.write_record(header).map_err(fedsgt_core::Error::from)?;
        for row in rows {
            w.write_record(row).map_err(fedsgt_core::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.track(name);
        let text = serde_json::to_string_pretty(value).map_err(fedsgt_core::Error::from)?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.track(name);
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Writes `manifest.json` listing the command, resolved config and every
    /// file written so far.
    pub fn write_manifest(&mut self, command: &str, config: Value, extra: Value) -> CliResult<()> {
        let manifest = json!({
            "tool": "fedsgt",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": config,
            "details": extra,
            "outputs": self.files,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(fedsgt_core::Error::from)?;
        fs::write(self.path(MANIFEST), text + "\n")?;
        Ok(())
    }
}

/// Shortest round-trip text for a float.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_text<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn opt_utility(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.4}"))
}
