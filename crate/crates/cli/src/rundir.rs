//! Run directories: plain output files plus a `manifest.json` listing them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub struct RunDir {
    path: PathBuf,
    files: Vec<(String, usize)>,
}

impl RunDir {
    pub fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("cannot create run directory {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let target = self.path.join(name);
        fs::write(&target, contents).with_context(|| format!("cannot write {}", target.display()))?;
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), contents.len()));
        Ok(())
    }

    /// Writes `manifest.json`. Content depends only on inputs and results,
    /// never on the clock.
    pub fn finish(mut self, mut manifest: Value) -> Result<PathBuf> {
        self.files.sort();
        let files: Vec<Value> = self.files.iter().map(|(n, b)| json!({ "name": n, "bytes": b })).collect();
        manifest["files"] = Value::Array(files);
        manifest["tool"] = json!(concat!("ibc ", env!("CARGO_PKG_VERSION")));
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let target = self.path.join("manifest.json");
        fs::write(&target, text).with_context(|| format!("cannot write {}", target.display()))?;
        Ok(self.path)
    }
}
