//! Stage directories are written under a temporary name and renamed into
//! place, so a failing stage leaves no partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{internal, CliError};

pub struct StageWriter {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl StageWriter {
    pub fn new(out: &Path, stage: &str) -> Result<StageWriter, CliError> {
        fs::create_dir_all(out).map_err(|e| internal(format!("{}: {e}", out.display())))?;
        let tmp = out.join(format!(".{stage}.tmp"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(internal)?;
        }
        fs::create_dir(&tmp).map_err(|e| internal(format!("{}: {e}", tmp.display())))?;
        Ok(StageWriter {
            tmp,
            dest: out.join(stage),
            committed: false,
        })
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let p = self.tmp.join(name);
        fs::write(&p, contents).map_err(|e| internal(format!("{}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(internal)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let mut s = String::new();
        for item in items {
            s.push_str(&serde_json::to_string(&item).map_err(internal)?);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn write_lines(&self, name: &str, lines: impl IntoIterator<Item = String>) -> Result<(), CliError> {
        let mut s = String::new();
        for l in lines {
            s.push_str(&l);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(internal)?;
        }
        let bytes = w.into_inner().map_err(internal)?;
        self.write(name, &bytes)
    }

    pub fn write_table<R: IntoIterator<Item = String>>(
        &self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = R>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(internal)?;
        for r in rows {
            w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(internal)?;
        }
        let bytes = w.into_inner().map_err(internal)?;
        self.write(name, &bytes)
    }

    /// Swaps the finished directory into place.
    pub fn commit(mut self) -> Result<PathBuf, CliError> {
        let old = self.dest.with_file_name(format!(
            ".{}.old",
            self.dest.file_name().unwrap_or_default().to_string_lossy()
        ));
        if old.exists() {
            fs::remove_dir_all(&old).map_err(internal)?;
        }
        if self.dest.exists() {
            fs::rename(&self.dest, &old).map_err(internal)?;
        }
        fs::rename(&self.tmp, &self.dest).map_err(internal)?;
        if old.exists() {
            fs::remove_dir_all(&old).map_err(internal)?;
        }
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for StageWriter {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

/// A prerequisite artifact; missing files map to `MissingPrerequisite`.
pub fn require(path: PathBuf, stage: &'static str, run_first: &'static str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingPrerequisite {
            stage,
            missing: path.display().to_string(),
            run_first,
        })
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| internal(format!("{}: {e}", path.display())))
}
