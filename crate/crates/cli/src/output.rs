//! Output plumbing: atomic file writes and the numeric format shared by
//! every table (9 significant digits, LF line endings).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::error::{runtime, validation, CliResult};

/// Format a float with 9 significant digits. Tables use this for every
/// numeric cell so reruns diff cleanly.
pub fn num(x: f64) -> String {
    format!("{x:.8e}")
}

/// Optional cell: empty when the value is undefined for the row.
pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root)
            .map_err(|e| validation(format!("out {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    /// Write `content` to `name` under the output directory via a temp file
    /// and rename, so readers never observe a half-written table.
    pub fn write(&self, name: &str, content: &str) -> CliResult<PathBuf> {
        if name.contains(['/', '\\']) {
            return Err(validation(format!(
                "output name {name:?} must be a bare file name (use --out for the directory)"
            )));
        }
        let path = self.root.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root)
            .with_context(|| format!("creating temp file in {}", self.root.display()))
            .map_err(runtime)?;
        tmp.write_all(content.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
        tmp.persist(&path)
            .with_context(|| format!("renaming into {}", path.display()))
            .map_err(runtime)?;
        Ok(path)
    }
}

/// Reject labels that would break the one-row-per-line CSV contract.
pub fn check_label(label: &str) -> CliResult<()> {
    if label.is_empty() || label.contains([',', '\n', '\r']) {
        return Err(validation(format!(
            "label {label:?} must be non-empty and free of commas and line breaks"
        )));
    }
    Ok(())
}
