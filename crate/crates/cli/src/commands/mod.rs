pub mod channel_info;
pub mod estimate;
pub mod plan;
pub mod seminorm;
pub mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::failure::ConfigError;

/// Flags shared by every subcommand.
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub shadows_out: Option<PathBuf>,
}

impl Common {
    pub fn config_path(&self) -> Result<&Path> {
        self.config
            .as_deref()
            .ok_or_else(|| ConfigError("--config PATH is required".into()).into())
    }

    /// `--out`, created if missing.
    pub fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(self.out.as_deref())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Prints `value` as JSON on stdout and, with `--out`, also writes it to `name` there.
pub fn emit<T: Serialize>(common: &Common, name: &str, value: &T) -> Result<()> {
    let text = to_json(value)?;
    if let Some(dir) = common.out_dir()? {
        write_file(&dir.join(name), &text)?;
    }
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}
