//! Config files are TOML with one table per command, e.g. `[refine]`.
//! Precedence: built-in defaults, then the file's table, then flags.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const RESOLVED: &str = "config.toml";

/// Reads the `section` table of `path`; missing file argument or table yields defaults.
pub fn load_section<T: DeserializeOwned + Default>(path: Option<&Path>, section: &str) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    match table.remove(section) {
        Some(value) => value
            .try_into()
            .with_context(|| format!("invalid [{section}] table in {}", path.display())),
        None => Ok(T::default()),
    }
}

/// Writes the fully resolved config so the run can be repeated from it alone.
pub fn write_resolved<T: Serialize>(dir: &Path, section: &str, cfg: &T) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert(section.to_string(), toml::Value::try_from(cfg).context("serializing config")?);
    let text = toml::to_string(&table).context("serializing config")?;
    let path = dir.join(RESOLVED);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
