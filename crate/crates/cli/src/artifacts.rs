use std::fs;
use std::path::Path;

use otod_core::{Error, Result};
use serde::Serialize;

/// Version stamped into every output artifact.
pub const FORMAT_VERSION: u32 = 1;

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    write_text(path, &(text + "\n"))
}

/// `#`-prefixed provenance lines placed above CSV headers.
pub fn csv_header<T: Serialize>(config: &T) -> String {
    format!(
        "# format_version: {FORMAT_VERSION}\n# config: {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}
