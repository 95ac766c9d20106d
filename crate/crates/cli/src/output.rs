//! Writing data files and their metadata sidecar.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    timestamp: String,
    workers: usize,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    run: RunInfo<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    totals: Option<&'a [u64]>,
}

/// `results.csv` → `results.meta.toml`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.toml")
}

/// `policy.toml` → `policy.<suffix>`.
pub fn companion_path(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    fs::write(path, contents).map_err(wrap)
}

/// Writes `contents` to `out`, or to stdout when no path is given.
pub fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, contents),
        None => io::stdout()
            .lock()
            .write_all(contents.as_bytes())
            .map_err(|source| CliError::Write {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

/// Writes the sidecar describing how the data files next to `out` were produced.
pub fn write_metadata(
    out: &Path,
    command: &str,
    workers: usize,
    config: Option<&ExperimentConfig>,
    totals: Option<&[u64]>,
    outputs: &[PathBuf],
) -> Result<()> {
    let meta = Metadata {
        run: RunInfo {
            command,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            workers,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        },
        config,
        totals,
    };
    let text = toml::to_string(&meta)
        .map_err(|e| CliError::Config(format!("cannot serialize metadata: {e}")))?;
    write_file(&sidecar_path(out), &text)
}
