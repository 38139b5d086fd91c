//! File reads go through here so tests can list every file a command opened.
//!
//! When `ADADFQ_AUDIT` names a file, each read appends the path read to it,
//! one per line.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::CliError;

pub const AUDIT_ENV: &str = "ADADFQ_AUDIT";

static OPENED: Mutex<Vec<PathBuf>> = Mutex::new(Vec::new());

fn record(path: &Path) {
    let resolved = path.canonicalize().unwrap_or_else(|_| path.to_path_buf());
    OPENED.lock().unwrap_or_else(|e| e.into_inner()).push(resolved.clone());
    if let Some(log) = std::env::var_os(AUDIT_ENV) {
        let appended = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log)
            .and_then(|mut f| writeln!(f, "{}", resolved.display()));
        if let Err(e) = appended {
            log::warn!("audit log {}: {e}", Path::new(&log).display());
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    record(path);
    Ok(bytes)
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|e| CliError::input(path, e))
}

/// Paths read by this process so far.
pub fn opened() -> Vec<PathBuf> {
    OPENED.lock().unwrap_or_else(|e| e.into_inner()).clone()
}
