use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use adadfq::game::TraceRow;

use crate::error::CliError;

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e)),
        _ => Ok(()),
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let tmp = temp_path(path);
    let written = File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = written.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::output(path, e));
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Renders rows as CSV with `{:?}` floats so values round-trip exactly.
pub fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn trace_fields(r: &TraceRow) -> Vec<String> {
    let f = fmt_f64;
    vec![
        r.iter.to_string(),
        r.epoch.to_string(),
        f(r.loss_gen),
        f(r.loss_cal),
        f(r.h_info_pre_g),
        f(r.h_info_post_g),
        f(r.delta_g),
        f(r.h_info_pre_q),
        f(r.h_info_post_q),
        f(r.delta_q),
        r.n_disagree.to_string(),
        r.n_agree.to_string(),
        r.n_teacher_wrong.to_string(),
        f(r.hprime_min),
        f(r.hprime_mean),
        f(r.hprime_max),
    ]
}

/// Streams trace rows to `<path>.partial` so a long run can be inspected
/// while it is going; [`TraceWriter::finish`] renames it into place.
pub struct TraceWriter {
    path: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        ensure_parent(path)?;
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".partial");
        let partial = path.with_file_name(name);
        let file = File::create(&partial).map_err(|e| CliError::output(&partial, e))?;
        let mut w = TraceWriter {
            path: path.to_path_buf(),
            partial,
            out: BufWriter::new(file),
        };
        w.line(&TraceRow::CSV_HEADER.join(","))?;
        Ok(w)
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(|e| CliError::output(&self.partial, e))
    }

    pub fn row(&mut self, r: &TraceRow) -> Result<(), CliError> {
        self.line(&trace_fields(r).join(","))?;
        if r.iter % 50 == 49 {
            self.out.flush().map_err(|e| CliError::output(&self.partial, e))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush().map_err(|e| CliError::output(&self.partial, e))?;
        self.out
            .get_ref()
            .sync_all()
            .map_err(|e| CliError::output(&self.partial, e))?;
        fs::rename(&self.partial, &self.path).map_err(|e| CliError::output(&self.path, e))
    }
}
