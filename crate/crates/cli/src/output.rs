//! File emission. Reals are written with 17 significant digits so that a
//! CSV round-trips bit-exactly; every file is accompanied by metadata.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Rows of string fields under a header.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Sidecar<'a, S: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    data_file: String,
    summary: S,
}

/// `<file>.meta.json` next to `data`, echoing the resolved configuration.
pub fn write_sidecar<S: Serialize>(
    data: &Path,
    command: &str,
    config: &RunConfig,
    summary: S,
) -> Result<PathBuf> {
    let name = data
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let path = data.with_file_name(format!("{name}.meta.json"));
    write_json(
        &path,
        &Sidecar {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            data_file: name,
            summary,
        },
    )?;
    Ok(path)
}

/// JSON document carrying its own metadata block.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub command: &'a str,
    pub tool_version: &'a str,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub data: T,
}

pub fn write_document<T: Serialize>(
    path: &Path,
    command: &str,
    config: &RunConfig,
    data: T,
) -> Result<()> {
    write_json(
        path,
        &Document {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config,
            data,
        },
    )
}
