//! CSV/JSON emission. Floats are written as `{:.16e}` (17 significant
//! digits) so that every value round-trips.

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::fs::File;
use std::path::{Path, PathBuf};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output directory, created on demand.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&self, name: &str, header: &[String]) -> CliResult<Table> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        Ok(Table { w })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("values serialize");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

pub struct Table {
    w: csv::Writer<File>,
}

impl Table {
    pub fn row(&mut self, values: &[f64]) -> CliResult<()> {
        self.w.write_record(values.iter().map(|v| num(*v)))?;
        Ok(())
    }

    /// Row with leading integer columns (indices, counts).
    pub fn row_mixed(&mut self, ints: &[i64], values: &[f64]) -> CliResult<()> {
        let fields = ints
            .iter()
            .map(|i| i.to_string())
            .chain(values.iter().map(|v| num(*v)));
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.w.flush().map_err(|e| CliError::io("csv output", e))
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Metadata sufficient to replay a run: feed the file back through
/// `--config run.json`.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a, R: Serialize> {
    pub tool: &'static str,
    pub command: &'a str,
    pub versions: Versions,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: &'a RunConfig,
    pub results: R,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cli: &'static str,
    pub core: &'static str,
}

impl<'a, R: Serialize> RunRecord<'a, R> {
    pub fn new(command: &'a str, config: &'a RunConfig, seeds: Vec<u64>, results: R) -> Self {
        Self {
            tool: "fpwell",
            command,
            versions: Versions {
                cli: env!("CARGO_PKG_VERSION"),
                core: fpwell::VERSION,
            },
            config_hash: config.hash(),
            seeds,
            config,
            results,
        }
    }
}
