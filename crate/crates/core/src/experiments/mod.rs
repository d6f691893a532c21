//! Selection → fit → evaluate pipelines over parameter grids.
//!
//! Every run returns typed rows that also render as a flat table; each row
//! carries its full parameter tuple. Grid points run in order, so tables are
//! identical across runs with the same configuration and seed.

mod config;
mod fpu;
mod mnist;
mod table;
mod tabular;

pub use config::{ExperimentConfig, ExperimentKind, FpuConfig, KernelFamily, NystromMode, OutputFormat, TableConfig};
pub use fpu::{run_fpu, FpuRow};
pub use mnist::{mnist_point, run_mnist, MnistRow};
pub use table::{Cell, Table, TableRow};
pub use tabular::{run_calcofi, run_generic, RegressionRow, RESIDUAL_LIMIT};

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::Result;

/// Rows of one experiment plus free-form metadata (config echo, timings).
#[derive(Debug, Clone)]
pub struct Report<R> {
    pub rows: Vec<R>,
    pub metadata: Value,
}

impl<R: TableRow> Report<R> {
    pub fn table(&self) -> Table {
        Table::from_rows(&self.rows)
    }
}

/// A finished run in table form, ready to be written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: &'static str,
    pub table: Table,
    pub metadata: Value,
}

/// Dispatches on `config.experiment`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let (name, table, metadata) = match config.experiment {
        ExperimentKind::Mnist => {
            let r = run_mnist(config)?;
            ("mnist", r.table(), r.metadata)
        }
        ExperimentKind::Fpu => {
            let r = run_fpu(config)?;
            ("fpu", r.table(), r.metadata)
        }
        ExperimentKind::Calcofi => {
            let r = run_calcofi(config)?;
            ("calcofi", r.table(), r.metadata)
        }
        ExperimentKind::Generic => {
            let r = run_generic(config)?;
            ("generic", r.table(), r.metadata)
        }
    };
    Ok(RunOutput { name, table, metadata })
}

/// Writes `<name>.csv` or `<name>.json` and `<name>.meta.json` into `dir`.
/// Returns the table path.
pub fn write_outputs(dir: &Path, output: &RunOutput, format: OutputFormat) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let table_path = match format {
        OutputFormat::Csv => {
            let p = dir.join(format!("{}.csv", output.name));
            output.table.write_csv(fs::File::create(&p)?)?;
            p
        }
        OutputFormat::Json => {
            let p = dir.join(format!("{}.json", output.name));
            let text = serde_json::to_string_pretty(&output.table.to_json())?;
            fs::write(&p, text + "\n")?;
            p
        }
    };
    let meta = json!({
        "experiment": output.name,
        "library_version": env!("CARGO_PKG_VERSION"),
        "rows": output.table.rows.len(),
        "details": output.metadata,
    });
    fs::write(
        dir.join(format!("{}.meta.json", output.name)),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(table_path)
}

/// Linear-interpolation quantile of unsorted data, `p ∈ [0, 1]`.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
