use std::fs::File;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use super::{Cell, ExperimentConfig, NystromMode, Report, TableRow};
use crate::data::{load_table_csv, seeded_rng, LabeledDataset, Normalizer, Split, TableLoad};
use crate::error::{Error, Result};
use crate::regression::{fit_reduced, mean_squared_error};
use crate::selection::{kfsa_select, nystrom_residual, nystrom_select, KfsaOptions};

/// Kernel residuals need the full training Gram matrix; above this many
/// training samples they are left empty.
pub const RESIDUAL_LIMIT: usize = 5000;

const CALCOFI_TRAIN: usize = 25000;
const CALCOFI_TEST: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub kappa: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// `‖G − C W⁺ Cᵀ‖_F` for the kFSA subset.
    pub kfsa_residual: Option<f64>,
    pub nystrom: NystromMode,
    pub nystrom_budget: Option<usize>,
    pub nystrom_test_mse: Option<f64>,
    pub nystrom_residual: Option<f64>,
}

impl TableRow for RegressionRow {
    fn columns() -> Vec<String> {
        [
            "kappa",
            "epsilon",
            "gamma",
            "seed",
            "n_train",
            "n_test",
            "selected",
            "train_mse",
            "test_mse",
            "kfsa_residual",
            "nystrom",
            "nystrom_budget",
            "nystrom_test_mse",
            "nystrom_residual",
        ]
        .map(String::from)
        .to_vec()
    }

    fn cells(&self) -> Vec<Cell> {
        vec![
            self.kappa.into(),
            self.epsilon.into(),
            self.gamma.into(),
            self.seed.into(),
            self.n_train.into(),
            self.n_test.into(),
            self.selected.into(),
            self.train_mse.into(),
            self.test_mse.into(),
            self.kfsa_residual.into(),
            self.nystrom.name().into(),
            self.nystrom_budget.into(),
            self.nystrom_test_mse.into(),
            self.nystrom_residual.into(),
        ]
    }
}

fn load(config: &ExperimentConfig, path: &Path) -> Result<TableLoad> {
    let t = &config.table;
    load_table_csv(File::open(path)?, &t.inputs, &t.outputs)
}

fn random_subset(ds: LabeledDataset, n: Option<usize>, seed: u64) -> Result<LabeledDataset> {
    match n {
        Some(n) if n < ds.len() => {
            let mut idx = rand::seq::index::sample(&mut seeded_rng(seed), ds.len(), n).into_vec();
            idx.sort_unstable();
            ds.select(&idx)
        }
        Some(n) if n > ds.len() => Err(Error::InvalidParameter(format!(
            "subsample of {n} requested but only {} rows available",
            ds.len()
        ))),
        _ => Ok(ds),
    }
}

/// kFSA + ridge fit + holdout MSE over the κ × ε grid, on min-max
/// normalized inputs when `config.table.normalize` is set.
fn regression_grid(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    extra: Value,
) -> Result<Report<RegressionRow>> {
    let (train_x, test_x) = if config.table.normalize {
        let n = Normalizer::fit(&train.x);
        (n.apply(&train.x)?, n.apply(&test.x)?)
    } else {
        (train.x.clone(), test.x.clone())
    };
    let with_residuals = train.len() <= RESIDUAL_LIMIT;
    let backend = config.backend;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for kappa in config.kappas() {
        let kernel = config.kernel_spec(kappa)?;
        for epsilon in config.epsilons() {
            let t = Instant::now();
            let opts = KfsaOptions::new(epsilon).memory(config.memory_mode()).backend(backend);
            let sel = kfsa_select(&kernel, &train_x, &opts)?;
            let model = fit_reduced(&kernel, &train_x, &train.y, &sel.selected, config.gamma, backend)?;
            let mut row = RegressionRow {
                kappa,
                epsilon,
                gamma: config.gamma,
                seed: config.seed,
                n_train: train.len(),
                n_test: test.len(),
                selected: sel.selected.len(),
                train_mse: mean_squared_error(&model, &train_x, &train.y, backend)?,
                test_mse: mean_squared_error(&model, &test_x, &test.y, backend)?,
                kfsa_residual: None,
                nystrom: config.nystrom,
                nystrom_budget: None,
                nystrom_test_mse: None,
                nystrom_residual: None,
            };
            if with_residuals {
                row.kfsa_residual = Some(nystrom_residual(&kernel, &train_x, &sel.selected, backend)?);
            }
            if let Some(strategy) = config.nystrom.strategy() {
                let budget = if config.budget_match {
                    sel.selected.len()
                } else {
                    config.nystrom_budget.expect("validated").min(train.len())
                };
                let ny = nystrom_select(&kernel, &train_x, budget, strategy, config.seed, backend)?;
                let nm = fit_reduced(&kernel, &train_x, &train.y, &ny.selected, config.gamma, backend)?;
                row.nystrom_budget = Some(budget);
                row.nystrom_test_mse = Some(mean_squared_error(&nm, &test_x, &test.y, backend)?);
                if with_residuals {
                    row.nystrom_residual = Some(nystrom_residual(&kernel, &train_x, &ny.selected, backend)?);
                }
            }
            log::info!(
                "kappa={kappa} epsilon={epsilon:e}: {} selected, test MSE {:e}",
                row.selected,
                row.test_mse
            );
            timings.push(json!({"kappa": kappa, "epsilon": epsilon, "seconds": t.elapsed().as_secs_f64()}));
            rows.push(row);
        }
    }
    let metadata = json!({
        "config": config.resolved(),
        "data": extra,
        "residuals": if with_residuals { "computed" } else { "skipped: training set above residual limit" },
        "timings": timings,
    });
    Ok(Report { rows, metadata })
}

/// Dissolved-oxygen regression: by default a seeded 25000/5000 split of one
/// CSV (sizes overridable with the subsample settings), or separate files.
pub fn run_calcofi(config: &ExperimentConfig) -> Result<Report<RegressionRow>> {
    config.validate()?;
    let path = config.train_path().expect("validated");
    let loaded = load(config, &path)?;
    let n_train = config.subsample.unwrap_or(CALCOFI_TRAIN);
    let (train, test, dropped_test) = match config.test_path() {
        Some(tp) => {
            let t = load(config, &tp)?;
            let train = random_subset(loaded.dataset, Some(n_train), config.seed)?;
            let test = random_subset(t.dataset, config.test_subsample, config.seed)?.with_split(Split::Test);
            (train, test, t.dropped)
        }
        None => {
            let n_test = config.test_subsample.unwrap_or(CALCOFI_TEST);
            let (a, b) = loaded.dataset.partition(n_train, n_test, config.seed)?;
            (a, b, 0)
        }
    };
    regression_grid(
        config,
        &train,
        &test,
        json!({"path": path, "dropped_rows": loaded.dropped, "dropped_test_rows": dropped_test}),
    )
}

/// Any CSV: named input and output columns, holdout from a separate file or
/// a seeded split of `table.test_fraction`.
pub fn run_generic(config: &ExperimentConfig) -> Result<Report<RegressionRow>> {
    config.validate()?;
    let path = config.train_path().expect("validated");
    let loaded = load(config, &path)?;
    let (train, test, dropped_test) = match config.test_path() {
        Some(tp) => {
            let t = load(config, &tp)?;
            let train = random_subset(loaded.dataset, config.subsample, config.seed)?;
            let test = random_subset(t.dataset, config.test_subsample, config.seed)?.with_split(Split::Test);
            (train, test, t.dropped)
        }
        None => {
            let m = loaded.dataset.len();
            let n_test = config
                .test_subsample
                .unwrap_or(((m as f64) * config.table.test_fraction).round() as usize)
                .max(1);
            let n_train = config.subsample.unwrap_or(m.saturating_sub(n_test));
            let (a, b) = loaded.dataset.partition(n_train, n_test, config.seed)?;
            (a, b, 0)
        }
    };
    regression_grid(
        config,
        &train,
        &test,
        json!({"path": path, "dropped_rows": loaded.dropped, "dropped_test_rows": dropped_test}),
    )
}
