use std::time::Instant;

use serde_json::json;

use super::{Cell, ExperimentConfig, NystromMode, Report, TableRow};
use crate::data::mnist::NUM_CLASSES;
use crate::data::{downsample_and_normalize, load_mnist_dir, stratified_subsample, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::kernel::{KernelSpec, SampleMatrix};
use crate::regression::{classification_rate, fit_reduced, OutputMatrix};
use crate::selection::{kfsa_select, nystrom_select, KfsaOptions, MemoryMode};

#[derive(Debug, Clone, PartialEq)]
pub struct MnistRow {
    pub kappa: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Selected samples per digit.
    pub counts: Vec<usize>,
    pub selected: usize,
    pub classification_rate: f64,
    pub nystrom: NystromMode,
    pub nystrom_budget: Option<usize>,
    pub nystrom_classification_rate: Option<f64>,
}

impl TableRow for MnistRow {
    fn columns() -> Vec<String> {
        let mut c: Vec<String> = ["kappa", "epsilon", "gamma", "seed", "n_train", "n_test"]
            .map(String::from)
            .to_vec();
        c.extend((0..NUM_CLASSES).map(|d| format!("count_{d}")));
        c.extend(
            [
                "selected",
                "classification_rate",
                "nystrom",
                "nystrom_budget",
                "nystrom_classification_rate",
            ]
            .map(String::from),
        );
        c
    }

    fn cells(&self) -> Vec<Cell> {
        let mut c = vec![
            self.kappa.into(),
            self.epsilon.into(),
            self.gamma.into(),
            self.seed.into(),
            self.n_train.into(),
            self.n_test.into(),
        ];
        c.extend(self.counts.iter().map(|&n| Cell::from(n)));
        c.extend([
            self.selected.into(),
            self.classification_rate.into(),
            self.nystrom.name().into(),
            self.nystrom_budget.into(),
            self.nystrom_classification_rate.into(),
        ]);
        c
    }
}

/// One grid point: kFSA on each digit separately, one joint fit on the union
/// of the per-digit subsets (in digit order), classification rate on `test`.
///
/// Returns the per-digit counts, the union of selected indices into `train`,
/// and the classification rate.
#[allow(clippy::too_many_arguments)]
pub fn mnist_point(
    kernel: &KernelSpec,
    train_x: &SampleMatrix,
    train_labels: &[usize],
    test_x: &SampleMatrix,
    test_labels: &[usize],
    epsilon: f64,
    gamma: f64,
    memory: MemoryMode,
    backend: Backend,
) -> Result<(Vec<usize>, Vec<usize>, f64)> {
    let classes = NUM_CLASSES.max(train_labels.iter().max().map_or(0, |&c| c + 1));
    let mut counts = vec![0; classes];
    let mut union = Vec::new();
    for (c, count) in counts.iter_mut().enumerate() {
        let members: Vec<usize> = (0..train_labels.len()).filter(|&j| train_labels[j] == c).collect();
        if members.is_empty() {
            continue;
        }
        let xc = train_x.select(&members)?;
        let opts = KfsaOptions::new(epsilon).memory(memory).backend(backend);
        let r = kfsa_select(kernel, &xc, &opts)?;
        *count = r.selected.len();
        union.extend(r.selected.iter().map(|&j| members[j]));
    }
    let y = OutputMatrix::one_hot(train_labels, classes)?;
    let model = fit_reduced(kernel, train_x, &y, &union, gamma, backend)?;
    let cr = classification_rate(&model, test_x, test_labels, backend)?;
    Ok((counts, union, cr))
}

fn subsample(ds: LabeledDataset, size: Option<usize>, seed: u64) -> Result<(LabeledDataset, Option<Vec<usize>>)> {
    match size {
        None => Ok((ds, None)),
        Some(n) if n > ds.len() => Err(Error::InvalidParameter(format!(
            "subsample of {n} requested but only {} samples available",
            ds.len()
        ))),
        Some(n) => {
            let idx = stratified_subsample(&ds.labels().expect("one-hot"), n, seed)?;
            Ok((ds.select(&idx)?, Some(idx)))
        }
    }
}

/// Per-digit kFSA + joint ridge fit + test classification over the κ × ε grid.
pub fn run_mnist(config: &ExperimentConfig) -> Result<Report<MnistRow>> {
    config.validate()?;
    let train_dir = config.train_path().expect("validated");
    let test_dir = config.test_path().expect("validated");
    let (train, train_idx) = subsample(load_mnist_dir(&train_dir, Split::Train)?, config.subsample, config.seed)?;
    let (test, test_idx) = subsample(
        load_mnist_dir(&test_dir, Split::Test)?,
        config.test_subsample,
        config.seed,
    )?;
    let train_x = downsample_and_normalize(&train.x)?;
    let test_x = downsample_and_normalize(&test.x)?;
    let train_labels = train.labels().expect("one-hot");
    let test_labels = test.labels().expect("one-hot");

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for kappa in config.kappas() {
        let kernel = config.kernel_spec(kappa)?;
        for epsilon in config.epsilons() {
            let t = Instant::now();
            let (counts, union, cr) = mnist_point(
                &kernel,
                &train_x,
                &train_labels,
                &test_x,
                &test_labels,
                epsilon,
                config.gamma,
                config.memory_mode(),
                config.backend,
            )?;
            let mut row = MnistRow {
                kappa,
                epsilon,
                gamma: config.gamma,
                seed: config.seed,
                n_train: train.len(),
                n_test: test.len(),
                counts,
                selected: union.len(),
                classification_rate: cr,
                nystrom: config.nystrom,
                nystrom_budget: None,
                nystrom_classification_rate: None,
            };
            if let Some(strategy) = config.nystrom.strategy() {
                let budget = if config.budget_match {
                    union.len()
                } else {
                    config.nystrom_budget.expect("validated").min(train.len())
                };
                let ny = nystrom_select(&kernel, &train_x, budget, strategy, config.seed, config.backend)?;
                let model = fit_reduced(&kernel, &train_x, &train.y, &ny.selected, config.gamma, config.backend)?;
                row.nystrom_budget = Some(budget);
                row.nystrom_classification_rate =
                    Some(classification_rate(&model, &test_x, &test_labels, config.backend)?);
            }
            log::info!(
                "mnist kappa={kappa} epsilon={epsilon:e}: {} selected, CR {:.4}",
                row.selected,
                row.classification_rate
            );
            timings.push(json!({"kappa": kappa, "epsilon": epsilon, "seconds": t.elapsed().as_secs_f64()}));
            rows.push(row);
        }
    }
    let metadata = json!({
        "config": config.resolved(),
        "train_dir": train_dir,
        "test_dir": test_dir,
        "subsample": {
            "method": "class-stratified, largest-remainder allocation, ChaCha8 shuffle per class",
            "seed": config.seed,
            "train": train_idx.as_ref().map(|i| i.len()),
            "test": test_idx.as_ref().map(|i| i.len()),
        },
        "timings": timings,
    });
    Ok(Report { rows, metadata })
}
