use std::time::Instant;

use serde_json::json;

use super::{quantile, Cell, ExperimentConfig, Report, TableRow};
use crate::data::generate_fpu;
use crate::error::Result;
use crate::features::{enumerate_monomials, exact_fpu_coefficients, recover_coefficients};
use crate::regression::{fit_full, fit_reduced};
use crate::selection::{kfsa_select, KfsaOptions};

/// Summary over trials for one chain length `d` and one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FpuRow {
    pub d: usize,
    pub m: usize,
    pub beta: f64,
    pub kappa: f64,
    pub degree: u32,
    pub epsilon: f64,
    pub reduced_gamma: f64,
    pub full_gamma: f64,
    pub seed: u64,
    pub trials: usize,
    /// Dictionary size `C(d+q, q)`.
    pub expected: usize,
    pub selected_min: usize,
    pub selected_max: usize,
    pub reduced_errors: Vec<f64>,
    pub full_errors: Vec<f64>,
}

impl FpuRow {
    pub fn reduced_median(&self) -> f64 {
        quantile(&self.reduced_errors, 0.5)
    }

    pub fn full_median(&self) -> Option<f64> {
        (!self.full_errors.is_empty()).then(|| quantile(&self.full_errors, 0.5))
    }
}

impl TableRow for FpuRow {
    fn columns() -> Vec<String> {
        [
            "d",
            "m",
            "beta",
            "kappa",
            "degree",
            "epsilon",
            "reduced_gamma",
            "full_gamma",
            "seed",
            "trials",
            "expected",
            "selected_min",
            "selected_max",
            "reduced_median",
            "reduced_p05",
            "reduced_p95",
            "full_median",
            "full_p05",
            "full_p95",
        ]
        .map(String::from)
        .to_vec()
    }

    fn cells(&self) -> Vec<Cell> {
        let full = |p: f64| Cell::from((!self.full_errors.is_empty()).then(|| quantile(&self.full_errors, p)));
        vec![
            self.d.into(),
            self.m.into(),
            self.beta.into(),
            self.kappa.into(),
            (self.degree as u64).into(),
            self.epsilon.into(),
            self.reduced_gamma.into(),
            self.full_gamma.into(),
            self.seed.into(),
            self.trials.into(),
            self.expected.into(),
            self.selected_min.into(),
            self.selected_max.into(),
            quantile(&self.reduced_errors, 0.5).into(),
            quantile(&self.reduced_errors, 0.05).into(),
            quantile(&self.reduced_errors, 0.95).into(),
            full(0.5),
            full(0.05),
            full(0.95),
        ]
    }
}

/// For each `d` and ε: kFSA counts and the relative Frobenius error of the
/// recovered coefficients, reduced set vs all samples. Trial `t` uses seed
/// `seed + t`.
pub fn run_fpu(config: &ExperimentConfig) -> Result<Report<FpuRow>> {
    config.validate()?;
    let f = &config.fpu;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &d in &f.dims {
        for kappa in config.kappas() {
            let kernel = config.kernel_spec(kappa)?;
            let dict = enumerate_monomials(d, config.degree, kappa)?;
            let exact = exact_fpu_coefficients(d, f.beta, &dict)?;
            for epsilon in config.epsilons() {
                let t = Instant::now();
                let mut counts = Vec::with_capacity(f.trials);
                let mut reduced = Vec::with_capacity(f.trials);
                let mut full = Vec::new();
                for trial in 0..f.trials {
                    let seed = config.seed.wrapping_add(trial as u64);
                    let ds = generate_fpu(d, f.samples, f.beta, seed)?;
                    let opts = KfsaOptions::new(epsilon)
                        .memory(config.memory_mode())
                        .backend(config.backend);
                    let sel = kfsa_select(&kernel, &ds.x, &opts)?;
                    counts.push(sel.selected.len());
                    let model = fit_reduced(&kernel, &ds.x, &ds.y, &sel.selected, f.reduced_gamma, config.backend)?;
                    reduced.push(recover_coefficients(&model, &dict)?.relative_error(&exact)?);
                    if f.full_fit {
                        let model = fit_full(&kernel, &ds.x, &ds.y, config.gamma, config.backend)?;
                        full.push(recover_coefficients(&model, &dict)?.relative_error(&exact)?);
                    }
                }
                let row = FpuRow {
                    d,
                    m: f.samples,
                    beta: f.beta,
                    kappa,
                    degree: config.degree,
                    epsilon,
                    reduced_gamma: f.reduced_gamma,
                    full_gamma: config.gamma,
                    seed: config.seed,
                    trials: f.trials,
                    expected: dict.len(),
                    selected_min: *counts.iter().min().expect("trials > 0"),
                    selected_max: *counts.iter().max().expect("trials > 0"),
                    reduced_errors: reduced,
                    full_errors: full,
                };
                log::info!(
                    "fpu d={d} epsilon={epsilon:e}: selected {}..{} of {} expected, median error {:e}",
                    row.selected_min,
                    row.selected_max,
                    row.expected,
                    row.reduced_median()
                );
                timings.push(json!({"d": d, "kappa": kappa, "epsilon": epsilon, "seconds": t.elapsed().as_secs_f64()}));
                rows.push(row);
            }
        }
    }
    let metadata = json!({
        "config": config.resolved(),
        "sampling": "uniform [-0.1, 0.1] from ChaCha8 (seed + trial), 53-bit draws",
        "timings": timings,
    });
    Ok(Report { rows, metadata })
}
