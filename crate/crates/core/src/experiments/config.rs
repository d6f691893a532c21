use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{CalcofiColumns, FPU_BETA};
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::kernel::KernelSpec;
use crate::regression::DEFAULT_GAMMA;
use crate::selection::{MemoryMode, NystromStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    #[default]
    Mnist,
    Fpu,
    Calcofi,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Polynomial,
    /// Block-composite cosine kernel on 14×14 images.
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NystromMode {
    #[default]
    Off,
    Uniform,
    Leverage,
}

impl NystromMode {
    pub fn strategy(self) -> Option<NystromStrategy> {
        match self {
            NystromMode::Off => None,
            NystromMode::Uniform => Some(NystromStrategy::Uniform),
            NystromMode::Leverage => Some(NystromStrategy::ExactLeverage { lambda: None }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NystromMode::Off => "off",
            NystromMode::Uniform => "uniform",
            NystromMode::Leverage => "leverage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpuConfig {
    pub dims: Vec<usize>,
    pub samples: usize,
    pub trials: usize,
    pub beta: f64,
    /// Regularization of the reduced-set fit.
    pub reduced_gamma: f64,
    /// Also fit on all samples for comparison.
    pub full_fit: bool,
}

impl Default for FpuConfig {
    fn default() -> Self {
        Self {
            dims: (2..=20).collect(),
            samples: 2000,
            trials: 10,
            beta: FPU_BETA,
            reduced_gamma: 0.0,
            full_fit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Min-max normalize inputs with constants fit on the training split.
    pub normalize: bool,
    /// Share held out when no separate test file is given.
    pub test_fraction: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        let c = CalcofiColumns::default();
        Self {
            inputs: c.inputs,
            outputs: vec![c.output],
            normalize: true,
            test_fraction: 0.2,
        }
    }
}

/// Everything a run needs. Empty grids and unset kernels fall back to
/// per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub kernel: Option<KernelFamily>,
    pub kappa: Vec<f64>,
    /// Polynomial degree `q`.
    pub degree: u32,
    pub epsilon: Vec<f64>,
    pub gamma: f64,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    /// Training subsample size (class-stratified for MNIST).
    pub subsample: Option<usize>,
    pub test_subsample: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub low_memory: bool,
    pub nystrom: NystromMode,
    /// Give Nyström as many landmarks as kFSA selected at the same grid point.
    pub budget_match: bool,
    pub nystrom_budget: Option<usize>,
    pub backend: Backend,
    pub fpu: FpuConfig,
    pub table: TableConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            kernel: None,
            kappa: Vec::new(),
            degree: 3,
            epsilon: Vec::new(),
            gamma: DEFAULT_GAMMA,
            train: None,
            test: None,
            data_dir: None,
            subsample: None,
            test_subsample: None,
            seed: 0,
            out: PathBuf::from("results"),
            format: OutputFormat::default(),
            low_memory: false,
            nystrom: NystromMode::default(),
            budget_match: false,
            nystrom_budget: None,
            backend: Backend::default(),
            fpu: FpuConfig::default(),
            table: TableConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            ..Self::default()
        }
    }

    /// Copy with kernel and grids made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            kernel: Some(self.kernel_family()),
            kappa: self.kappas(),
            epsilon: self.epsilons(),
            ..self.clone()
        }
    }

    pub fn kernel_family(&self) -> KernelFamily {
        self.kernel.unwrap_or(match self.experiment {
            ExperimentKind::Mnist => KernelFamily::Composite,
            ExperimentKind::Fpu => KernelFamily::Polynomial,
            ExperimentKind::Calcofi | ExperimentKind::Generic => KernelFamily::Gaussian,
        })
    }

    pub fn kappas(&self) -> Vec<f64> {
        if !self.kappa.is_empty() {
            return self.kappa.clone();
        }
        match self.experiment {
            ExperimentKind::Mnist => (1..=10).map(|k| k as f64 / 10.0).collect(),
            ExperimentKind::Fpu => vec![1.0],
            ExperimentKind::Calcofi => vec![1.0, 2.0, 5.0, 10.0, 20.0],
            ExperimentKind::Generic => vec![1.0],
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        if !self.epsilon.is_empty() {
            return self.epsilon.clone();
        }
        match self.experiment {
            ExperimentKind::Mnist => vec![0.01, 0.02, 0.04, 0.07, 0.16, 0.19, 0.27],
            ExperimentKind::Fpu => vec![1e-10],
            ExperimentKind::Calcofi => vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10],
            ExperimentKind::Generic => vec![1e-6],
        }
    }

    pub fn memory_mode(&self) -> MemoryMode {
        if self.low_memory {
            MemoryMode::OnDemand
        } else {
            MemoryMode::default()
        }
    }

    pub fn kernel_spec(&self, kappa: f64) -> Result<KernelSpec> {
        match self.kernel_family() {
            KernelFamily::Gaussian => KernelSpec::gaussian(kappa),
            KernelFamily::Polynomial => KernelSpec::polynomial(kappa, self.degree),
            KernelFamily::Composite => crate::data::mnist_kernel(kappa),
        }
    }

    /// Training input: `train`, else a default location under `data_dir`
    /// (`mnist/` or the directory itself for MNIST, `bottle.csv` for CalCOFI).
    pub fn train_path(&self) -> Option<PathBuf> {
        self.train.clone().or_else(|| self.default_data_path())
    }

    pub fn test_path(&self) -> Option<PathBuf> {
        self.test.clone().or_else(|| match self.experiment {
            ExperimentKind::Mnist => self.default_data_path(),
            _ => None,
        })
    }

    fn default_data_path(&self) -> Option<PathBuf> {
        let dir = self.data_dir.as_ref()?;
        match self.experiment {
            ExperimentKind::Mnist => {
                let sub = dir.join("mnist");
                Some(if sub.is_dir() { sub } else { dir.clone() })
            }
            ExperimentKind::Calcofi => Some(dir.join("bottle.csv")),
            ExperimentKind::Fpu | ExperimentKind::Generic => None,
        }
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let kappas = self.kappas();
        let eps = self.epsilons();
        if kappas.is_empty() || eps.is_empty() {
            return bad("parameter grids must be nonempty".into());
        }
        for &k in &kappas {
            self.kernel_spec(k)?;
        }
        if let Some(&e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return bad(format!("every epsilon must be > 0, got {e}"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.subsample == Some(0) || self.test_subsample == Some(0) {
            return bad("subsample sizes must be positive".into());
        }
        if self.nystrom != NystromMode::Off && !self.budget_match && self.nystrom_budget.is_none() {
            return bad("Nyström comparison needs --budget-match or a nystrom_budget".into());
        }
        if self.nystrom_budget == Some(0) {
            return bad("nystrom_budget must be positive".into());
        }
        match self.experiment {
            ExperimentKind::Mnist => {
                if self.kernel_family() != KernelFamily::Composite {
                    return bad("the MNIST experiment uses the composite kernel".into());
                }
                if self.train_path().is_none() || self.test_path().is_none() {
                    return bad("MNIST needs --train and --test directories or a data directory".into());
                }
            }
            ExperimentKind::Fpu => {
                let f = &self.fpu;
                if f.dims.is_empty() || f.dims.contains(&0) || f.samples == 0 || f.trials == 0 {
                    return bad("FPU needs nonempty positive dims, samples and trials".into());
                }
                if self.kernel_family() != KernelFamily::Polynomial {
                    return bad("coefficient recovery needs the polynomial kernel".into());
                }
                if self.degree < 3 {
                    return bad("the FPU right-hand side is cubic; degree must be >= 3".into());
                }
                if !(f.reduced_gamma.is_finite() && f.reduced_gamma >= 0.0) {
                    return bad("reduced_gamma must be >= 0".into());
                }
            }
            ExperimentKind::Calcofi | ExperimentKind::Generic => {
                if self.kernel_family() == KernelFamily::Composite {
                    return bad("the composite kernel only applies to 14×14 images".into());
                }
                if self.train_path().is_none() {
                    return bad("a training CSV is required (--train)".into());
                }
                let t = &self.table;
                if t.inputs.is_empty() || t.outputs.is_empty() {
                    return bad("input and output columns must be named".into());
                }
                if !(t.test_fraction > 0.0 && t.test_fraction < 1.0) {
                    return bad("test_fraction must lie in (0, 1)".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_experiment() {
        let m = ExperimentConfig::new(ExperimentKind::Mnist);
        assert_eq!(m.kernel_family(), KernelFamily::Composite);
        assert_eq!(m.kappas().len(), 10);
        let f = ExperimentConfig::new(ExperimentKind::Fpu);
        assert_eq!(f.kappas(), vec![1.0]);
        assert_eq!(f.epsilons(), vec![1e-10]);
        assert_eq!(f.fpu.dims.first(), Some(&2));
        assert_eq!(f.fpu.dims.last(), Some(&20));
        assert!(f.validate().is_ok());
    }

    #[test]
    fn validation_failures() {
        let mut c = ExperimentConfig::new(ExperimentKind::Fpu);
        c.epsilon = vec![0.0];
        assert!(c.validate().is_err());
        c.epsilon = vec![1e-3];
        c.nystrom = NystromMode::Uniform;
        assert!(c.validate().is_err());
        c.budget_match = true;
        assert!(c.validate().is_ok());
        assert!(ExperimentConfig::new(ExperimentKind::Mnist).validate().is_err());
        let mut g = ExperimentConfig::new(ExperimentKind::Generic);
        assert!(g.validate().is_err());
        g.train = Some("x.csv".into());
        assert!(g.validate().is_ok());
        g.kernel = Some(KernelFamily::Composite);
        assert!(g.validate().is_err());
    }

    #[test]
    fn json_round_trip_with_partial_input() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"calcofi","kappa":[3.0],"fpu":{"trials":2}}"#).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Calcofi);
        assert_eq!(c.fpu.trials, 2);
        assert_eq!(c.fpu.samples, 2000);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus":1}"#).is_err());
    }
}
