//! Kernel ridge regression and one-hot classification on full or reduced
//! sample sets.
//!
//! A reduced model keeps only the selected samples `X̃` and a coefficient
//! matrix `Θ̃`, and evaluates `f(x) = Θ̃ · [k(x̃⁽ⁱ⁾, x)]ᵢ`. Fitting still uses
//! every training sample: `Θ̃` solves the regularized normal equation
//! `Θ̃ (G_{X̃,X} G_{X,X̃} + γI) = Y G_{X,X̃}`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::normalize::Normalizer;
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::kernel::{gram, gram_symmetric, KernelSpec, SampleMatrix};
use crate::linalg::{lstsq_ridge, solve_spd, SolveMethod};

/// Regularization used by the experiments unless overridden.
pub const DEFAULT_GAMMA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Encoding {
    Regression,
    OneHot { num_classes: usize },
}

/// Targets `Y`, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    values: DMatrix<f64>,
    encoding: Encoding,
}

impl OutputMatrix {
    pub fn regression(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output matrix"));
        }
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Empty("output matrix"));
        }
        Ok(Self {
            values,
            encoding: Encoding::Regression,
        })
    }

    pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label list"));
        }
        let mut values = DMatrix::zeros(num_classes, labels.len());
        for (j, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::InvalidLabel {
                    label: l,
                    index: j,
                    num_classes,
                });
            }
            values[(l, j)] = 1.0;
        }
        Ok(Self {
            values,
            encoding: Encoding::OneHot { num_classes },
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    /// Output dimension `d′`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    /// Class index of each column for one-hot outputs.
    pub fn labels(&self) -> Option<Vec<usize>> {
        match self.encoding {
            Encoding::OneHot { .. } => Some(
                self.values
                    .column_iter()
                    .map(|c| c.iter().position(|&v| v == 1.0).unwrap_or(0))
                    .collect(),
            ),
            Encoding::Regression => None,
        }
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&j| j >= self.len()) {
            return Err(Error::InvalidParameter("output index out of range".into()));
        }
        Ok(Self {
            values: self.values.select_columns(indices),
            encoding: self.encoding,
        })
    }
}

/// Fitted model `f(x) = Θ̃ G_{X̃,x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    samples: SampleMatrix,
    theta: DMatrix<f64>,
    kernel: KernelSpec,
    normalizer: Option<Normalizer>,
    gamma: f64,
    solve_method: SolveMethod,
}

impl ReducedModel {
    pub fn new(samples: SampleMatrix, theta: DMatrix<f64>, kernel: KernelSpec, gamma: f64) -> Result<Self> {
        if theta.ncols() != samples.len() {
            return Err(Error::ShapeMismatch {
                expected: (theta.nrows(), samples.len()),
                found: theta.shape(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix"));
        }
        kernel.validate()?;
        Ok(Self {
            samples,
            theta,
            kernel,
            normalizer: None,
            gamma,
            solve_method: SolveMethod::Cholesky,
        })
    }

    /// Attaches input normalization constants applied before every prediction.
    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Result<Self> {
        if normalizer.dim() != self.samples.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.samples.dim(),
                found: normalizer.dim(),
            });
        }
        self.normalizer = Some(normalizer);
        Ok(self)
    }

    /// The selected samples `X̃` (in normalized coordinates if a normalizer is attached).
    pub fn samples(&self) -> &SampleMatrix {
        &self.samples
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn solve_method(&self) -> SolveMethod {
        self.solve_method
    }

    pub fn output_dim(&self) -> usize {
        self.theta.nrows()
    }

    /// Same model with a different coefficient matrix.
    pub fn with_theta(&self, theta: DMatrix<f64>) -> Result<Self> {
        let mut m = Self::new(self.samples.clone(), theta, self.kernel.clone(), self.gamma)?;
        m.normalizer = self.normalizer.clone();
        Ok(m)
    }

    fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.samples.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.samples.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input"));
        }
        match &self.normalizer {
            Some(n) => n.apply_point(x),
            None => Ok(x.to_vec()),
        }
    }

    fn prepare_all(&self, xs: &SampleMatrix) -> Result<SampleMatrix> {
        if xs.dim() != self.samples.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.samples.dim(),
                found: xs.dim(),
            });
        }
        match &self.normalizer {
            Some(n) => n.apply(xs),
            None => Ok(xs.clone()),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    Ok(())
}

fn check_pairs(x: &SampleMatrix, y: &OutputMatrix) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Fits `Θ̃` on the reduced set `X̃ = X[selected]` using every training pair.
///
/// Minimizes `‖Y − Θ̃ G_{X̃,X}‖_F² + γ‖Θ̃‖_F²`, whose normal equation is
/// `Θ̃ (G_{X̃,X} G_{X,X̃} + γI) = Y G_{X,X̃}`. The normal equation is never
/// formed; see [`lstsq_ridge`]. A rank-deficient system at `gamma = 0`
/// yields the minimum-norm solution.
pub fn fit_reduced(
    spec: &KernelSpec,
    x: &SampleMatrix,
    y: &OutputMatrix,
    selected: &[usize],
    gamma: f64,
    backend: Backend,
) -> Result<ReducedModel> {
    check_gamma(gamma)?;
    check_pairs(x, y)?;
    let reduced = x.select(selected)?;
    // G_{X̃,X}: m̃ × m
    let k = gram(spec, &reduced, x, backend)?.into_values();
    let (sol, how) = lstsq_ridge(&k.transpose(), &y.values().transpose(), gamma).map_err(|e| match e {
        Error::SingularSystem(msg) if gamma == 0.0 => Error::SingularSystem(format!(
            "{msg}; the reduced system is singular at gamma = 0, retry with gamma > 0"
        )),
        other => other,
    })?;
    let mut model = ReducedModel::new(reduced, sol.transpose(), spec.clone(), gamma)?;
    model.solve_method = how;
    Ok(model)
}

/// Classic kernel ridge regression on all samples: `Θ (G_{X,X} + γI) = Y`.
pub fn fit_full(
    spec: &KernelSpec,
    x: &SampleMatrix,
    y: &OutputMatrix,
    gamma: f64,
    backend: Backend,
) -> Result<ReducedModel> {
    check_gamma(gamma)?;
    check_pairs(x, y)?;
    let mut g = gram_symmetric(spec, x, backend)?.into_values();
    for i in 0..g.nrows() {
        g[(i, i)] += gamma;
    }
    let (sol, how) = solve_spd(&g, &y.values().transpose())?;
    let mut model = ReducedModel::new(x.clone(), sol.transpose(), spec.clone(), gamma)?;
    model.solve_method = how;
    Ok(model)
}

/// `f(x) = Θ̃ · [k(x̃⁽ⁱ⁾, x)]ᵢ`.
pub fn predict(model: &ReducedModel, x: &[f64]) -> Result<Vec<f64>> {
    let x = model.prepare(x)?;
    let kv: Vec<f64> = model
        .samples
        .columns()
        .map(|s| model.kernel.eval_ordered(s, &x))
        .collect();
    let out = &model.theta * DMatrix::from_vec(kv.len(), 1, kv);
    Ok(out.iter().copied().collect())
}

/// Predictions for every column of `xs`, as a `d′ × n` matrix.
pub fn predict_batch(model: &ReducedModel, xs: &SampleMatrix, backend: Backend) -> Result<DMatrix<f64>> {
    let xs = model.prepare_all(xs)?;
    let k = gram(&model.kernel, &model.samples, &xs, backend)?;
    Ok(&model.theta * k.values())
}

fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Index of the largest entry of `f(x)`; ties go to the lowest class.
pub fn classify(model: &ReducedModel, x: &[f64]) -> Result<usize> {
    Ok(argmax(predict(model, x)?))
}

pub fn classify_batch(model: &ReducedModel, xs: &SampleMatrix, backend: Backend) -> Result<Vec<usize>> {
    let p = predict_batch(model, xs, backend)?;
    Ok(p.column_iter().map(|c| argmax(c.iter().copied())).collect())
}

/// Fraction of test samples whose predicted class matches `labels`.
pub fn classification_rate(model: &ReducedModel, xs: &SampleMatrix, labels: &[usize], backend: Backend) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if labels.len() != xs.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: labels.len(),
        });
    }
    let predicted = classify_batch(model, xs, backend)?;
    let hits = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean over test samples of the squared prediction error `‖f(x) − y‖²`.
pub fn mean_squared_error(model: &ReducedModel, xs: &SampleMatrix, ys: &OutputMatrix, backend: Backend) -> Result<f64> {
    check_pairs(xs, ys)?;
    if ys.dim() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            found: ys.dim(),
        });
    }
    let p = predict_batch(model, xs, backend)?;
    Ok((p - ys.values()).norm_squared() / xs.len() as f64)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kernel: KernelSpec,
    gamma: f64,
    dim: usize,
    num_samples: usize,
    output_dim: usize,
    /// column-major `dim × num_samples`
    samples: Vec<f64>,
    /// column-major `output_dim × num_samples`
    theta: Vec<f64>,
    normalizer: Option<Normalizer>,
}

impl ReducedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, &self.to_file())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Self::from_file(serde_json::from_reader(r)?)
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kernel: self.kernel.clone(),
            gamma: self.gamma,
            dim: self.samples.dim(),
            num_samples: self.samples.len(),
            output_dim: self.theta.nrows(),
            samples: self.samples.as_matrix().as_slice().to_vec(),
            theta: self.theta.as_slice().to_vec(),
            normalizer: self.normalizer.clone(),
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (supported: {MODEL_FORMAT_VERSION})",
                f.format_version
            )));
        }
        if f.theta.len() != f.output_dim * f.num_samples {
            return Err(Error::Format("coefficient matrix has the wrong length".into()));
        }
        let samples = SampleMatrix::from_column_slice(f.dim, f.num_samples, &f.samples)?;
        let theta = DMatrix::from_vec(f.output_dim, f.num_samples, f.theta);
        let model = Self::new(samples, theta, f.kernel, f.gamma)?;
        match f.normalizer {
            Some(n) => model.with_normalizer(n),
            None => Ok(model),
        }
    }
}
