//! Kernels, sample matrices and Gram-matrix construction.
//!
//! A [`SampleMatrix`] stores `m` samples of dimension `d` as the columns of a
//! column-major `d × m` matrix. [`gram`] evaluates a [`KernelSpec`] between
//! two sample sets; every entry is computed independently so the result does
//! not depend on how the work is split across threads.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Backend;

/// Column-major collection of `m` finite samples in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::Empty("sample matrix has no columns"));
        }
        if data.nrows() == 0 {
            return Err(Error::Empty("samples have dimension zero"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample matrix"));
        }
        Ok(Self { data })
    }

    /// Builds from a column-major buffer of length `d * m`.
    pub fn from_column_slice(d: usize, m: usize, values: &[f64]) -> Result<Self> {
        if values.len() != d * m {
            return Err(Error::DimensionMismatch {
                expected: d * m,
                found: values.len(),
            });
        }
        Self::new(DMatrix::from_column_slice(d, m, values))
    }

    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let first = columns.first().ok_or(Error::Empty("no samples"))?;
        let d = first.as_ref().len();
        let mut buf = Vec::with_capacity(d * columns.len());
        for c in columns {
            let c = c.as_ref();
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: c.len(),
                });
            }
            buf.extend_from_slice(c);
        }
        Self::from_column_slice(d, columns.len(), &buf)
    }

    /// Sample dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice()[j * d..(j + 1) * d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.as_slice().chunks_exact(self.dim())
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("index list"));
        }
        let d = self.dim();
        let mut buf = Vec::with_capacity(d * indices.len());
        for &j in indices {
            if j >= self.len() {
                return Err(Error::InvalidParameter(format!(
                    "sample index {j} out of range for {} samples",
                    self.len()
                )));
            }
            buf.extend_from_slice(self.column(j));
        }
        Ok(Self {
            data: DMatrix::from_vec(d, indices.len(), buf),
        })
    }

    /// Hash of shape and bit patterns, used to tag Gram matrix provenance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.data.shape().hash(&mut h);
        for v in self.data.iter() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// A kernel function together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(-κ‖x − x′‖²)`
    Gaussian { kappa: f64 },
    /// `(κ + xᵀx′)^q`
    Polynomial { kappa: f64, degree: u32 },
    /// `∏_j cos(κ(x_{i_j} − x′_{i_j}))` over the listed pixels.
    CosineProduct { kappa: f64, pixels: Vec<usize> },
    /// `(∏_b (k_b + 1) − 1) / (2^B − 1)` where `k_b` is the cosine-product
    /// kernel on block `b`.
    BlockComposite { kappa: f64, blocks: Vec<Vec<usize>> },
}

impl KernelSpec {
    pub fn gaussian(kappa: f64) -> Result<Self> {
        let s = KernelSpec::Gaussian { kappa };
        s.validate()?;
        Ok(s)
    }

    pub fn polynomial(kappa: f64, degree: u32) -> Result<Self> {
        let s = KernelSpec::Polynomial { kappa, degree };
        s.validate()?;
        Ok(s)
    }

    pub fn cosine_product(kappa: f64, pixels: Vec<usize>) -> Result<Self> {
        let s = KernelSpec::CosineProduct { kappa, pixels };
        s.validate()?;
        Ok(s)
    }

    pub fn block_composite(kappa: f64, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let s = KernelSpec::BlockComposite { kappa, blocks };
        s.validate()?;
        Ok(s)
    }

    pub fn kappa(&self) -> f64 {
        match self {
            KernelSpec::Gaussian { kappa }
            | KernelSpec::Polynomial { kappa, .. }
            | KernelSpec::CosineProduct { kappa, .. }
            | KernelSpec::BlockComposite { kappa, .. } => *kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            KernelSpec::Gaussian { kappa } => {
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return bad(format!("gaussian kappa must be > 0, got {kappa}"));
                }
            }
            KernelSpec::Polynomial { kappa, degree } => {
                if !(kappa.is_finite() && *kappa >= 0.0) {
                    return bad(format!("polynomial kappa must be >= 0, got {kappa}"));
                }
                if *degree == 0 {
                    return bad("polynomial degree must be >= 1".into());
                }
            }
            KernelSpec::CosineProduct { kappa, pixels } => {
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return bad(format!("cosine kappa must be > 0, got {kappa}"));
                }
                if pixels.is_empty() {
                    return bad("cosine-product kernel needs at least one pixel".into());
                }
                check_distinct(std::iter::once(pixels.as_slice()))?;
            }
            KernelSpec::BlockComposite { kappa, blocks } => {
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return bad(format!("composite kappa must be > 0, got {kappa}"));
                }
                if blocks.is_empty() || blocks.iter().any(|b| b.is_empty()) {
                    return bad("composite kernel needs nonempty blocks".into());
                }
                if blocks.len() > 52 {
                    return bad("composite kernel supports at most 52 blocks".into());
                }
                check_distinct(blocks.iter().map(|b| b.as_slice()))?;
            }
        }
        Ok(())
    }

    /// Smallest sample dimension this kernel can be evaluated on.
    pub fn min_dim(&self) -> usize {
        match self {
            KernelSpec::Gaussian { .. } | KernelSpec::Polynomial { .. } => 1,
            KernelSpec::CosineProduct { pixels, .. } => pixels.iter().max().map_or(0, |p| p + 1),
            KernelSpec::BlockComposite { blocks, .. } => blocks.iter().flatten().max().map_or(0, |p| p + 1),
        }
    }

    /// True when `k(x, x) = 1` for every `x`.
    pub fn is_normalized(&self) -> bool {
        !matches!(self, KernelSpec::Polynomial { .. })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        let need = self.min_dim();
        if d < need {
            return Err(Error::DimensionMismatch {
                expected: need,
                found: d,
            });
        }
        Ok(())
    }

    /// Evaluation without argument checks or canonical ordering.
    #[inline]
    fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { kappa } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-kappa * sq).exp()
            }
            KernelSpec::Polynomial { kappa, degree } => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (kappa + dot).powi(*degree as i32)
            }
            KernelSpec::CosineProduct { kappa, pixels } => cosine_product(*kappa, pixels, x, y),
            KernelSpec::BlockComposite { kappa, blocks } => {
                let mut acc = 1.0;
                for b in blocks {
                    acc *= cosine_product(*kappa, b, x, y) + 1.0;
                }
                (acc - 1.0) / composite_scale(blocks.len())
            }
        }
    }

    /// Evaluation with canonical argument ordering, so `k(x, y)` and
    /// `k(y, x)` run the same floating-point operations.
    #[inline]
    pub(crate) fn eval_ordered(&self, x: &[f64], y: &[f64]) -> f64 {
        if canonical_cmp(x, y) == Ordering::Greater {
            self.eval_raw(y, x)
        } else {
            self.eval_raw(x, y)
        }
    }
}

fn check_distinct<'a>(lists: impl Iterator<Item = &'a [usize]>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for list in lists {
        for &p in list {
            if !seen.insert(p) {
                return Err(Error::InvalidParameter(format!(
                    "pixel index {p} appears more than once"
                )));
            }
        }
    }
    Ok(())
}

#[inline]
fn cosine_product(kappa: f64, pixels: &[usize], x: &[f64], y: &[f64]) -> f64 {
    pixels.iter().fold(1.0, |acc, &i| acc * (kappa * (x[i] - y[i])).cos())
}

fn composite_scale(blocks: usize) -> f64 {
    2f64.powi(blocks as i32) - 1.0
}

/// Lexicographic order on the IEEE bit patterns of two vectors.
fn canonical_cmp(x: &[f64], y: &[f64]) -> Ordering {
    for (a, b) in x.iter().zip(y) {
        match a.to_bits().cmp(&b.to_bits()) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Evaluates `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel argument"));
    }
    spec.validate()?;
    spec.check_dim(x.len())?;
    Ok(spec.eval_ordered(x, y))
}

/// `k(x, x)` for every column of `samples`.
pub fn kernel_diagonal(spec: &KernelSpec, samples: &SampleMatrix) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.check_dim(samples.dim())?;
    Ok(samples.columns().map(|c| spec.eval_raw(c, c)).collect())
}

/// Kernel values between sample `i` of `samples` and every sample.
pub(crate) fn kernel_row(spec: &KernelSpec, samples: &SampleMatrix, i: usize) -> Vec<f64> {
    let xi = samples.column(i);
    samples.columns().map(|c| spec.eval_ordered(xi, c)).collect()
}

/// Dense Gram matrix `G_{X,X′}` with provenance tags for both sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    left: u64,
    right: u64,
}

impl GramMatrix {
    /// Wraps precomputed values; both sides get the same tag when `symmetric`.
    pub fn from_values(values: DMatrix<f64>, left: u64, right: u64) -> Self {
        Self { values, left, right }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn left_tag(&self) -> u64 {
        self.left
    }

    pub fn right_tag(&self) -> u64 {
        self.right
    }

    /// Both sides come from the same sample set.
    pub fn is_self_gram(&self) -> bool {
        self.left == self.right
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Column `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        let m = self.values.nrows();
        &self.values.as_slice()[j * m..(j + 1) * m]
    }
}

/// Gram matrix between two sample sets, `values[(i, j)] = k(X_i, X′_j)`.
pub fn gram(spec: &KernelSpec, left: &SampleMatrix, right: &SampleMatrix, backend: Backend) -> Result<GramMatrix> {
    spec.validate()?;
    if left.dim() != right.dim() {
        return Err(Error::DimensionMismatch {
            expected: left.dim(),
            found: right.dim(),
        });
    }
    spec.check_dim(left.dim())?;
    let (lt, rt) = (left.fingerprint(), right.fingerprint());
    if lt == rt && left == right {
        return gram_symmetric_tagged(spec, left, backend, lt);
    }
    let m = left.len();
    let mut buf = vec![0.0; m * right.len()];
    backend.for_each_chunk(&mut buf, m, |j, col| {
        let y = right.column(j);
        for (i, v) in col.iter_mut().enumerate() {
            *v = spec.eval_ordered(left.column(i), y);
        }
    });
    Ok(GramMatrix {
        values: DMatrix::from_vec(m, right.len(), buf),
        left: lt,
        right: rt,
    })
}

/// Gram matrix of a sample set with itself. Only the upper triangle is
/// evaluated; the lower triangle is mirrored so the result is exactly symmetric.
pub fn gram_symmetric(spec: &KernelSpec, samples: &SampleMatrix, backend: Backend) -> Result<GramMatrix> {
    spec.validate()?;
    spec.check_dim(samples.dim())?;
    gram_symmetric_tagged(spec, samples, backend, samples.fingerprint())
}

fn gram_symmetric_tagged(spec: &KernelSpec, samples: &SampleMatrix, backend: Backend, tag: u64) -> Result<GramMatrix> {
    let m = samples.len();
    let mut buf = vec![0.0; m * m];
    backend.for_each_chunk(&mut buf, m, |j, col| {
        let y = samples.column(j);
        for (i, v) in col.iter_mut().enumerate().take(j + 1) {
            *v = spec.eval_ordered(samples.column(i), y);
        }
    });
    const TILE: usize = 64;
    for jb in (0..m).step_by(TILE) {
        for ib in (0..=jb).step_by(TILE) {
            for j in jb..(jb + TILE).min(m) {
                for i in ib..(ib + TILE).min(j) {
                    buf[j + i * m] = buf[i + j * m];
                }
            }
        }
    }
    Ok(GramMatrix {
        values: DMatrix::from_vec(m, m, buf),
        left: tag,
        right: tag,
    })
}

/// Combines per-block Gram matrices into
/// `(∏_b (G_b + 𝟙) − 𝟙) / (2^B − 1)` with elementwise products.
pub fn composite_gram(base: &[GramMatrix]) -> Result<GramMatrix> {
    let first = base
        .first()
        .ok_or(Error::Empty("composite_gram needs at least one Gram matrix"))?;
    let shape = first.values.shape();
    if let Some(g) = base.iter().find(|g| g.values.shape() != shape) {
        return Err(Error::ShapeMismatch {
            expected: shape,
            found: g.values.shape(),
        });
    }
    if base.len() > 52 {
        return Err(Error::InvalidParameter(
            "composite_gram supports at most 52 blocks".into(),
        ));
    }
    let mut acc = DMatrix::from_element(shape.0, shape.1, 1.0);
    for g in base {
        acc.zip_apply(&g.values, |a, b| *a *= b + 1.0);
    }
    let scale = composite_scale(base.len());
    acc.apply(|a| *a = (*a - 1.0) / scale);
    Ok(GramMatrix {
        values: acc,
        left: first.left,
        right: first.right,
    })
}
