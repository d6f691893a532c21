use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;

/// Per-dimension min-max scaling `x̂ᵢ = (xᵢ − lᵢ) / (uᵢ − lᵢ)`.
///
/// Constants are fit once on training data and reused verbatim for any
/// later input, so unseen values may land outside `[0, 1]`. Dimensions that
/// were constant during fitting map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Normalizer {
    pub fn fit(samples: &SampleMatrix) -> Self {
        let d = samples.dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for x in samples.columns() {
            for i in 0..d {
                lower[i] = lower[i].min(x[i]);
                upper[i] = upper[i].max(x[i]);
            }
        }
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| if u > l { (v - l) / (u - l) } else { 0.0 })
            .collect())
    }

    pub fn apply(&self, samples: &SampleMatrix) -> Result<SampleMatrix> {
        let mut buf = Vec::with_capacity(samples.dim() * samples.len());
        for x in samples.columns() {
            buf.extend(self.apply_point(x)?);
        }
        SampleMatrix::from_column_slice(samples.dim(), samples.len(), &buf)
    }
}

/// Fits a normalizer on training samples.
pub fn fit_normalizer(samples: &SampleMatrix) -> Normalizer {
    Normalizer::fit(samples)
}

pub fn apply_normalizer(n: &Normalizer, samples: &SampleMatrix) -> Result<SampleMatrix> {
    n.apply(samples)
}
