use crate::error::Result;
use crate::exec::Backend;
use crate::kernel::{gram_symmetric, kernel_diagonal, kernel_row, GramMatrix, KernelSpec, SampleMatrix};

/// Where the selector gets kernel rows from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryMode {
    /// Materialize the full `m × m` Gram matrix once.
    Dense,
    /// Recompute `k(x_i, ·)` whenever a row is needed.
    OnDemand,
    /// Dense unless the Gram matrix would exceed this many bytes.
    Budget(usize),
}

impl Default for MemoryMode {
    fn default() -> Self {
        MemoryMode::Budget(2 << 30)
    }
}

impl MemoryMode {
    pub(crate) fn is_dense_for(self, m: usize) -> bool {
        match self {
            MemoryMode::Dense => true,
            MemoryMode::OnDemand => false,
            MemoryMode::Budget(bytes) => m.saturating_mul(m).saturating_mul(8) <= bytes,
        }
    }
}

/// Kernel rows over a fixed sample set.
pub(crate) enum GramRows<'a> {
    Dense(GramMatrix),
    OnDemand {
        spec: &'a KernelSpec,
        samples: &'a SampleMatrix,
    },
}

impl<'a> GramRows<'a> {
    pub fn new(spec: &'a KernelSpec, samples: &'a SampleMatrix, mode: MemoryMode, backend: Backend) -> Result<Self> {
        spec.validate()?;
        if mode.is_dense_for(samples.len()) {
            Ok(GramRows::Dense(gram_symmetric(spec, samples, backend)?))
        } else {
            // surfaces dimension errors up front
            kernel_diagonal(spec, samples)?;
            Ok(GramRows::OnDemand { spec, samples })
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            GramRows::Dense(g) => (0..g.nrows()).map(|i| g.get(i, i)).collect(),
            GramRows::OnDemand { spec, samples } => samples.columns().map(|c| spec.eval_ordered(c, c)).collect(),
        }
    }

    /// `k(x_i, x_j)` for all `j`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        match self {
            // symmetric, so column i is row i
            GramRows::Dense(g) => g.column(i).to_vec(),
            GramRows::OnDemand { spec, samples } => kernel_row(spec, samples, i),
        }
    }

    /// `Σ_j k(x_i, x_j)²` for every `i`.
    pub fn row_square_sums(&self, backend: Backend) -> Vec<f64> {
        match self {
            GramRows::Dense(g) => backend.map_range(g.ncols(), |i| g.column(i).iter().map(|v| v * v).sum()),
            GramRows::OnDemand { spec, samples } => backend.map_range(samples.len(), |i| {
                let xi = samples.column(i);
                samples
                    .columns()
                    .map(|c| {
                        let v = spec.eval_ordered(xi, c);
                        v * v
                    })
                    .sum()
            }),
        }
    }
}
