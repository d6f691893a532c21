use nalgebra::DMatrix;

use super::source::{GramRows, MemoryMode};
use super::SelectionResult;
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::kernel::{gram_symmetric, kernel_eval, KernelSpec, SampleMatrix};

/// Errors below `FLOOR_RTOL · max_x k(x, x)` are treated as numerically zero.
pub const FLOOR_RTOL: f64 = 1e-14;

// Directly computed errors this far below zero are rounding noise.
const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KfsaOptions {
    /// Threshold `ε > 0`.
    pub epsilon: f64,
    /// Stop after this many samples; `None` means no cap.
    pub max_selected: Option<usize>,
    pub memory: MemoryMode,
    pub backend: Backend,
}

impl KfsaOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_selected: None,
            memory: MemoryMode::default(),
            backend: Backend::default(),
        }
    }

    pub fn max_selected(mut self, cap: usize) -> Self {
        self.max_selected = Some(cap);
        self
    }

    pub fn memory(mut self, memory: MemoryMode) -> Self {
        self.memory = memory;
        self
    }

    pub fn backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }
}

/// Working state of the greedy selector.
///
/// `z` is `m̃ × |remaining|` and column `j` belongs to `remaining[j]`.
#[derive(Debug, Clone)]
pub struct SelectionState {
    selected: Vec<usize>,
    remaining: Vec<usize>,
    z: DMatrix<f64>,
    diag: Vec<f64>,
    // k(x̃ᵢ, ·) over all of X, one entry per selected sample
    rows: Vec<Vec<f64>>,
    backend: Backend,
}

impl SelectionState {
    /// State after choosing `first`: `Z = G_{x₀,X_left} / k(x₀, x₀)`.
    ///
    /// `first_row` holds `k(x₀, x)` for every sample and `diag` holds `k(x, x)`.
    pub fn start(first: usize, first_row: Vec<f64>, diag: Vec<f64>, backend: Backend) -> Result<Self> {
        let m = diag.len();
        if first >= m || first_row.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: first_row.len(),
            });
        }
        let k00 = diag[first];
        if k00.is_nan() || k00 <= 0.0 {
            return Err(Error::DegenerateKernel(format!(
                "k(x0, x0) = {k00} for the initial sample"
            )));
        }
        let remaining: Vec<usize> = (0..m).filter(|&j| j != first).collect();
        let z = DMatrix::from_iterator(1, remaining.len(), remaining.iter().map(|&j| first_row[j] / k00));
        Ok(Self {
            selected: vec![first],
            remaining,
            z,
            diag,
            rows: vec![first_row],
            backend,
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `Δ_j = k(x_j, x_j) − Σᵢ (G_{X̃,X_left} ⊙ Z)_{ij}` for every remaining
    /// candidate, clamped at zero.
    pub fn error_vector(&self) -> Vec<f64> {
        let mt = self.selected.len();
        let zs = self.z.as_slice();
        self.backend.map_range(self.remaining.len(), |j| {
            let xj = self.remaining[j];
            let zj = &zs[j * mt..(j + 1) * mt];
            let proj: f64 = self.rows.iter().zip(zj).map(|(row, z)| row[xj] * z).sum();
            (self.diag[xj] - proj).max(0.0)
        })
    }

    /// Drops every candidate whose `keep` flag is false, along with its column of `Z`.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.remaining.len(), "keep mask length");
        let cols: Vec<usize> = (0..keep.len()).filter(|&j| keep[j]).collect();
        if cols.len() == keep.len() {
            return;
        }
        self.remaining = cols.iter().map(|&j| self.remaining[j]).collect();
        self.z = self.z.select_columns(&cols);
    }

    /// Moves `new_index` from the candidates into `X̃` and replaces `Z` with
    ///
    /// ```text
    /// Z_new = [ Z − Z_{:,new} Λᵀ ]
    ///         [       Λᵀ         ]   (columns of X_left \ {x_new})
    /// Λ = (G_{x_new,X_left} − G_{x_new,X̃} Z) / δ_new
    /// ```
    ///
    /// `new_row` holds `k(x_new, x)` for every sample and `delta_new` must be
    /// `E(X̃, x_new)`. Fails if `delta_new` is not above `floor`.
    pub fn update_z(&mut self, new_index: usize, delta_new: f64, new_row: Vec<f64>, floor: f64) -> Result<()> {
        let pnew = self
            .remaining
            .iter()
            .position(|&j| j == new_index)
            .ok_or_else(|| Error::InvalidParameter(format!("sample {new_index} is not a candidate")))?;
        if new_row.len() != self.diag.len() {
            return Err(Error::DimensionMismatch {
                expected: self.diag.len(),
                found: new_row.len(),
            });
        }
        if !delta_new.is_finite() || delta_new <= floor {
            return Err(Error::DegenerateKernel(format!(
                "pivot error {delta_new:e} is not above the numerical floor {floor:e}"
            )));
        }
        let mt = self.selected.len();
        let r = self.remaining.len();
        let zs = self.z.as_slice();
        let g_new_sel: Vec<f64> = self.selected.iter().map(|&s| new_row[s]).collect();
        let z_new_col = &zs[pnew * mt..(pnew + 1) * mt];
        let remaining = &self.remaining;
        let rows_out = mt + 1;
        let mut out = vec![0.0; rows_out * (r - 1)];
        self.backend.for_each_chunk(&mut out, rows_out, |c, col| {
            let j = if c < pnew { c } else { c + 1 };
            let zj = &zs[j * mt..(j + 1) * mt];
            let dot: f64 = g_new_sel.iter().zip(zj).map(|(g, z)| g * z).sum();
            let lambda = (new_row[remaining[j]] - dot) / delta_new;
            for i in 0..mt {
                col[i] = zj[i] - z_new_col[i] * lambda;
            }
            col[mt] = lambda;
        });
        self.z = DMatrix::from_vec(rows_out, r - 1, out);
        self.remaining.remove(pnew);
        self.selected.push(new_index);
        self.rows.push(new_row);
        Ok(())
    }
}

fn argmax_lowest(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn initial_from_rows(rows: &GramRows<'_>, diag: &[f64], floor: f64, backend: Backend) -> Result<usize> {
    let sums = rows.row_square_sums(backend);
    let scores: Vec<f64> = sums
        .iter()
        .zip(diag)
        .map(|(s, &k)| if k > floor { s / k } else { f64::NEG_INFINITY })
        .collect();
    match argmax_lowest(&scores) {
        Some((i, s)) if s > f64::NEG_INFINITY => Ok(i),
        _ => Err(Error::DegenerateKernel(
            "every sample has k(x, x) below the numerical floor".into(),
        )),
    }
}

fn floor_for(diag: &[f64]) -> f64 {
    FLOOR_RTOL * diag.iter().cloned().fold(0.0, f64::max)
}

/// The sample maximizing `Σ_{x′} k(x, x′)² / k(x, x)`; ties go to the lowest index.
pub fn initial_sample(spec: &KernelSpec, samples: &SampleMatrix, backend: Backend) -> Result<usize> {
    let rows = GramRows::new(spec, samples, MemoryMode::default(), backend)?;
    let diag = rows.diagonal();
    initial_from_rows(&rows, &diag, floor_for(&diag), backend)
}

/// `E(X̃, x) = k(x, x) − G_{x,X̃} G_{X̃,X̃}⁻¹ G_{X̃,x}` by a direct Cholesky solve.
///
/// Slightly negative results from rounding are clamped to zero.
pub fn approximation_error(spec: &KernelSpec, reduced: &SampleMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != reduced.dim() {
        return Err(Error::DimensionMismatch {
            expected: reduced.dim(),
            found: x.len(),
        });
    }
    let g = gram_symmetric(spec, reduced, Backend::Sequential)?.into_values();
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("G_{X̃,X̃} is not positive definite".into()))?;
    let gx = DMatrix::from_iterator(reduced.len(), 1, reduced.columns().map(|c| spec.eval_ordered(c, x)));
    let kxx = kernel_eval(spec, x, x)?;
    let h = chol.solve(&gx);
    let e = kxx - gx.dot(&h);
    if e >= 0.0 {
        Ok(e)
    } else if e >= -NEGATIVE_TOL * kxx.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::SingularSystem(format!(
            "approximation error {e:e} is negative beyond rounding; G_{{X̃,X̃}} is ill-conditioned"
        )))
    }
}

/// Runs kFSA and returns the selected subset.
pub fn kfsa_select(spec: &KernelSpec, samples: &SampleMatrix, opts: &KfsaOptions) -> Result<SelectionResult> {
    kfsa_select_observed(spec, samples, opts, |_| {})
}

/// As [`kfsa_select`], calling `observer` with the state after the initial
/// sample and after every subsequent `Z` update.
pub fn kfsa_select_observed<F>(
    spec: &KernelSpec,
    samples: &SampleMatrix,
    opts: &KfsaOptions,
    mut observer: F,
) -> Result<SelectionResult>
where
    F: FnMut(&SelectionState),
{
    let eps = opts.epsilon;
    if eps == 0.0 {
        return Err(Error::InvalidParameter(
            "epsilon = 0 would select every sample; fit kernel ridge regression on the full set instead".into(),
        ));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {eps}")));
    }
    let cap = opts.max_selected.unwrap_or(usize::MAX);
    if cap == 0 {
        return Err(Error::InvalidParameter("max_selected must be at least 1".into()));
    }
    let backend = opts.backend;
    let rows = GramRows::new(spec, samples, opts.memory, backend)?;
    let diag = rows.diagonal();
    let floor = floor_for(&diag);

    let first = initial_from_rows(&rows, &diag, floor, backend)?;
    let mut errors = vec![diag[first]];
    let mut state = SelectionState::start(first, rows.row(first), diag, backend)?;
    observer(&state);

    let mut max_discarded = 0.0f64;
    let mut truncated = false;
    while !state.remaining.is_empty() {
        let delta = state.error_vector();
        let (pos, delta_new) = argmax_lowest(&delta).expect("nonempty candidate list");
        let new_index = state.remaining[pos];
        let keep: Vec<bool> = delta.iter().map(|&e| e >= eps).collect();
        for (&e, &k) in delta.iter().zip(&keep) {
            if !k {
                max_discarded = max_discarded.max(e);
            }
        }
        if delta_new >= eps && state.selected.len() >= cap {
            truncated = true;
            max_discarded = delta_new;
            break;
        }
        state.retain(&keep);
        if delta_new >= eps {
            if delta_new <= floor {
                return Err(Error::BelowNumericalRank {
                    epsilon: eps,
                    delta: delta_new,
                    floor,
                });
            }
            state.update_z(new_index, delta_new, rows.row(new_index), floor)?;
            errors.push(delta_new);
            observer(&state);
        }
    }

    let steps = state.selected.len();
    Ok(SelectionResult {
        selected: state.selected,
        errors_at_selection: errors,
        final_max_error: Some(max_discarded),
        steps,
        truncated,
    })
}
