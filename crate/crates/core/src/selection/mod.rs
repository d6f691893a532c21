//! Greedy feature-space sample selection (kFSA) and a Nyström baseline.
//!
//! kFSA grows a subset `X̃ ⊂ X` one sample at a time, always adding the
//! sample whose feature vector is worst approximated by the span of the
//! feature vectors already chosen. The squared residual
//!
//! ```text
//! E(X̃, x) = k(x, x) − G_{x,X̃} G_{X̃,X̃}⁻¹ G_{X̃,x}
//! ```
//!
//! is evaluated for all candidates at once from `Z = G_{X̃,X̃}⁻¹ G_{X̃,X_left}`.
//! `Z` is never obtained by a linear solve: when a sample joins `X̃` it is
//! updated with a rank-one correction derived from the blockwise inverse of
//! the enlarged Gram matrix, so one step costs `O(m̃ · |X_left|)`.

mod kfsa;
mod nystrom;
mod source;

pub use kfsa::{
    approximation_error, initial_sample, kfsa_select, kfsa_select_observed, KfsaOptions, SelectionState, FLOOR_RTOL,
};
pub use nystrom::{default_ridge, nystrom_residual, nystrom_select, ridge_leverage_scores, NystromStrategy};
pub use source::MemoryMode;

/// Outcome of a selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected indices into `X`, in the order they were chosen.
    pub selected: Vec<usize>,
    /// Error of each sample at the moment it was selected; the first entry
    /// is `k(x₀, x₀)`. Empty for Nyström selections.
    pub errors_at_selection: Vec<f64>,
    /// For kFSA: the largest error any discarded sample had when it was
    /// discarded (an upper bound on its final error), or, when truncated, the
    /// largest error still above the threshold. `None` for Nyström.
    pub final_max_error: Option<f64>,
    /// Number of selected samples.
    pub steps: usize,
    /// Stopped by `max_selected` before every candidate was resolved.
    pub truncated: bool,
}
