use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SelectionResult;
use crate::error::{Error, Result};
use crate::exec::Backend;
use crate::kernel::{gram_symmetric, KernelSpec, SampleMatrix};
use crate::linalg::{pinv_symmetric, PINV_RTOL};

/// How Nyström landmarks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NystromStrategy {
    /// Uniformly without replacement.
    Uniform,
    /// Without replacement, proportional to ridge leverage scores
    /// `diag(G (G + λI)⁻¹)`. `None` uses [`default_ridge`].
    ExactLeverage { lambda: Option<f64> },
}

/// `1e-6 · tr(G) / m`.
pub fn default_ridge(g: &DMatrix<f64>) -> f64 {
    1e-6 * g.trace() / g.nrows() as f64
}

/// `diag(G (G + λI)⁻¹)`.
pub fn ridge_leverage_scores(g: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge lambda must be > 0, got {lambda}"
        )));
    }
    let m = g.nrows();
    let shifted = g + DMatrix::identity(m, m) * lambda;
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("G + lambda*I is not positive definite".into()))?;
    // G (G + λI)⁻¹ = I − λ (G + λI)⁻¹
    let inv = chol.inverse();
    Ok((0..m).map(|i| (1.0 - lambda * inv[(i, i)]).max(0.0)).collect())
}

/// Draws `budget` distinct landmarks. Indices are returned in ascending order.
pub fn nystrom_select(
    spec: &KernelSpec,
    samples: &SampleMatrix,
    budget: usize,
    strategy: NystromStrategy,
    seed: u64,
    backend: Backend,
) -> Result<SelectionResult> {
    let m = samples.len();
    if budget == 0 || budget > m {
        return Err(Error::InvalidParameter(format!(
            "Nyström budget must be in 1..={m}, got {budget}"
        )));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<usize> = if budget == m {
        (0..m).collect()
    } else {
        match strategy {
            NystromStrategy::Uniform => index::sample(&mut rng, m, budget).into_vec(),
            NystromStrategy::ExactLeverage { lambda } => {
                let g = gram_symmetric(spec, samples, backend)?.into_values();
                let lambda = lambda.unwrap_or_else(|| default_ridge(&g));
                let scores = ridge_leverage_scores(&g, lambda)?;
                index::sample_weighted(&mut rng, m, |i| scores[i].max(f64::MIN_POSITIVE), budget)
                    .map_err(|e| Error::InvalidParameter(format!("leverage sampling failed: {e}")))?
                    .into_vec()
            }
        }
    };
    selected.sort_unstable();
    Ok(SelectionResult {
        steps: selected.len(),
        selected,
        errors_at_selection: Vec::new(),
        final_max_error: None,
        truncated: false,
    })
}

/// `‖G − C W⁺ Cᵀ‖_F` with `C = G_{X,X̃}` and `W = G_{X̃,X̃}`.
pub fn nystrom_residual(
    spec: &KernelSpec,
    samples: &SampleMatrix,
    selected: &[usize],
    backend: Backend,
) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Empty("landmark set"));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= samples.len()) {
        return Err(Error::InvalidParameter(format!("landmark index {bad} out of range")));
    }
    let g = gram_symmetric(spec, samples, backend)?.into_values();
    let c = g.select_columns(selected);
    let w = c.select_rows(selected);
    let approx = match w.clone().cholesky() {
        Some(chol) => &c * chol.solve(&c.transpose()),
        None => &c * pinv_symmetric(&w, PINV_RTOL)? * c.transpose(),
    };
    Ok((g - approx).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(m: usize) -> SampleMatrix {
        SampleMatrix::from_columns(
            &(0..m)
                .map(|j| vec![(j as f64 * 0.37).sin(), (j as f64 * 0.11).cos()])
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_is_seeded_and_distinct() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = data(50);
        let a = nystrom_select(&k, &x, 10, NystromStrategy::Uniform, 7, Backend::Sequential).unwrap();
        let b = nystrom_select(&k, &x, 10, NystromStrategy::Uniform, 7, Backend::Sequential).unwrap();
        assert_eq!(a, b);
        let mut s = a.selected.clone();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert!(a.final_max_error.is_none());
    }

    #[test]
    fn full_budget_returns_everything() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = data(12);
        for strat in [
            NystromStrategy::Uniform,
            NystromStrategy::ExactLeverage { lambda: None },
        ] {
            let r = nystrom_select(&k, &x, 12, strat, 1, Backend::Sequential).unwrap();
            assert_eq!(r.selected, (0..12).collect::<Vec<_>>());
            assert!(nystrom_residual(&k, &x, &r.selected, Backend::Sequential).unwrap() < 1e-6);
        }
    }

    #[test]
    fn budget_bounds() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let x = data(5);
        assert!(nystrom_select(&k, &x, 0, NystromStrategy::Uniform, 0, Backend::Sequential).is_err());
        assert!(nystrom_select(&k, &x, 6, NystromStrategy::Uniform, 0, Backend::Sequential).is_err());
    }

    #[test]
    fn leverage_scores_match_direct_formula() {
        let k = KernelSpec::gaussian(2.0).unwrap();
        let g = gram_symmetric(&k, &data(15), Backend::Sequential)
            .unwrap()
            .into_values();
        let lam = 0.05;
        let s = ridge_leverage_scores(&g, lam).unwrap();
        let direct = &g * (&g + DMatrix::identity(15, 15) * lam).try_inverse().unwrap();
        for i in 0..15 {
            assert!((s[i] - direct[(i, i)]).abs() < 1e-10);
        }
        let total: f64 = s.iter().sum();
        assert!(total > 0.0 && total <= 15.0);
        assert!(ridge_leverage_scores(&g, 0.0).is_err());
    }

    #[test]
    fn leverage_sampling_is_seeded() {
        let k = KernelSpec::gaussian(2.0).unwrap();
        let x = data(40);
        let strat = NystromStrategy::ExactLeverage { lambda: Some(1e-3) };
        let a = nystrom_select(&k, &x, 8, strat, 3, Backend::Sequential).unwrap();
        let b = nystrom_select(&k, &x, 8, strat, 3, Backend::Parallel).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.selected.len(), 8);
    }
}
