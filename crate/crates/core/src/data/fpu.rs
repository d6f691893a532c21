//! Synthetic samples of the Fermi–Pasta–Ulam chain
//! `ẍᵢ = (xᵢ₊₁ − 2xᵢ + xᵢ₋₁) + β((xᵢ₊₁ − xᵢ)³ − (xᵢ − xᵢ₋₁)³)` with fixed ends.

use nalgebra::DMatrix;

use super::{seeded_rng, unit_draw, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;
use crate::regression::OutputMatrix;

pub const FPU_BETA: f64 = 0.7;

/// Accelerations of all oscillators at displacement `x`, with `x₀ = x_{d+1} = 0`.
pub fn fpu_rhs(x: &[f64], beta: f64) -> Vec<f64> {
    let d = x.len();
    let at = |i: isize| if i < 0 || i as usize >= d { 0.0 } else { x[i as usize] };
    (0..d as isize)
        .map(|i| {
            let (l, c, r) = (at(i - 1), at(i), at(i + 1));
            (r - 2.0 * c + l) + beta * ((r - c).powi(3) - (c - l).powi(3))
        })
        .collect()
}

/// `m` displacements uniform in `[−0.1, 0.1]^d` with their accelerations.
///
/// Draws come from ChaCha8 seeded with `seed`, one 53-bit draw per entry,
/// filled sample by sample.
pub fn generate_fpu(d: usize, m: usize, beta: f64, seed: u64) -> Result<LabeledDataset> {
    if d == 0 || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "FPU needs d >= 1 and m >= 1, got d={d}, m={m}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let xs: Vec<f64> = (0..d * m).map(|_| -0.1 + 0.2 * unit_draw(&mut rng)).collect();
    let ys: Vec<f64> = xs.chunks_exact(d).flat_map(|x| fpu_rhs(x, beta)).collect();
    let x = SampleMatrix::from_column_slice(d, m, &xs)?;
    let y = OutputMatrix::regression(DMatrix::from_vec(d, m, ys))?;
    LabeledDataset::new(x, y, Split::Train)
}
