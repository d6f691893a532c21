//! Dataset ingestion, preprocessing and synthetic generation.

pub mod cache;
pub mod calcofi;
pub mod fpu;
pub mod mnist;
pub mod normalize;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;
use crate::regression::OutputMatrix;

pub use calcofi::{load_calcofi_csv, load_table_csv, write_table_csv, CalcofiColumns, TableLoad};
pub use fpu::{fpu_rhs, generate_fpu, FPU_BETA};
pub use mnist::{
    block_layout_14x14, downsample_2x2, downsample_and_normalize, load_mnist_dir, load_mnist_idx, mnist_kernel,
    normalize_max, read_idx, write_idx, IdxArray,
};
pub use normalize::{apply_normalizer, fit_normalizer, Normalizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Paired inputs and outputs, column `j` of `x` belonging to column `j` of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: SampleMatrix,
    pub y: OutputMatrix,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(x: SampleMatrix, y: OutputMatrix, split: Split) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(Self { x, y, split })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Class labels for one-hot datasets.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.y.labels()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.x.select(indices)?, self.y.select(indices)?, self.split)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Seeded disjoint train/test partition.
    pub fn partition(&self, n_train: usize, n_test: usize, seed: u64) -> Result<(Self, Self)> {
        let m = self.len();
        if n_train == 0 || n_test == 0 || n_train + n_test > m {
            return Err(Error::InvalidParameter(format!(
                "cannot take {n_train} train + {n_test} test samples from {m}"
            )));
        }
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut seeded_rng(seed));
        let (train, rest) = idx.split_at_mut(n_train);
        let test = &mut rest[..n_test];
        train.sort_unstable();
        test.sort_unstable();
        Ok((
            self.select(train)?.with_split(Split::Train),
            self.select(test)?.with_split(Split::Test),
        ))
    }
}

/// The generator behind every seeded draw in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one 64-bit output.
pub fn unit_draw<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `total` indices drawn without replacement so that every class keeps its
/// share of the data (largest-remainder rounding, ties to the lower class).
/// The result is sorted.
pub fn stratified_subsample(labels: &[usize], total: usize, seed: u64) -> Result<Vec<usize>> {
    let m = labels.len();
    if total == 0 || total > m {
        return Err(Error::InvalidParameter(format!(
            "subsample size {total} must be in 1..={m}"
        )));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (j, &c) in labels.iter().enumerate() {
        members[c].push(j);
    }
    let mut quota: Vec<usize> = members.iter().map(|v| v.len() * total / m).collect();
    let mut left = total - quota.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..classes).collect();
    // remainder of len·total/m, compared exactly as integers
    order.sort_by_key(|&c| std::cmp::Reverse((members[c].len() * total) % m));
    for c in order {
        if left == 0 {
            break;
        }
        if quota[c] < members[c].len() {
            quota[c] += 1;
            left -= 1;
        }
    }
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(total);
    for (c, mut v) in members.into_iter().enumerate() {
        v.shuffle(&mut rng);
        out.extend_from_slice(&v[..quota[c]]);
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn unit_draw_range() {
        let mut rng = seeded_rng(1);
        for _ in 0..1000 {
            let u = unit_draw(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
        assert_eq!(unit_draw(&mut seeded_rng(9)), unit_draw(&mut seeded_rng(9)));
    }

    #[test]
    fn stratified_keeps_proportions() {
        let labels: Vec<usize> = (0..1000).map(|j| j % 10).collect();
        let s = stratified_subsample(&labels, 200, 4).unwrap();
        assert_eq!(s.len(), 200);
        for c in 0..10 {
            assert_eq!(s.iter().filter(|&&j| labels[j] == c).count(), 20);
        }
        assert_eq!(s, stratified_subsample(&labels, 200, 4).unwrap());
        assert_ne!(s, stratified_subsample(&labels, 200, 5).unwrap());
        assert!(stratified_subsample(&labels, 1001, 0).is_err());
    }

    #[test]
    fn stratified_rounding_hits_total() {
        let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2, 2, 2];
        for total in 1..=labels.len() {
            let s = stratified_subsample(&labels, total, 0).unwrap();
            assert_eq!(s.len(), total);
            let mut d = s.clone();
            d.dedup();
            assert_eq!(d.len(), total);
        }
    }

    #[test]
    fn partition_is_disjoint() {
        let x = SampleMatrix::from_columns(&(0..20).map(|j| vec![j as f64]).collect::<Vec<_>>()).unwrap();
        let y = OutputMatrix::regression(DMatrix::from_fn(1, 20, |_, j| j as f64)).unwrap();
        let ds = LabeledDataset::new(x, y, Split::Train).unwrap();
        let (a, b) = ds.partition(12, 5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (12, 5));
        assert_eq!(b.split, Split::Test);
        for p in a.x.columns() {
            assert!(b.x.columns().all(|q| q != p));
        }
        assert!(ds.partition(15, 6, 0).is_err());
    }
}
