//! Temporal train/validation/test splitting and rolling-window extraction.

use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Result};
use crate::field::SnapshotMatrix;
use crate::fmath;

/// Sample counts of the three consecutive blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub k_training: usize,
    pub k_validation: usize,
    pub k_test: usize,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.k_training + self.k_validation + self.k_test
    }

    /// Column ranges of the three blocks.
    pub fn ranges(&self) -> [Range<usize>; 3] {
        let a = self.k_training;
        let b = a + self.k_validation;
        [0..a, a..b, b..b + self.k_test]
    }

    /// Rescales this split to `k` samples keeping the proportions; rounding
    /// residue goes to the test block.
    pub fn scaled_to(&self, k: usize) -> Self {
        let total = self.total().max(1) as f64;
        let k_training = fmath::round((self.k_training as f64 / total) * k as f64) as usize;
        let k_validation = fmath::round((self.k_validation as f64 / total) * k as f64) as usize;
        let k_training = k_training.min(k);
        let k_validation = k_validation.min(k - k_training);
        Self { k_training, k_validation, k_test: k - k_training - k_validation }
    }
}

/// The three blocks of a split; a block is `None` when its count is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Option<SnapshotMatrix>,
    pub validation: Option<SnapshotMatrix>,
    pub test: Option<SnapshotMatrix>,
}

/// Consecutive, order-preserving partition of the columns of `v`.
pub fn split(v: &SnapshotMatrix, spec: SplitSpec) -> Result<Splits> {
    if spec.total() != v.k() {
        return Err(invalid!(
            "split {} + {} + {} does not sum to K = {}",
            spec.k_training,
            spec.k_validation,
            spec.k_test,
            v.k()
        ));
    }
    let block = |r: Range<usize>| if r.is_empty() { Ok(None) } else { v.slice_columns(r.start, r.end).map(Some) };
    let [a, b, c] = spec.ranges();
    Ok(Splits { train: block(a)?, validation: block(b)?, test: block(c)? })
}

/// Which block a window set was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
    Whole,
}

/// One rolling window: input columns `[start, start + q)` and targets at
/// `start + q .. start + q + horizon`, as indices into the source block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
}

/// Rolling windows over a block, stored as index views into `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub source: SnapshotMatrix,
    pub q: usize,
    pub horizon: usize,
    pub role: SplitRole,
    pub windows: Vec<Window>,
}

/// Number of windows of `q` inputs plus `horizon` targets with offset 1.
pub fn window_count(k_sub: usize, q: usize, horizon: usize) -> usize {
    (k_sub + 1).saturating_sub(q + horizon)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn input_indices(&self, w: usize) -> Range<usize> {
        let s = self.windows[w].start;
        s..s + self.q
    }

    pub fn target_indices(&self, w: usize) -> Range<usize> {
        let s = self.windows[w].start + self.q;
        s..s + self.horizon
    }

    /// Input snapshots of window `w`, oldest first.
    pub fn inputs(&self, w: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.input_indices(w).map(move |k| self.source.column(k))
    }

    /// Input snapshots of window `w` concatenated, oldest first.
    pub fn input_flat(&self, w: usize) -> Vec<f64> {
        self.inputs(w).flat_map(|c| c.iter().copied()).collect()
    }

    /// Target snapshots of window `w` concatenated.
    pub fn target_flat(&self, w: usize) -> Vec<f64> {
        self.target_indices(w).flat_map(|k| self.source.column(k).iter().copied()).collect()
    }
}

/// Rolling windows over all columns of `v` with offset 1. Too-short input
/// gives an empty dataset.
pub fn rolling_windows(v: &SnapshotMatrix, q: usize, horizon: usize) -> Result<WindowedDataset> {
    rolling_windows_for(v, q, horizon, SplitRole::Whole)
}

pub fn rolling_windows_for(v: &SnapshotMatrix, q: usize, horizon: usize, role: SplitRole) -> Result<WindowedDataset> {
    if q == 0 {
        return Err(invalid!("window length q must be at least 1"));
    }
    if horizon == 0 {
        return Err(invalid!("horizon must be at least 1"));
    }
    let windows = (0..window_count(v.k(), q, horizon)).map(|start| Window { start }).collect();
    Ok(WindowedDataset { source: v.clone(), q, horizon, role, windows })
}

/// Windows for each block of a split, built after splitting so that no
/// window straddles a block boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWindows {
    pub train: Option<WindowedDataset>,
    pub validation: Option<WindowedDataset>,
    pub test: Option<WindowedDataset>,
}

pub fn split_windows(v: &SnapshotMatrix, spec: SplitSpec, q: usize, horizon: usize) -> Result<SplitWindows> {
    let s = split(v, spec)?;
    let make = |m: Option<SnapshotMatrix>, role| -> Result<Option<WindowedDataset>> {
        m.map(|m| rolling_windows_for(&m, q, horizon, role)).transpose()
    };
    Ok(SplitWindows {
        train: make(s.train, SplitRole::Train)?,
        validation: make(s.validation, SplitRole::Validation)?,
        test: make(s.test, SplitRole::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid2D;
    use alloc::vec;

    fn indexed(k: usize) -> SnapshotMatrix {
        let g = Grid2D::new(1, 1).unwrap();
        SnapshotMatrix::new(g, k, 1.0, (0..k).map(|x| x as f64).collect()).unwrap()
    }

    #[test]
    fn split_reference_boundaries() {
        let spec = SplitSpec { k_training: 184, k_validation: 45, k_test: 122 };
        let s = split(&indexed(351), spec).unwrap();
        assert_eq!(s.train.as_ref().unwrap().k(), 184);
        assert_eq!(s.validation.as_ref().unwrap().column(0), &[184.0]);
        assert_eq!(s.test.as_ref().unwrap().column(0), &[229.0]);

        let spec = SplitSpec { k_training: 105, k_validation: 39, k_test: 157 };
        let s = split(&indexed(301), spec).unwrap();
        assert_eq!(s.validation.unwrap().column(0), &[105.0]);
        assert_eq!(s.test.unwrap().column(0), &[144.0]);
    }

    #[test]
    fn split_small_enumeration() {
        let s = split(&indexed(10), SplitSpec { k_training: 6, k_validation: 2, k_test: 2 }).unwrap();
        assert_eq!(s.train.unwrap().data(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.validation.unwrap().data(), &[6.0, 7.0]);
        assert_eq!(s.test.unwrap().data(), &[8.0, 9.0]);
        assert!(split(&indexed(10), SplitSpec { k_training: 6, k_validation: 2, k_test: 1 }).is_err());
    }

    #[test]
    fn window_boundaries() {
        let d = rolling_windows(&indexed(12), 10, 2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.input_flat(0), (0..10).map(|x| x as f64).collect::<Vec<_>>());
        assert_eq!(d.target_flat(0), vec![10.0, 11.0]);
        assert_eq!(rolling_windows(&indexed(11), 10, 2).unwrap().len(), 0);
        assert_eq!(rolling_windows(&indexed(184), 10, 2).unwrap().len(), 173);
        assert!(rolling_windows(&indexed(5), 0, 2).is_err());
    }

    #[test]
    fn scaled_split_keeps_total() {
        let reference = SplitSpec { k_training: 184, k_validation: 45, k_test: 122 };
        assert_eq!(reference.scaled_to(351), reference);
        let s = reference.scaled_to(140);
        assert_eq!(s.total(), 140);
        assert_eq!(s, SplitSpec { k_training: 73, k_validation: 18, k_test: 49 });
    }

    #[test]
    fn windows_stay_inside_blocks() {
        let spec = SplitSpec { k_training: 20, k_validation: 8, k_test: 15 };
        let w = split_windows(&indexed(43), spec, 4, 2).unwrap();
        let train = w.train.unwrap();
        for i in 0..train.len() {
            assert!(train.target_flat(i).iter().all(|&x| x < 20.0));
        }
        let val = w.validation.unwrap();
        assert_eq!(val.len(), 3);
        assert!((0..val.len()).all(|i| val.input_flat(i).iter().all(|&x| (20.0..28.0).contains(&x))));
    }
}
