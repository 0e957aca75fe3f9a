//! 3D voxel grids, masks, datasets, and weight maps.
//!
//! Linear indexing is x-fastest: `index = x + nx * (y + ny * z)`. The masked
//! index map is a bijection between `0..p` and the in-mask voxels, in
//! ascending linear-index order. All types are immutable after construction
//! and safe to share read-only across workers.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Whether targets are two-class labels or real-valued responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

/// A 3D voxel grid with a boolean in-mask indicator per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    dims: (usize, usize, usize),
    mask: Vec<bool>,
    masked_to_full: Vec<usize>,
    full_to_masked: Vec<Option<usize>>,
}

impl VolumeGrid {
    pub fn new(dims: (usize, usize, usize), mask: Vec<bool>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArg(format!(
                "grid dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        if mask.len() != nx * ny * nz {
            return Err(Error::DimMismatch(format!(
                "mask has {} entries, grid has {} voxels",
                mask.len(),
                nx * ny * nz
            )));
        }
        let masked_to_full: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if masked_to_full.is_empty() {
            return Err(Error::InvalidArg("mask selects no voxels".into()));
        }
        let mut full_to_masked = vec![None; mask.len()];
        for (m, &f) in masked_to_full.iter().enumerate() {
            full_to_masked[f] = Some(m);
        }
        Ok(VolumeGrid {
            dims,
            mask,
            masked_to_full,
            full_to_masked,
        })
    }

    /// Grid whose mask includes every voxel.
    pub fn full(dims: (usize, usize, usize)) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        VolumeGrid::new(dims, vec![true; n]).expect("full mask is always valid")
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Total voxel count, in and out of mask.
    pub fn volume_len(&self) -> usize {
        self.mask.len()
    }

    /// Number of in-mask voxels (the feature-space dimension p).
    pub fn masked_len(&self) -> usize {
        self.masked_to_full.len()
    }

    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims.0 * (y + self.dims.1 * z)
    }

    pub fn coords(&self, full_index: usize) -> (usize, usize, usize) {
        let (nx, ny, _) = self.dims;
        let x = full_index % nx;
        let y = (full_index / nx) % ny;
        let z = full_index / (nx * ny);
        (x, y, z)
    }

    /// Masked index of a full-volume position, or `None` when the voxel is
    /// outside the mask. Out-of-range indices are a usage error.
    pub fn masked_index(&self, full_index: usize) -> Result<Option<usize>> {
        self.full_to_masked
            .get(full_index)
            .copied()
            .ok_or_else(|| {
                Error::InvalidArg(format!(
                    "full index {} out of range for a {} voxel grid",
                    full_index,
                    self.volume_len()
                ))
            })
    }

    /// Full-volume position of a masked index.
    pub fn full_index(&self, masked_index: usize) -> usize {
        self.masked_to_full[masked_index]
    }

    pub fn masked_to_full(&self) -> &[usize] {
        &self.masked_to_full
    }

    /// Restrict the mask to a subset of the current masked indices. `kept`
    /// must be strictly increasing.
    pub fn submask(&self, kept: &[usize]) -> Result<VolumeGrid> {
        let mut mask = vec![false; self.volume_len()];
        let mut prev = None;
        for &m in kept {
            if m >= self.masked_len() {
                return Err(Error::InvalidArg(format!(
                    "kept index {m} out of range for p={}",
                    self.masked_len()
                )));
            }
            if prev.is_some_and(|p| p >= m) {
                return Err(Error::InvalidArg(
                    "kept indices must be strictly increasing".into(),
                ));
            }
            prev = Some(m);
            mask[self.masked_to_full[m]] = true;
        }
        VolumeGrid::new(self.dims, mask)
    }

    pub fn same_geometry(&self, other: &VolumeGrid) -> bool {
        self.dims == other.dims && self.mask == other.mask
    }
}

/// Design matrix X (n samples by p masked voxels) plus targets y.
///
/// Classification targets are stored as -1/+1 regardless of the original
/// label encoding.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub grid: Arc<VolumeGrid>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, grid: Arc<VolumeGrid>) -> Result<Self> {
        if x.ncols() != grid.masked_len() {
            return Err(Error::DimMismatch(format!(
                "design matrix has {} columns, grid mask has {} voxels",
                x.ncols(),
                grid.masked_len()
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimMismatch(format!(
                "design matrix has {} rows, targets have {} entries",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Dataset { x, y, grid })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Check the target encoding against a task: classification targets must
    /// be -1/+1 with both classes present.
    pub fn validate_for(&self, task: TaskKind) -> Result<()> {
        if task == TaskKind::Classification {
            let mut pos = 0usize;
            let mut neg = 0usize;
            for &v in self.y.iter() {
                if v == 1.0 {
                    pos += 1;
                } else if v == -1.0 {
                    neg += 1;
                } else {
                    return Err(Error::InvalidArg(format!(
                        "classification target {v} is not -1 or +1"
                    )));
                }
            }
            if pos == 0 || neg == 0 {
                return Err(Error::SingleClass);
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v > 0.0).count();
        (pos, self.y.len() - pos)
    }

    /// Fraction of samples in the most common class.
    pub fn majority_rate(&self) -> f64 {
        let (pos, neg) = self.class_counts();
        pos.max(neg) as f64 / self.y.len() as f64
    }

    /// Copy a subset of samples, keeping the grid.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            grid: Arc::clone(&self.grid),
        }
    }

    /// Copy a subset of features onto a reduced grid. `kept` holds masked
    /// indices of the current grid; `grid` must be the matching submask.
    pub fn restrict_columns(&self, kept: &[usize], grid: Arc<VolumeGrid>) -> Result<Dataset> {
        if grid.masked_len() != kept.len() {
            return Err(Error::DimMismatch(format!(
                "reduced grid has {} voxels, kept list has {}",
                grid.masked_len(),
                kept.len()
            )));
        }
        Dataset::new(self.x.select(Axis(1), kept), self.y.clone(), grid)
    }
}

/// A fitted linear decoder: coefficients over the masked feature space plus
/// an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct WeightMap {
    pub values: Array1<f64>,
    pub intercept: f64,
    pub grid: Arc<VolumeGrid>,
}

impl WeightMap {
    pub fn new(values: Array1<f64>, intercept: f64, grid: Arc<VolumeGrid>) -> Result<Self> {
        if values.len() != grid.masked_len() {
            return Err(Error::DimMismatch(format!(
                "weight vector has {} entries, grid mask has {} voxels",
                values.len(),
                grid.masked_len()
            )));
        }
        Ok(WeightMap {
            values,
            intercept,
            grid,
        })
    }

    pub fn zeros(grid: Arc<VolumeGrid>) -> Self {
        let p = grid.masked_len();
        WeightMap {
            values: Array1::zeros(p),
            intercept: 0.0,
            grid,
        }
    }

    /// Scatter the masked coefficients into a full-volume array, zero outside
    /// the mask.
    pub fn expand_to_volume(&self) -> Array1<f64> {
        let mut volume = Array1::zeros(self.grid.volume_len());
        for (m, &f) in self.grid.masked_to_full().iter().enumerate() {
            volume[f] = self.values[m];
        }
        volume
    }

    pub fn n_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_2x2x2_full() -> VolumeGrid {
        VolumeGrid::full((2, 2, 2))
    }

    #[test]
    fn masked_index_is_identity_under_full_mask() {
        let g = grid_2x2x2_full();
        assert_eq!(g.masked_index(5).unwrap(), Some(5));
    }

    #[test]
    fn masked_index_single_voxel_mask() {
        let mut mask = vec![false; 8];
        mask[3] = true;
        let g = VolumeGrid::new((2, 2, 2), mask).unwrap();
        assert_eq!(g.masked_index(3).unwrap(), Some(0));
        assert_eq!(g.masked_len(), 1);
    }

    #[test]
    fn masked_index_outside_mask_is_none() {
        let mut mask = vec![true; 8];
        mask[0] = false;
        let g = VolumeGrid::new((2, 2, 2), mask).unwrap();
        assert_eq!(g.masked_index(0).unwrap(), None);
    }

    #[test]
    fn masked_index_out_of_range_is_usage_error() {
        let g = grid_2x2x2_full();
        assert!(matches!(g.masked_index(8), Err(Error::InvalidArg(_))));
    }

    #[test]
    fn linear_index_is_x_fastest() {
        let g = VolumeGrid::full((3, 4, 5));
        assert_eq!(g.linear_index(1, 0, 0), 1);
        assert_eq!(g.linear_index(0, 1, 0), 3);
        assert_eq!(g.linear_index(0, 0, 1), 12);
        assert_eq!(g.coords(12 + 3 + 1), (1, 1, 1));
    }

    #[test]
    fn expand_full_mask_is_identity() {
        let g = Arc::new(grid_2x2x2_full());
        let v = Array1::from(vec![1.0, -2.0, 3.0, 0.0, 5.0, -6.0, 7.0, 8.0]);
        let wm = WeightMap::new(v.clone(), 0.0, g).unwrap();
        assert_eq!(wm.expand_to_volume(), v);
    }

    #[test]
    fn expand_zero_vector_is_zero_volume() {
        let g = Arc::new(grid_2x2x2_full());
        let wm = WeightMap::zeros(g);
        assert!(wm.expand_to_volume().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expand_single_voxel_mask() {
        let mut mask = vec![false; 8];
        mask[6] = true;
        let g = Arc::new(VolumeGrid::new((2, 2, 2), mask).unwrap());
        let wm = WeightMap::new(Array1::from(vec![2.5]), 0.0, g).unwrap();
        let vol = wm.expand_to_volume();
        assert_eq!(vol[6], 2.5);
        assert_eq!(vol.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn dataset_rejects_column_mismatch() {
        let g = Arc::new(grid_2x2x2_full());
        let x = Array2::zeros((3, 5));
        let y = Array1::zeros(3);
        assert!(matches!(
            Dataset::new(x, y, g),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn classification_requires_both_classes() {
        let g = Arc::new(VolumeGrid::full((1, 1, 1)));
        let x = Array2::zeros((2, 1));
        let y = Array1::from(vec![1.0, 1.0]);
        let d = Dataset::new(x, y, g).unwrap();
        assert!(matches!(
            d.validate_for(TaskKind::Classification),
            Err(Error::SingleClass)
        ));
    }

    proptest! {
        #[test]
        fn masked_full_round_trip(dims in (1usize..5, 1usize..5, 1usize..5),
                                  seed_bits in proptest::collection::vec(any::<bool>(), 1..125)) {
            let n = dims.0 * dims.1 * dims.2;
            let mut mask: Vec<bool> = (0..n).map(|i| seed_bits[i % seed_bits.len()]).collect();
            // guarantee a nonempty mask
            mask[0] = true;
            let g = VolumeGrid::new(dims, mask).unwrap();
            for m in 0..g.masked_len() {
                let f = g.full_index(m);
                prop_assert_eq!(g.masked_index(f).unwrap(), Some(m));
            }
            for f in 0..g.volume_len() {
                if let Some(m) = g.masked_index(f).unwrap() {
                    prop_assert_eq!(g.full_index(m), f);
                } else {
                    prop_assert!(!g.mask()[f]);
                }
            }
        }

        #[test]
        fn expand_then_remask_recovers_weights(vals in proptest::collection::vec(-10.0f64..10.0, 1..30)) {
            let n = vals.len().next_multiple_of(2).max(2);
            let mut mask = vec![false; n];
            for (i, m) in mask.iter_mut().enumerate() {
                *m = i < vals.len();
            }
            let g = Arc::new(VolumeGrid::new((n, 1, 1), mask).unwrap());
            let wm = WeightMap::new(Array1::from(vals.clone()), 0.0, Arc::clone(&g)).unwrap();
            let vol = wm.expand_to_volume();
            let sum_abs_w: f64 = vals.iter().map(|v| v.abs()).sum();
            let sum_abs_vol: f64 = vol.iter().map(|v| v.abs()).sum();
            prop_assert_eq!(sum_abs_w, sum_abs_vol);
            for m in 0..g.masked_len() {
                prop_assert_eq!(vol[g.full_index(m)], vals[m]);
            }
        }
    }
}
