//! Shrinkage operators and the grid neighborhood builder.
//!
//! Three operators share the same shape: every coordinate is scaled by
//! `(1 - t/g)+` where `g` is a norm-like quantity. For plain soft-thresholding
//! `g = |w_i|`, for the group operator `g` is the Euclidean norm of the
//! coordinate's group, and for social shrinkage `g` is the weighted Euclidean
//! norm of the coordinate's local neighborhood while only the center
//! coordinate is updated. The social operator is evaluated entirely from the
//! input vector, so the per-voxel updates are order-independent.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::volume::VolumeGrid;

/// Default relative weight of the six face neighbors in a grid neighborhood.
pub const DEFAULT_NEIGHBOR_WEIGHT: f64 = 0.7;

/// Per-voxel neighborhoods with nonnegative weights, stored CSR-style.
///
/// Interpretation note: the neighborhood of voxel `i` includes `i` itself
/// with weight 1, so the neighborhood norm always dominates `|w_i|` and a
/// large coefficient cannot be annihilated by zero-valued neighbors.
/// Neighborhoods are truncated at mask and volume boundaries; weights are
/// not renormalized.
#[derive(Debug, Clone)]
pub struct NeighborhoodStructure {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl NeighborhoodStructure {
    /// Build from per-voxel `(neighbor, weight)` lists, checking that every
    /// voxel appears in its own list with weight 1, indices are in range,
    /// and lists contain no duplicates.
    pub fn from_lists(p: usize, lists: &[Vec<(usize, f64)>]) -> Result<Self> {
        if lists.len() != p {
            return Err(Error::DimMismatch(format!(
                "{} neighbor lists for p={p}",
                lists.len()
            )));
        }
        let mut offsets = Vec::with_capacity(p + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (i, list) in lists.iter().enumerate() {
            let mut self_weight = None;
            for &(j, a) in list {
                if j >= p {
                    return Err(Error::InvalidArg(format!(
                        "neighbor {j} of voxel {i} out of range for p={p}"
                    )));
                }
                if !(a >= 0.0) {
                    return Err(Error::InvalidArg(format!(
                        "negative or NaN neighborhood weight {a} at voxel {i}"
                    )));
                }
                if list.iter().filter(|&&(k, _)| k == j).count() > 1 {
                    return Err(Error::InvalidArg(format!(
                        "duplicate neighbor {j} in the list of voxel {i}"
                    )));
                }
                if j == i {
                    self_weight = Some(a);
                }
                neighbors.push(j);
                weights.push(a);
            }
            if self_weight != Some(1.0) {
                return Err(Error::InvalidArg(format!(
                    "voxel {i} must appear in its own neighborhood with weight 1"
                )));
            }
            offsets.push(neighbors.len());
        }
        Ok(NeighborhoodStructure {
            offsets,
            neighbors,
            weights,
        })
    }

    /// Neighborhoods containing only the voxel itself; social shrinkage over
    /// this structure reduces to plain soft-thresholding.
    pub fn self_only(p: usize) -> Self {
        NeighborhoodStructure {
            offsets: (0..=p).collect(),
            neighbors: (0..p).collect(),
            weights: vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors_of(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        range
            .clone()
            .map(move |k| (self.neighbors[k], self.weights[k]))
    }

    /// Weighted neighborhood norm `sqrt(sum_j a_j w_j^2)` for voxel `i`.
    pub fn weighted_norm(&self, i: usize, w: &ArrayView1<f64>) -> f64 {
        let mut sq = 0.0;
        for k in self.offsets[i]..self.offsets[i + 1] {
            let wj = w[self.neighbors[k]];
            sq += self.weights[k] * wj * wj;
        }
        sq.sqrt()
    }
}

/// Build the 6-connected grid neighborhoods: each in-mask voxel is coupled to
/// its in-mask face neighbors with the given weight (center weight 1).
/// Out-of-mask or out-of-bounds neighbors are simply absent.
pub fn build_grid_neighborhoods(grid: &VolumeGrid, neighbor_weight: f64) -> NeighborhoodStructure {
    assert!(
        neighbor_weight >= 0.0,
        "neighbor weight must be nonnegative, got {neighbor_weight}"
    );
    let p = grid.masked_len();
    let (nx, ny, nz) = grid.dims();
    let mut offsets = Vec::with_capacity(p + 1);
    let mut neighbors = Vec::with_capacity(p * 7);
    let mut weights = Vec::with_capacity(p * 7);
    offsets.push(0);
    for m in 0..p {
        let (x, y, z) = grid.coords(grid.full_index(m));
        neighbors.push(m);
        weights.push(1.0);
        let candidates = [
            (x.wrapping_sub(1), y, z),
            (x + 1, y, z),
            (x, y.wrapping_sub(1), z),
            (x, y + 1, z),
            (x, y, z.wrapping_sub(1)),
            (x, y, z + 1),
        ];
        for (cx, cy, cz) in candidates {
            if cx >= nx || cy >= ny || cz >= nz {
                continue;
            }
            let full = grid.linear_index(cx, cy, cz);
            if let Ok(Some(j)) = grid.masked_index(full) {
                neighbors.push(j);
                weights.push(neighbor_weight);
            }
        }
        offsets.push(neighbors.len());
    }
    NeighborhoodStructure {
        offsets,
        neighbors,
        weights,
    }
}

/// Disjoint groups covering the whole feature index set.
#[derive(Debug, Clone)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    p: usize,
}

impl GroupPartition {
    pub fn new(p: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; p];
        for group in &groups {
            for &i in group {
                if i >= p {
                    return Err(Error::InvalidArg(format!(
                        "group member {i} out of range for p={p}"
                    )));
                }
                if seen[i] {
                    return Err(Error::InvalidArg(format!(
                        "index {i} appears in more than one group"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::InvalidArg(format!(
                "index {missing} is not covered by any group"
            )));
        }
        Ok(GroupPartition { groups, p })
    }

    /// One group per coordinate; the group operator then equals plain
    /// soft-thresholding.
    pub fn singletons(p: usize) -> Self {
        GroupPartition {
            groups: (0..p).map(|i| vec![i]).collect(),
            p,
        }
    }

    /// Partition the in-mask voxels into non-overlapping axis-aligned blocks
    /// of the given edge length (blocks at the boundary are truncated).
    pub fn cube_blocks(grid: &VolumeGrid, edge: usize) -> Self {
        assert!(edge >= 1, "block edge must be at least 1");
        let p = grid.masked_len();
        let (nx, ny, nz) = grid.dims();
        let bx = nx.div_ceil(edge);
        let by = ny.div_ceil(edge);
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); bx * by * nz.div_ceil(edge)];
        for m in 0..p {
            let (x, y, z) = grid.coords(grid.full_index(m));
            let block = (x / edge) + bx * ((y / edge) + by * (z / edge));
            blocks[block].push(m);
        }
        blocks.retain(|b| !b.is_empty());
        GroupPartition { groups: blocks, p }
    }

    pub fn len(&self) -> usize {
        self.p
    }

    pub fn is_empty(&self) -> bool {
        self.p == 0
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }
}

fn shrink_factor(g: f64, t: f64) -> f64 {
    if g > t {
        1.0 - t / g
    } else {
        0.0
    }
}

fn check_threshold(t: f64) {
    assert!(t >= 0.0, "shrinkage threshold must be nonnegative, got {t}");
}

/// Coordinate-wise soft-thresholding: `w_i <- w_i (1 - t/|w_i|)+`.
pub fn prox_l1(w: &ArrayView1<f64>, threshold: f64) -> Array1<f64> {
    check_threshold(threshold);
    w.mapv(|v| v * shrink_factor(v.abs(), threshold))
}

/// Group soft-thresholding: every coordinate of a group is scaled by
/// `(1 - t/g)+` with `g` the group's Euclidean norm. Zero-norm groups map
/// to zero.
pub fn prox_group_l21(
    w: &ArrayView1<f64>,
    partition: &GroupPartition,
    threshold: f64,
) -> Array1<f64> {
    check_threshold(threshold);
    assert_eq!(
        w.len(),
        partition.len(),
        "partition built over p={} but w has {} entries",
        partition.len(),
        w.len()
    );
    let mut out = Array1::zeros(w.len());
    for group in partition.groups() {
        let norm = group.iter().map(|&i| w[i] * w[i]).sum::<f64>().sqrt();
        let factor = shrink_factor(norm, threshold);
        for &i in group {
            out[i] = w[i] * factor;
        }
    }
    out
}

/// Windowed group shrinkage: scale each coordinate by `(1 - t/g_i)+` where
/// `g_i` is the weighted Euclidean norm of its neighborhood, all norms taken
/// from the input vector.
pub fn social_shrinkage(
    w: &ArrayView1<f64>,
    nbhd: &NeighborhoodStructure,
    threshold: f64,
) -> Array1<f64> {
    check_threshold(threshold);
    assert_eq!(
        w.len(),
        nbhd.len(),
        "neighborhood structure built over p={} but w has {} entries",
        nbhd.len(),
        w.len()
    );
    let mut out = Array1::zeros(w.len());
    for i in 0..w.len() {
        out[i] = w[i] * shrink_factor(nbhd.weighted_norm(i, w), threshold);
    }
    out
}

/// A ready-to-apply shrinkage operator, one of the three supported penalties.
#[derive(Debug, Clone)]
pub enum Shrinkage {
    L1,
    GroupL21(GroupPartition),
    Social(NeighborhoodStructure),
}

impl Shrinkage {
    pub fn apply(&self, w: &ArrayView1<f64>, threshold: f64) -> Array1<f64> {
        match self {
            Shrinkage::L1 => prox_l1(w, threshold),
            Shrinkage::GroupL21(partition) => prox_group_l21(w, partition, threshold),
            Shrinkage::Social(nbhd) => social_shrinkage(w, nbhd, threshold),
        }
    }

    /// Feature-space size the operator was built for; `None` for the
    /// unstructured l1 operator.
    pub fn expected_len(&self) -> Option<usize> {
        match self {
            Shrinkage::L1 => None,
            Shrinkage::GroupL21(partition) => Some(partition.len()),
            Shrinkage::Social(nbhd) => Some(nbhd.len()),
        }
    }
}

/// Recipe for building a shrinkage operator on a (possibly reduced) grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    L1,
    GroupBlocks { edge: usize },
    Social { neighbor_weight: f64 },
}

impl PenaltyKind {
    pub fn social() -> Self {
        PenaltyKind::Social {
            neighbor_weight: DEFAULT_NEIGHBOR_WEIGHT,
        }
    }

    /// The benchmark contrast uses non-overlapping 2x2x2 voxel blocks.
    pub fn group_blocks() -> Self {
        PenaltyKind::GroupBlocks { edge: 2 }
    }

    pub fn build(&self, grid: &VolumeGrid) -> Shrinkage {
        match *self {
            PenaltyKind::L1 => Shrinkage::L1,
            PenaltyKind::GroupBlocks { edge } => {
                Shrinkage::GroupL21(GroupPartition::cube_blocks(grid, edge))
            }
            PenaltyKind::Social { neighbor_weight } => {
                Shrinkage::Social(build_grid_neighborhoods(grid, neighbor_weight))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::L1 => "l1",
            PenaltyKind::GroupBlocks { .. } => "group",
            PenaltyKind::Social { .. } => "social",
        }
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(PenaltyKind::L1),
            "group" => Ok(PenaltyKind::group_blocks()),
            "social" => Ok(PenaltyKind::social()),
            other => Err(Error::InvalidArg(format!(
                "unknown penalty '{other}' (expected social, l1, or group)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    #[test]
    fn prox_l1_hand_example() {
        let w = array![3.0, -1.0, 0.5];
        assert_eq!(prox_l1(&w.view(), 1.0), array![2.0, 0.0, 0.0]);
    }

    #[test]
    fn prox_l1_zero_threshold_is_identity() {
        let w = array![3.0, -1.0, 0.5, 0.0];
        assert_eq!(prox_l1(&w.view(), 0.0), w);
    }

    #[test]
    fn prox_l1_zero_is_fixed_point() {
        let w = Array1::zeros(4);
        assert_eq!(prox_l1(&w.view(), 2.0), w);
    }

    #[test]
    #[should_panic(expected = "nonnegative")]
    fn prox_l1_rejects_negative_threshold() {
        let w = array![1.0];
        prox_l1(&w.view(), -0.1);
    }

    #[test]
    fn prox_group_hand_example() {
        let w = array![3.0, 4.0];
        let partition = GroupPartition::new(2, vec![vec![0, 1]]).unwrap();
        assert_eq!(
            prox_group_l21(&w.view(), &partition, 2.5),
            array![1.5, 2.0]
        );
    }

    #[test]
    fn prox_group_threshold_at_norm_kills_group() {
        let w = array![3.0, 4.0];
        let partition = GroupPartition::new(2, vec![vec![0, 1]]).unwrap();
        assert_eq!(prox_group_l21(&w.view(), &partition, 5.0), array![0.0, 0.0]);
    }

    #[test]
    fn prox_group_singletons_match_l1() {
        let w = array![3.0, -1.0, 0.5, 0.0, -7.25];
        let partition = GroupPartition::singletons(5);
        let a = prox_group_l21(&w.view(), &partition, 1.0);
        let b = prox_l1(&w.view(), 1.0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-15 * y.abs());
        }
    }

    fn chain_nbhd(p: usize, side: f64) -> NeighborhoodStructure {
        let grid = VolumeGrid::full((p, 1, 1));
        build_grid_neighborhoods(&grid, side)
    }

    #[test]
    fn social_hand_example_on_chain() {
        let nbhd = chain_nbhd(3, 0.7);
        let w = array![0.0, 2.0, 0.0];
        assert_eq!(social_shrinkage(&w.view(), &nbhd, 1.0), array![0.0, 1.0, 0.0]);
    }

    #[test]
    fn social_self_only_equals_l1() {
        let nbhd = NeighborhoodStructure::self_only(5);
        let w = array![3.0, -1.0, 0.5, 0.0, -7.25];
        let a = social_shrinkage(&w.view(), &nbhd, 1.0);
        let b = prox_l1(&w.view(), 1.0);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= 1e-15 * y.abs());
        }
    }

    #[test]
    fn social_zero_threshold_is_identity() {
        let nbhd = chain_nbhd(4, 0.7);
        let w = array![1.0, -2.0, 0.0, 4.0];
        assert_eq!(social_shrinkage(&w.view(), &nbhd, 0.0), w);
    }

    #[test]
    fn neighborhoods_single_voxel_grid() {
        let grid = VolumeGrid::full((1, 1, 1));
        let nbhd = build_grid_neighborhoods(&grid, 0.7);
        let list: Vec<_> = nbhd.neighbors_of(0).collect();
        assert_eq!(list, vec![(0, 1.0)]);
    }

    #[test]
    fn neighborhoods_chain_center() {
        let nbhd = chain_nbhd(3, 0.7);
        let mut list: Vec<_> = nbhd.neighbors_of(1).collect();
        list.sort_by_key(|&(j, _)| j);
        assert_eq!(list, vec![(0, 0.7), (1, 1.0), (2, 0.7)]);
    }

    #[test]
    fn neighborhoods_cube_center_has_seven_members() {
        let grid = VolumeGrid::full((3, 3, 3));
        let nbhd = build_grid_neighborhoods(&grid, 0.7);
        let center = grid.masked_index(grid.linear_index(1, 1, 1)).unwrap().unwrap();
        assert_eq!(nbhd.neighbors_of(center).count(), 7);
        for m in 0..nbhd.len() {
            assert!(nbhd.neighbors_of(m).count() <= 7);
            assert!(nbhd.neighbors_of(m).any(|(j, a)| j == m && a == 1.0));
        }
    }

    #[test]
    fn neighborhoods_respect_mask() {
        // 3-chain with the middle voxel masked out: ends see only themselves.
        let grid = VolumeGrid::new((3, 1, 1), vec![true, false, true]).unwrap();
        let nbhd = build_grid_neighborhoods(&grid, 0.7);
        assert_eq!(nbhd.neighbors_of(0).count(), 1);
        assert_eq!(nbhd.neighbors_of(1).count(), 1);
    }

    #[test]
    fn structure_validation_catches_missing_self() {
        let lists = vec![vec![(0, 1.0)], vec![(0, 0.7)]];
        assert!(NeighborhoodStructure::from_lists(2, &lists).is_err());
    }

    #[test]
    fn partition_validation_catches_overlap_and_gaps() {
        assert!(GroupPartition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(GroupPartition::new(3, vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn cube_blocks_cover_disjointly() {
        let grid = VolumeGrid::full((3, 3, 3));
        let partition = GroupPartition::cube_blocks(&grid, 2);
        let total: usize = partition.groups().iter().map(|g| g.len()).sum();
        assert_eq!(total, 27);
        // 2x2x2 blocks over a 3-cube: 8 blocks, truncated at the far faces
        assert_eq!(partition.groups().len(), 8);
    }

    /// Sequential reference that processes voxels in an arbitrary order but
    /// reads norms from a snapshot of the input.
    fn social_reference_permuted(
        w: &Array1<f64>,
        nbhd: &NeighborhoodStructure,
        t: f64,
        order: &[usize],
    ) -> Array1<f64> {
        let mut out = Array1::zeros(w.len());
        for &i in order {
            let g = nbhd.weighted_norm(i, &w.view());
            out[i] = if g > t { w[i] * (1.0 - t / g) } else { 0.0 };
        }
        out
    }

    proptest! {
        #[test]
        fn shrinkage_is_nonexpansive_and_sign_preserving(
            vals in proptest::collection::vec(-50.0f64..50.0, 1..40),
            t in 0.0f64..20.0,
        ) {
            let p = vals.len();
            let w = Array1::from(vals);
            let nbhd = chain_nbhd(p, 0.7);
            let partition = GroupPartition::cube_blocks(&VolumeGrid::full((p, 1, 1)), 2);
            for out in [
                prox_l1(&w.view(), t),
                prox_group_l21(&w.view(), &partition, t),
                social_shrinkage(&w.view(), &nbhd, t),
            ] {
                for (o, i) in out.iter().zip(w.iter()) {
                    prop_assert!(o.abs() <= i.abs());
                    prop_assert!(*o == 0.0 || o.signum() == i.signum());
                }
            }
        }

        #[test]
        fn shrinkage_is_monotone_in_threshold(
            vals in proptest::collection::vec(-50.0f64..50.0, 1..40),
            t1 in 0.0f64..20.0,
            dt in 0.0f64..20.0,
        ) {
            let p = vals.len();
            let w = Array1::from(vals);
            let t2 = t1 + dt;
            let nbhd = chain_nbhd(p, 0.7);
            let partition = GroupPartition::cube_blocks(&VolumeGrid::full((p, 1, 1)), 2);
            let pairs = [
                (prox_l1(&w.view(), t1), prox_l1(&w.view(), t2)),
                (
                    prox_group_l21(&w.view(), &partition, t1),
                    prox_group_l21(&w.view(), &partition, t2),
                ),
                (
                    social_shrinkage(&w.view(), &nbhd, t1),
                    social_shrinkage(&w.view(), &nbhd, t2),
                ),
            ];
            for (lo, hi) in pairs {
                for (a, b) in lo.iter().zip(hi.iter()) {
                    prop_assert!(b.abs() <= a.abs());
                }
            }
        }

        #[test]
        fn social_kill_condition_matches_neighborhood_norm(
            vals in proptest::collection::vec(-10.0f64..10.0, 2..40),
            t in 0.0f64..15.0,
        ) {
            let p = vals.len();
            let w = Array1::from(vals);
            let nbhd = chain_nbhd(p, 0.7);
            let out = social_shrinkage(&w.view(), &nbhd, t);
            for i in 0..p {
                if w[i] != 0.0 {
                    let g = nbhd.weighted_norm(i, &w.view());
                    prop_assert_eq!(out[i] == 0.0, g <= t);
                }
            }
        }

        #[test]
        fn social_result_is_order_independent(
            vals in proptest::collection::vec(-10.0f64..10.0, 2..30),
            t in 0.0f64..10.0,
            seed in any::<u64>(),
        ) {
            let p = vals.len();
            let w = Array1::from(vals);
            let nbhd = chain_nbhd(p, 0.7);
            let mut order: Vec<usize> = (0..p).collect();
            // deterministic shuffle from the proptest-provided seed
            let mut rng = stream_rng(seed, 0);
            for i in (1..p).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let a = social_shrinkage(&w.view(), &nbhd, t);
            let b = social_reference_permuted(&w, &nbhd, t, &order);
            prop_assert_eq!(a, b);
        }
    }

    /// Monte-Carlo prox-optimality: the returned point must achieve an
    /// objective value no larger than random candidates.
    #[test]
    fn prox_operators_are_prox_optimal_against_random_candidates() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..1000 {
            let p = rng.random_range(1..=8usize);
            let w = Array1::from_iter((0..p).map(|_| rng.random_range(-5.0..5.0)));
            let t = rng.random_range(0.0..4.0);
            let partition = GroupPartition::cube_blocks(&VolumeGrid::full((p, 1, 1)), 2);

            let l1_pen = |v: &Array1<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
            let group_pen = |v: &Array1<f64>| {
                partition
                    .groups()
                    .iter()
                    .map(|g| g.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt())
                    .sum::<f64>()
            };
            let dist = |a: &Array1<f64>, b: &Array1<f64>| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / 2.0
            };

            let out_l1 = prox_l1(&w.view(), t);
            let out_group = prox_group_l21(&w.view(), &partition, t);
            let obj_l1 = dist(&out_l1, &w) + t * l1_pen(&out_l1);
            let obj_group = dist(&out_group, &w) + t * group_pen(&out_group);

            let z = Array1::from_iter((0..p).map(|_| rng.random_range(-6.0..6.0)));
            assert!(obj_l1 <= dist(&z, &w) + t * l1_pen(&z) + 1e-12);
            assert!(obj_group <= dist(&z, &w) + t * group_pen(&z) + 1e-12);
        }
    }
}
