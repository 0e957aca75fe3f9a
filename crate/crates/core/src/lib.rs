//! Structured-sparse linear decoder for 3D voxel grids.
//!
//! The decoder couples a smooth data-fit loss (logistic or squared) with a
//! local shrinkage operator inside an accelerated proximal-gradient solver.
//! The headline operator is social shrinkage (a windowed group-lasso): each
//! voxel is thresholded by the weighted norm of its 6-connected neighborhood
//! but only the center coordinate is updated, which keeps the operator
//! closed-form and cheap while still coupling neighbors. Plain l1 and
//! non-overlapping group operators ship alongside it for contrast.
//!
//! Model selection follows a nested cross-validation protocol: univariate
//! screening fit per training fold, a warm-started descending penalty path
//! anchored at `lambda_max`, early stopping on the left-out prediction error,
//! and fold-averaged final coefficients.

pub mod benchmark;
pub mod error;
pub mod io;
pub mod losses;
pub mod rng;
pub mod select;
pub mod shrinkage;
pub mod solver;
pub mod synthetic;
pub mod volume;

pub use error::{Error, Result};
pub use losses::{lipschitz_constant, loss_gradient, loss_value, LossKind, LossSpec};
pub use select::{fit_cv, fit_path, lambda_grid, lambda_max, univariate_screening, FitConfig, PathResult};
pub use shrinkage::{
    build_grid_neighborhoods, prox_group_l21, prox_l1, social_shrinkage, GroupPartition,
    NeighborhoodStructure, PenaltyKind, Shrinkage, DEFAULT_NEIGHBOR_WEIGHT,
};
pub use solver::{fista, predict_scores, scores_to_labels, SolverConfig, StopReason};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use volume::{Dataset, TaskKind, VolumeGrid, WeightMap};
