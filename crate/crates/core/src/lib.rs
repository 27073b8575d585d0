//! Orthographic 2.5D sketches (depth, surface normal, silhouette) for voxel
//! occupancy grids, the reprojection-consistency losses that tie a grid to a
//! sketch, and projected-gradient refinement of voxel shapes against one or
//! more sketches.
//!
//! Conventions used throughout:
//!
//! * A [`VoxelGrid`] stores occupancies in `[0, 1]`, indexed `(x, y, z)` with
//!   `z` varying fastest.
//! * The canonical camera is orthographic and looks along `+Z`; pixel `(x, y)`
//!   sees the voxel column `(x, y, 0..nz)` and depth is the `z` layer index.
//!   Other axis-aligned views are handled by [`grid::reorient`].
//! * Background depth is `+inf`.

pub mod consistency;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod refine;
pub mod render;
pub mod rng;
pub mod shapes;
pub mod sketch;

pub use consistency::{GradientField, LossConfig, LossReport};
pub use error::{Error, Result};
pub use grid::{Dims, Threshold, ViewAxis, VoxelGrid};
pub use refine::{RefineConfig, RefineResult};
pub use shapes::{ShapeKind, ShapeSpec};
pub use sketch::{DepthMap, NormalMap, SilhouetteMask, SketchSet};
