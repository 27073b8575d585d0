//! Projected gradient descent with momentum on voxel occupancies.
//!
//! The objective is the reprojection loss summed over every supplied sketch,
//! plus two shape priors: a total-variation smoothness term and a binariness
//! term that pushes cells toward 0 or 1.

use std::fmt::Write as _;

use crate::consistency::{total_loss_grad, GradientField, LossConfig};
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::sketch::SketchSet;

/// How the starting grid was chosen; recorded in run manifests.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Uniform(f64),
    /// Started from an existing grid file.
    FromGrid(String),
}

impl std::fmt::Display for Init {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Init::Uniform(c) => write!(f, "uniform:{c}"),
            Init::FromGrid(path) => f.write_str(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub tv_weight: f64,
    pub binariness_weight: f64,
    pub loss: LossConfig,
    pub init: Init,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            iterations: 500,
            tv_weight: 0.01,
            binariness_weight: 0.1,
            loss: LossConfig::default(),
            init: Init::Uniform(0.5),
        }
    }
}

impl RefineConfig {
    /// Learning rate 0.001, momentum 0.9 and 40 iterations: the schedule used
    /// when the same losses fine-tune network weights. On raw voxels it moves
    /// very little.
    pub fn encoder_fine_tune_schedule() -> Self {
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            iterations: 40,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        for (name, w) in [("tv", self.tv_weight), ("binariness", self.binariness_weight)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("{name} weight {w} must be nonnegative")));
            }
        }
        self.loss.validate()
    }

    /// `key=value` lines listing every setting.
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "momentum={}", self.momentum);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "tv_weight={}", self.tv_weight);
        let _ = writeln!(s, "binariness_weight={}", self.binariness_weight);
        let _ = writeln!(s, "normal_weight={}", self.loss.normal_weight);
        let _ = writeln!(s, "nc_epsilon={}", self.loss.nc_epsilon);
        let _ = writeln!(s, "fractional_policy={}", self.loss.fractional_policy.as_str());
        let _ = writeln!(s, "init={}", self.init);
        s
    }
}

/// Objective values at one iterate, before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    /// Weighted sum of everything below.
    pub total: f64,
    pub depth: f64,
    /// Unweighted normal loss.
    pub normal: f64,
    pub tv: f64,
    pub binariness: f64,
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub final_grid: VoxelGrid,
    pub trajectory: Vec<TrajectoryPoint>,
    pub iterations_run: usize,
}

pub const TRAJECTORY_CSV_HEADER: &str = "iter,total,depth,normal,tv,bin";

impl RefineResult {
    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_CSV_HEADER);
        s.push('\n');
        for (i, p) in self.trajectory.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{}",
                p.total, p.depth, p.normal, p.tv, p.binariness
            );
        }
        s
    }
}

/// Sum of squared forward differences along x, y and z, and its gradient.
pub fn tv_penalty(grid: &VoxelGrid) -> (f64, GradientField) {
    let dims = grid.dims();
    let v = grid.values();
    let mut grad = GradientField::zeros(dims);
    let g = grad.values_mut();
    let mut total = 0.0;
    let strides = [dims.ny * dims.nz, dims.nz, 1];
    for i in 0..dims.len() {
        let (x, y, z) = dims.coords(i);
        let has_next = [x + 1 < dims.nx, y + 1 < dims.ny, z + 1 < dims.nz];
        for axis in 0..3 {
            if has_next[axis] {
                let j = i + strides[axis];
                let diff = v[j] - v[i];
                total += diff * diff;
                g[j] += 2.0 * diff;
                g[i] -= 2.0 * diff;
            }
        }
    }
    (total, grad)
}

/// `sum v (1 - v)`; zero exactly on binary grids.
pub fn binariness_penalty(grid: &VoxelGrid) -> (f64, GradientField) {
    let total = grid.values().iter().map(|&v| v * (1.0 - v)).sum();
    let grad = grid.values().iter().map(|&v| 1.0 - 2.0 * v).collect();
    (total, GradientField::from_values(grid.dims(), grad))
}

/// Runs `cfg.iterations` steps of
///
/// ```text
/// m <- momentum * m + g
/// v <- clamp(v - learning_rate * m, 0, 1)
/// ```
///
/// where `g` is the gradient of the summed reprojection loss over all
/// sketches plus the weighted priors.
pub fn refine(init: &VoxelGrid, sketches: &[SketchSet], cfg: &RefineConfig) -> Result<RefineResult> {
    cfg.validate()?;
    if sketches.is_empty() {
        return Err(Error::invalid("refinement needs at least one sketch"));
    }
    for sketch in sketches {
        let seen = sketch.view.view_dims(init.dims());
        if (sketch.width(), sketch.height()) != (seen.nx, seen.ny) {
            return Err(Error::invalid(format!(
                "sketch is {}x{} but the grid seen from {} is {seen}",
                sketch.width(),
                sketch.height(),
                sketch.view
            )));
        }
    }

    let dims = init.dims();
    let mut grid = init.clone();
    let mut velocity = vec![0.0; dims.len()];
    let mut trajectory = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        let mut grad = GradientField::zeros(dims);
        let (mut depth, mut normal, mut reprojection) = (0.0, 0.0, 0.0);
        for sketch in sketches {
            let (report, g) = total_loss_grad(&grid, sketch, &cfg.loss)?;
            depth += report.depth_loss;
            normal += report.normal_loss;
            reprojection += report.total;
            grad.add_scaled(&g, 1.0);
        }
        let (tv, tv_grad) = tv_penalty(&grid);
        let (bin, bin_grad) = binariness_penalty(&grid);
        if cfg.tv_weight != 0.0 {
            grad.add_scaled(&tv_grad, cfg.tv_weight);
        }
        if cfg.binariness_weight != 0.0 {
            grad.add_scaled(&bin_grad, cfg.binariness_weight);
        }
        trajectory.push(TrajectoryPoint {
            total: reprojection + cfg.tv_weight * tv + cfg.binariness_weight * bin,
            depth,
            normal,
            tv,
            binariness: bin,
        });

        let g = grad.values();
        grid.map_in_place(|i, v| {
            velocity[i] = cfg.momentum * velocity[i] + g[i];
            v - cfg.learning_rate * velocity[i]
        });
    }

    Ok(RefineResult {
        final_grid: grid,
        iterations_run: trajectory.len(),
        trajectory,
    })
}
