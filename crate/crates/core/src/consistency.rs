//! Reprojection-consistency losses between a voxel grid and a 2.5D sketch,
//! with analytic gradients.
//!
//! For a pixel `(x, y)` with depth layer `d` the depth loss of the voxel at
//! layer `z` of its column is
//!
//! ```text
//! v^2        if z < d     (free space in front of the surface)
//! (1 - v)^2  if z = d     (the surface voxel)
//! 0          if z > d     (hidden, unconstrained)
//! ```
//!
//! and a background pixel (`d = inf`) asks every voxel of its column to be
//! empty, which is the silhouette criterion.
//!
//! The normal loss at a foreground pixel with normal `(n_a, n_b, n_c)` asks
//! the four voxels lying on the tangent plane next to the surface voxel to be
//! occupied:
//!
//! ```text
//! (x, y - 1, z + n_b/n_c)   (x, y + 1, z - n_b/n_c)
//! (x - 1, y, z + n_a/n_c)   (x + 1, y, z - n_a/n_c)
//! ```
//!
//! each contributing `(1 - v)^2`. Fractional layers are rounded, targets
//! outside the grid or outside the silhouette are skipped, and pixels whose
//! normal is nearly parallel to the image plane (`|n_c| < nc_epsilon`)
//! contribute nothing.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{permute_field, Dims, VoxelGrid};
use crate::rng::SplitMix64;
use crate::sketch::{SilhouetteMask, SketchSet};

/// How a fractional normal-target layer becomes a voxel index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FractionalPolicy {
    /// Nearest integer, ties away from zero.
    #[default]
    RoundNearest,
}

impl FractionalPolicy {
    fn apply(self, layer: f64) -> i64 {
        match self {
            FractionalPolicy::RoundNearest => layer.round() as i64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FractionalPolicy::RoundNearest => "round-nearest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the normal loss in the total.
    pub normal_weight: f64,
    /// Normals with `|n_c|` below this are skipped.
    pub nc_epsilon: f64,
    pub fractional_policy: FractionalPolicy,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            normal_weight: 0.5,
            nc_epsilon: 0.1,
            fractional_policy: FractionalPolicy::RoundNearest,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.normal_weight >= 0.0 && self.normal_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "normal weight {} must be a nonnegative number",
                self.normal_weight
            )));
        }
        if !(self.nc_epsilon > 0.0 && self.nc_epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "nc epsilon {} must be positive",
                self.nc_epsilon
            )));
        }
        Ok(())
    }
}

/// Loss values for one grid against one sketch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub depth_loss: f64,
    pub normal_loss: f64,
    /// `depth_loss + normal_weight * normal_loss`.
    pub total: f64,
    /// Number of voxels constrained by the depth loss.
    pub depth_terms: usize,
    /// Number of normal targets that passed the bounds and silhouette gates.
    pub normal_terms: usize,
    /// Foreground pixels whose normal was too grazing to use.
    pub normal_skipped: usize,
}

impl LossReport {
    /// Componentwise sum, used when a grid is scored against several views.
    pub fn accumulate(&mut self, other: &LossReport) {
        self.depth_loss += other.depth_loss;
        self.normal_loss += other.normal_loss;
        self.total += other.total;
        self.depth_terms += other.depth_terms;
        self.normal_terms += other.normal_terms;
        self.normal_skipped += other.normal_skipped;
    }
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "depth_loss={}", self.depth_loss)?;
        writeln!(f, "normal_loss={}", self.normal_loss)?;
        writeln!(f, "total={}", self.total)?;
        writeln!(f, "depth_terms={}", self.depth_terms)?;
        writeln!(f, "normal_terms={}", self.normal_terms)?;
        write!(f, "normal_skipped={}", self.normal_skipped)
    }
}

/// Per-voxel derivative of a scalar loss, laid out like a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    dims: Dims,
    values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub(crate) fn from_values(dims: Dims, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), dims.len());
        Self { dims, values }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &GradientField, scale: f64) {
        assert_eq!(self.dims, other.dims, "gradient fields differ in size");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Depth loss of one voxel at layer `z` against depth layer `d`
/// (`None` = background).
#[inline]
pub fn depth_loss_at(v: f64, z: usize, d: Option<usize>) -> f64 {
    match d {
        Some(d) if z > d => 0.0,
        Some(d) if z == d => (1.0 - v) * (1.0 - v),
        _ => v * v,
    }
}

#[inline]
pub fn depth_grad_at(v: f64, z: usize, d: Option<usize>) -> f64 {
    match d {
        Some(d) if z > d => 0.0,
        Some(d) if z == d => 2.0 * (v - 1.0),
        _ => 2.0 * v,
    }
}

/// Depth loss summed along one column. For background this is the sum of
/// squared occupancies.
pub fn ray_depth_loss(column: &[f64], d: Option<usize>) -> Result<f64> {
    if let Some(d) = d {
        if d >= column.len() {
            return Err(Error::invalid(format!(
                "depth layer {d} outside a column of {} voxels",
                column.len()
            )));
        }
    }
    Ok(column
        .iter()
        .enumerate()
        .fold(0.0, |acc, (z, &v)| acc + depth_loss_at(v, z, d)))
}

/// The surface-normal targets of pixel `(x, y)` whose surface voxel sits at
/// layer `z`, in the order `(x, y-1)`, `(x, y+1)`, `(x-1, y)`, `(x+1, y)`.
///
/// Returns `None` when the normal is grazing. Entries are `None` for targets
/// outside the grid or whose pixel is outside the silhouette.
pub fn normal_targets(
    dims: Dims,
    x: usize,
    y: usize,
    z: i64,
    normal: [f32; 3],
    silhouette: &SilhouetteMask,
    cfg: &LossConfig,
) -> Option<[Option<[usize; 3]>; 4]> {
    let [na, nb, nc] = normal.map(f64::from);
    if nc.is_nan() || nc.abs() < cfg.nc_epsilon {
        return None;
    }
    let ra = na / nc;
    let rb = nb / nc;
    let (x, y, zf) = (x as i64, y as i64, z as f64);
    let round = |layer: f64| cfg.fractional_policy.apply(layer);
    let candidates = [
        (x, y - 1, round(zf + rb)),
        (x, y + 1, round(zf - rb)),
        (x - 1, y, round(zf + ra)),
        (x + 1, y, round(zf - ra)),
    ];
    Some(candidates.map(|(tx, ty, tz)| {
        (dims.contains(tx, ty, tz) && silhouette.contains(tx, ty))
            .then_some([tx as usize, ty as usize, tz as usize])
    }))
}

/// Normal loss of one pixel and the number of targets that contributed.
/// `grid` must already be oriented to the sketch's view.
pub fn normal_loss_at(
    grid: &VoxelGrid,
    x: usize,
    y: usize,
    z: i64,
    normal: [f32; 3],
    silhouette: &SilhouetteMask,
    cfg: &LossConfig,
) -> (f64, usize) {
    match normal_targets(grid.dims(), x, y, z, normal, silhouette, cfg) {
        None => (0.0, 0),
        Some(targets) => targets
            .iter()
            .flatten()
            .fold((0.0, 0), |(loss, n), &[tx, ty, tz]| {
                let v = grid.get(tx, ty, tz);
                (loss + (1.0 - v) * (1.0 - v), n + 1)
            }),
    }
}

fn check_sketch_dims(view_dims: Dims, sketch: &SketchSet) -> Result<()> {
    let sizes = [
        (sketch.depth.width(), sketch.depth.height()),
        (sketch.normal.width(), sketch.normal.height()),
        (sketch.silhouette.width(), sketch.silhouette.height()),
    ];
    if sizes.iter().any(|&s| s != (view_dims.nx, view_dims.ny)) {
        return Err(Error::invalid(format!(
            "sketch is {}x{} but the grid seen from {} is {view_dims}",
            sketch.depth.width(),
            sketch.depth.height(),
            sketch.view
        )));
    }
    Ok(())
}

/// Scores a grid already oriented to the sketch's view, optionally
/// accumulating the gradient (in the same orientation) into `grad`.
pub(crate) fn evaluate_oriented(
    grid: &VoxelGrid,
    sketch: &SketchSet,
    cfg: &LossConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossReport> {
    cfg.validate()?;
    let dims = grid.dims();
    check_sketch_dims(dims, sketch)?;

    let mut report = LossReport::default();
    for y in 0..dims.ny {
        for x in 0..dims.nx {
            let layer = match sketch.depth.layer(x, y) {
                None => None,
                Some(d) if d >= 0 && (d as usize) < dims.nz => Some(d as usize),
                Some(d) => {
                    return Err(Error::invalid(format!(
                        "depth layer {d} at pixel ({x}, {y}) outside 0..{}",
                        dims.nz
                    )))
                }
            };

            let column = grid.column(x, y);
            let constrained = layer.map_or(dims.nz, |d| d + 1);
            report.depth_terms += constrained;
            report.depth_loss += column[..constrained]
                .iter()
                .enumerate()
                .fold(0.0, |acc, (z, &v)| acc + depth_loss_at(v, z, layer));
            if let Some(g) = grad.as_deref_mut() {
                let base = dims.index(x, y, 0);
                for (z, &v) in column[..constrained].iter().enumerate() {
                    g[base + z] += depth_grad_at(v, z, layer);
                }
            }

            let Some(d) = layer else { continue };
            let Some(normal) = sketch.normal.get(x, y) else {
                continue;
            };
            let Some(targets) =
                normal_targets(dims, x, y, d as i64, normal, &sketch.silhouette, cfg)
            else {
                report.normal_skipped += 1;
                continue;
            };
            for &[tx, ty, tz] in targets.iter().flatten() {
                let i = dims.index(tx, ty, tz);
                let v = grid.values()[i];
                report.normal_loss += (1.0 - v) * (1.0 - v);
                report.normal_terms += 1;
                if let Some(g) = grad.as_deref_mut() {
                    g[i] += cfg.normal_weight * 2.0 * (v - 1.0);
                }
            }
        }
    }
    report.total = report.depth_loss + cfg.normal_weight * report.normal_loss;
    Ok(report)
}

/// Total reprojection loss of a world-frame grid against one sketch. The
/// grid is reoriented to the sketch's view internally.
pub fn total_loss(grid: &VoxelGrid, sketch: &SketchSet, cfg: &LossConfig) -> Result<LossReport> {
    let oriented = grid.reorient(sketch.view);
    evaluate_oriented(&oriented, sketch, cfg, None)
}

/// [`total_loss`] together with its gradient with respect to every voxel of
/// the world-frame grid.
pub fn total_loss_grad(
    grid: &VoxelGrid,
    sketch: &SketchSet,
    cfg: &LossConfig,
) -> Result<(LossReport, GradientField)> {
    let oriented = grid.reorient(sketch.view);
    let mut grad = vec![0.0; oriented.dims().len()];
    let report = evaluate_oriented(&oriented, sketch, cfg, Some(&mut grad))?;
    let (dims, values) = permute_field(oriented.dims(), &grad, sketch.view.inverse());
    debug_assert_eq!(dims, grid.dims());
    Ok((report, GradientField::from_values(dims, values)))
}

const FD_SAMPLE_SEED: u64 = 0x5EED_F1D1_0000_0001;

/// Largest gap between the analytic gradient and a finite-difference
/// estimate of `total_loss` over `samples` cells.
///
/// Cells are drawn without replacement by a fixed-seed generator (all cells
/// when `samples` covers the grid). Interior cells use central differences;
/// cells within `h` of 0 or 1 use the three-point one-sided formula, which
/// like the central one is exact on quadratics.
pub fn finite_diff_check(
    grid: &VoxelGrid,
    sketch: &SketchSet,
    cfg: &LossConfig,
    h: f64,
    samples: usize,
) -> Result<f64> {
    if !(h > 0.0 && h <= 0.25) {
        return Err(Error::invalid(format!("step {h} outside (0, 0.25]")));
    }
    let (_, analytic) = total_loss_grad(grid, sketch, cfg)?;
    let dims = grid.dims();
    let mut cells: Vec<usize> = (0..dims.len()).collect();
    let take = samples.min(cells.len());
    let mut rng = SplitMix64::new(FD_SAMPLE_SEED);
    for i in 0..take {
        let j = i + rng.below(cells.len() - i);
        cells.swap(i, j);
    }

    let mut probe = grid.clone();
    let mut loss_at = |(x, y, z): (usize, usize, usize), v: f64| -> Result<f64> {
        probe.set(x, y, z, v);
        Ok(total_loss(&probe, sketch, cfg)?.total)
    };

    let mut worst = 0.0f64;
    for &i in &cells[..take] {
        let at = dims.coords(i);
        let v = grid.values()[i];
        let numeric = if v - h >= 0.0 && v + h <= 1.0 {
            (loss_at(at, v + h)? - loss_at(at, v - h)?) / (2.0 * h)
        } else if v + 2.0 * h <= 1.0 {
            let f0 = loss_at(at, v)?;
            (-3.0 * f0 + 4.0 * loss_at(at, v + h)? - loss_at(at, v + 2.0 * h)?) / (2.0 * h)
        } else {
            let f0 = loss_at(at, v)?;
            (3.0 * f0 - 4.0 * loss_at(at, v - h)? + loss_at(at, v - 2.0 * h)?) / (2.0 * h)
        };
        loss_at(at, v)?;
        worst = worst.max((analytic.values()[i] - numeric).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Threshold, ViewAxis};
    use crate::render::render_sketchset;
    use crate::sketch::{DepthMap, NormalMap};

    #[test]
    fn depth_loss_branches() {
        assert_eq!(depth_loss_at(0.5, 2, Some(5)), 0.25);
        assert!((depth_loss_at(0.3, 5, Some(5)) - 0.49).abs() < 1e-15);
        assert_eq!(depth_loss_at(0.9, 7, Some(5)), 0.0);
        assert_eq!(depth_loss_at(0.9, 7, None), 0.81);
    }

    #[test]
    fn depth_grad_branches() {
        assert_eq!(depth_grad_at(0.5, 2, Some(5)), 1.0);
        assert!((depth_grad_at(0.3, 5, Some(5)) + 1.4).abs() < 1e-15);
        assert_eq!(depth_grad_at(0.9, 7, Some(5)), 0.0);
    }

    #[test]
    fn ray_losses() {
        assert!((ray_depth_loss(&[0.2, 0.4], None).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(ray_depth_loss(&[0.0, 0.0, 1.0, 0.7], Some(2)).unwrap(), 0.0);
        assert!(ray_depth_loss(&[0.0, 0.0], Some(2)).is_err());
    }

    #[test]
    fn column_minimizer_has_zero_loss() {
        for nz in 1..8 {
            for d in 0..nz {
                let col: Vec<f64> = (0..nz)
                    .map(|z| match z.cmp(&d) {
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal => 1.0,
                        std::cmp::Ordering::Greater => 0.37,
                    })
                    .collect();
                assert_eq!(ray_depth_loss(&col, Some(d)).unwrap(), 0.0);
            }
        }
    }

    fn full_sil(n: usize) -> SilhouetteMask {
        SilhouetteMask::new(n, n, true).unwrap()
    }

    #[test]
    fn frontal_normal_targets() {
        let mut g = VoxelGrid::empty(Dims::cube(5)).unwrap();
        for (x, y) in [(2, 1), (2, 3), (1, 2), (3, 2)] {
            g.set(x, y, 2, 1.0);
        }
        let cfg = LossConfig::default();
        let n = [0.0, 0.0, -1.0];
        assert_eq!(normal_loss_at(&g, 2, 2, 2, n, &full_sil(5), &cfg), (0.0, 4));
        g.set(3, 2, 2, 0.0);
        assert_eq!(normal_loss_at(&g, 2, 2, 2, n, &full_sil(5), &cfg), (1.0, 4));
    }

    // Targets written out by hand from the formula for n = (0, 1/√2, -1/√2):
    // n_b/n_c = -1, n_a/n_c = 0 (the latter is -0.0, which rounds to 0).
    #[test]
    fn tilted_normal_targets() {
        let s = std::f32::consts::FRAC_1_SQRT_2;
        let targets =
            normal_targets(Dims::cube(5), 2, 2, 2, [0.0, s, -s], &full_sil(5), &LossConfig::default())
                .unwrap();
        assert_eq!(
            targets,
            [Some([2, 1, 1]), Some([2, 3, 3]), Some([1, 2, 2]), Some([3, 2, 2])]
        );
    }

    #[test]
    fn targets_are_gated_by_bounds_and_silhouette() {
        let cfg = LossConfig::default();
        let n = [0.0, 0.0, -1.0];
        let t = normal_targets(Dims::cube(3), 0, 0, 1, n, &full_sil(3), &cfg).unwrap();
        assert_eq!(t, [None, Some([0, 1, 1]), None, Some([1, 0, 1])]);

        let mut sil = full_sil(3);
        sil.set(1, 0, false);
        let t = normal_targets(Dims::cube(3), 0, 0, 1, n, &sil, &cfg).unwrap();
        assert_eq!(t, [None, Some([0, 1, 1]), None, None]);

        // a steep normal pushes the target layer out of the grid
        let steep = [0.0, 0.95, -0.312_249_9];
        let t = normal_targets(Dims::cube(3), 1, 1, 1, steep, &full_sil(3), &cfg).unwrap();
        assert_eq!(t[0], None);
        assert_eq!(t[1], None);
    }

    #[test]
    fn grazing_normals_are_skipped() {
        let g = VoxelGrid::empty(Dims::cube(3)).unwrap();
        let n = [0.0, 0.999, -0.05];
        let cfg = LossConfig::default();
        assert_eq!(normal_loss_at(&g, 1, 1, 1, n, &full_sil(3), &cfg), (0.0, 0));
        assert!(normal_targets(g.dims(), 1, 1, 1, n, &full_sil(3), &cfg).is_none());
    }

    #[test]
    fn half_layer_offsets_round_away_from_zero() {
        // n_b/n_c = -0.5: y-1 target at round(2 - 0.5) = 2, y+1 at round(2.5) = 3
        let nb = 1.0f32 / 5f32.sqrt();
        let nc = -2.0 * nb;
        let t = normal_targets(
            Dims::cube(5),
            2,
            2,
            2,
            [0.0, nb, nc],
            &full_sil(5),
            &LossConfig::default(),
        )
        .unwrap();
        assert_eq!(t[0], Some([2, 1, 2]));
        assert_eq!(t[1], Some([2, 3, 3]));
    }

    fn column_sketch(d: f32) -> SketchSet {
        SketchSet {
            depth: DepthMap::from_values(1, 1, vec![d]).unwrap(),
            normal: NormalMap::from_values(1, 1, vec![Some([0.0, 0.0, -1.0])]).unwrap(),
            silhouette: SilhouetteMask::new(1, 1, true).unwrap(),
            view: ViewAxis::PosZ,
        }
    }

    #[test]
    fn column_gradient_per_branch() {
        let g = VoxelGrid::new_filled(Dims::new(1, 1, 4), 0.5).unwrap();
        let (report, grad) = total_loss_grad(&g, &column_sketch(2.0), &LossConfig::default()).unwrap();
        assert_eq!(grad.values(), &[1.0, 1.0, -1.0, 0.0]);
        assert_eq!(report.depth_loss, 0.75);
        assert_eq!(report.depth_terms, 3);
        assert_eq!(report.normal_terms, 0);
    }

    #[test]
    fn empty_grid_against_background() {
        let g = VoxelGrid::empty(Dims::cube(4)).unwrap();
        let sketch = render_sketchset(&g, ViewAxis::PosZ, Threshold::default());
        let (report, grad) = total_loss_grad(&g, &sketch, &LossConfig::default()).unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(grad.max_abs(), 0.0);
        assert_eq!(finite_diff_check(&g, &sketch, &LossConfig::default(), 1e-3, 64).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = VoxelGrid::empty(Dims::new(3, 4, 5)).unwrap();
        let sketch = render_sketchset(&g, ViewAxis::PosX, Threshold::default());
        assert!(total_loss(&g, &sketch, &LossConfig::default()).is_ok());
        let mut wrong = sketch.clone();
        wrong.view = ViewAxis::PosZ;
        assert!(matches!(
            total_loss(&g, &wrong, &LossConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
        // depth beyond the far plane
        let mut deep = render_sketchset(&g, ViewAxis::PosZ, Threshold::default());
        deep.depth.set(0, 0, 5.0);
        assert!(total_loss(&g, &deep, &LossConfig::default()).is_err());
    }

    #[test]
    fn bad_config_is_rejected() {
        let g = VoxelGrid::empty(Dims::cube(2)).unwrap();
        let sketch = render_sketchset(&g, ViewAxis::PosZ, Threshold::default());
        let cfg = LossConfig {
            nc_epsilon: 0.0,
            ..LossConfig::default()
        };
        assert!(total_loss(&g, &sketch, &cfg).is_err());
    }

    // A normal target whose pixel is outside the silhouette gets no normal
    // gradient, so its analytic and numeric derivatives are both purely the
    // depth term.
    #[test]
    fn gated_target_receives_no_normal_gradient() {
        let n = 3;
        let mut sketch = SketchSet {
            depth: DepthMap::new_background(n, n).unwrap(),
            normal: NormalMap::new_undefined(n, n).unwrap(),
            silhouette: SilhouetteMask::new(n, n, false).unwrap(),
            view: ViewAxis::PosZ,
        };
        sketch.depth.set(1, 1, 1.0);
        sketch.normal.set(1, 1, Some([0.0, 0.0, -1.0]));
        sketch.silhouette.set(1, 1, true);
        let g = VoxelGrid::new_filled(Dims::cube(n), 0.4).unwrap();
        let (report, grad) = total_loss_grad(&g, &sketch, &LossConfig::default()).unwrap();
        assert_eq!(report.normal_terms, 0);
        // (0, 1, 1) would be a target but pixel (0, 1) is background: only
        // the silhouette term 2v applies.
        assert!((grad.get(0, 1, 1) - 0.8).abs() < 1e-15);
        assert!(finite_diff_check(&g, &sketch, &LossConfig::default(), 1e-3, 1000).unwrap() < 1e-9);
    }
}
