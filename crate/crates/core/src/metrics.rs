//! Shape evaluation: IoU, IoU maximized over isotropic rescaling, and
//! visible-surface depth agreement.

use crate::error::{Error, Result};
use crate::grid::{Dims, Threshold, VoxelGrid};
use crate::render::render_depth;
use crate::sketch::SketchSet;

fn occupied_mask(grid: &VoxelGrid, tau: Threshold) -> Vec<bool> {
    grid.values().iter().map(|&v| tau.is_occupied(v)).collect()
}

fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of the binarized grids; 1 when both are empty.
pub fn iou(a: &VoxelGrid, b: &VoxelGrid, tau: Threshold) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "cannot compare a {} grid with a {} grid",
            a.dims(),
            b.dims()
        )));
    }
    Ok(mask_iou(&occupied_mask(a, tau), &occupied_mask(b, tau)))
}

/// `count` scales spaced evenly in log space over `[min, max]`, endpoints
/// included.
pub fn log_spaced_scales(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (lo, hi) = (min.log2(), max.log2());
            (0..count)
                .map(|k| (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp2())
                .collect()
        }
    }
}

/// 21 log-spaced scales over `[0.5, 2]`; the middle one is exactly 1.
pub fn default_scales() -> Vec<f64> {
    log_spaced_scales(0.5, 2.0, 21)
}

/// Nearest-neighbour rescaling of an occupancy mask about the grid centre
/// into `out` dims. Cells that sample outside the source are empty.
fn rescale_mask(mask: &[bool], src: Dims, out: Dims, scale: f64) -> Vec<bool> {
    let s = src.as_array().map(|n| n as f64 / 2.0);
    let o = out.as_array().map(|n| n as f64 / 2.0);
    let sample = |axis: usize, i: usize, n: usize| -> Option<usize> {
        let p = s[axis] + (i as f64 + 0.5 - o[axis]) / scale;
        let j = p.floor();
        (j >= 0.0 && j < n as f64).then_some(j as usize)
    };
    let src_n = src.as_array();
    let mut result = Vec::with_capacity(out.len());
    for x in 0..out.nx {
        let sx = sample(0, x, src_n[0]);
        for y in 0..out.ny {
            let sy = sample(1, y, src_n[1]);
            for z in 0..out.nz {
                let sz = sample(2, z, src_n[2]);
                result.push(match (sx, sy, sz) {
                    (Some(a), Some(b), Some(c)) => mask[src.index(a, b, c)],
                    _ => false,
                });
            }
        }
    }
    result
}

/// Binarized `pred` rescaled by `scale` about its centre into `gt_dims`.
pub fn rescale(pred: &VoxelGrid, gt_dims: Dims, scale: f64, tau: Threshold) -> Result<VoxelGrid> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("scale {scale} must be positive")));
    }
    let mask = rescale_mask(&occupied_mask(pred, tau), pred.dims(), gt_dims, scale);
    VoxelGrid::from_values(gt_dims, mask.into_iter().map(|b| b as u8 as f64).collect())
}

/// Best IoU over the candidate scales and the scale achieving it.
///
/// Ties go to the scale closest to 1 (by `|s - 1|`), then to the smaller
/// scale.
pub fn iou_scale_search(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    tau: Threshold,
    scales: &[f64],
) -> Result<(f64, f64)> {
    if scales.is_empty() {
        return Err(Error::invalid("scale list is empty"));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("scale {s} must be positive")));
    }
    if pred.dims() != gt.dims() {
        return Err(Error::invalid(format!(
            "cannot compare a {} grid with a {} grid",
            pred.dims(),
            gt.dims()
        )));
    }
    let pred_mask = occupied_mask(pred, tau);
    let gt_mask = occupied_mask(gt, tau);
    let mut best: Option<(f64, f64)> = None;
    for &s in scales {
        let score = mask_iou(&rescale_mask(&pred_mask, pred.dims(), gt.dims(), s), &gt_mask);
        let better = match best {
            None => true,
            Some((b_iou, b_s)) => {
                score > b_iou
                    || (score == b_iou
                        && ((s - 1.0).abs() < (b_s - 1.0).abs()
                            || ((s - 1.0).abs() == (b_s - 1.0).abs() && s < b_s)))
            }
        };
        if better {
            best = Some((score, s));
        }
    }
    Ok(best.expect("scales is nonempty"))
}

/// Fraction of the sketch's foreground pixels where `pred`, rendered from the
/// sketch's view, is also foreground and within `tol_voxels` of the sketch
/// depth. 1 when the sketch has no foreground.
pub fn depth_agreement(
    pred: &VoxelGrid,
    sketch: &SketchSet,
    tau: Threshold,
    tol_voxels: f64,
) -> Result<f64> {
    let oriented = pred.reorient(sketch.view);
    let dims = oriented.dims();
    if (sketch.width(), sketch.height()) != (dims.nx, dims.ny) {
        return Err(Error::invalid(format!(
            "sketch is {}x{} but the grid seen from {} is {dims}",
            sketch.width(),
            sketch.height(),
            sketch.view
        )));
    }
    let rendered = render_depth(&oriented, tau);
    let (mut fg, mut agree) = (0usize, 0usize);
    for (&want, &got) in sketch.depth.values().iter().zip(rendered.values()) {
        if want == f32::INFINITY {
            continue;
        }
        fg += 1;
        if got != f32::INFINITY && (f64::from(got) - f64::from(want)).abs() <= tol_voxels {
            agree += 1;
        }
    }
    Ok(if fg == 0 { 1.0 } else { agree as f64 / fg as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ViewAxis;
    use crate::render::render_sketchset;
    use crate::shapes::{generate, ShapeKind, ShapeSpec};

    fn cube(n: usize, lo: [usize; 3], hi: [usize; 3]) -> VoxelGrid {
        VoxelGrid::from_fn(Dims::cube(n), |x, y, z| {
            let p = [x, y, z];
            (0..3).all(|a| (lo[a]..hi[a]).contains(&p[a])) as u8 as f64
        })
        .unwrap()
    }

    #[test]
    fn iou_basic_cases() {
        let tau = Threshold::default();
        let a = cube(8, [0, 0, 0], [4, 4, 4]);
        assert_eq!(iou(&a, &a, tau).unwrap(), 1.0);
        let b = cube(8, [4, 4, 4], [8, 8, 8]);
        assert_eq!(iou(&a, &b, tau).unwrap(), 0.0);
        // overlap 3x4x4 = 48, union 64 + 64 - 48 = 80
        let c = cube(8, [1, 0, 0], [5, 4, 4]);
        assert_eq!(iou(&a, &c, tau).unwrap(), 48.0 / 80.0);
        let empty = VoxelGrid::empty(Dims::cube(8)).unwrap();
        assert_eq!(iou(&empty, &empty, tau).unwrap(), 1.0);
        let other = VoxelGrid::empty(Dims::cube(4)).unwrap();
        assert!(iou(&a, &other, tau).is_err());
    }

    #[test]
    fn default_scales_are_symmetric_about_one() {
        let s = default_scales();
        assert_eq!(s.len(), 21);
        assert_eq!(s[0], 0.5);
        assert_eq!(s[10], 1.0);
        assert_eq!(s[20], 2.0);
        for k in 0..21 {
            assert!((s[k] * s[20 - k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_rescale_is_identity() {
        let g = generate(&ShapeSpec::new(ShapeKind::Chair, 5, 16).unwrap());
        let r = rescale(&g, g.dims(), 1.0, Threshold::default()).unwrap();
        assert_eq!(r, g);
    }

    #[test]
    fn identical_grids_pick_unit_scale() {
        let g = generate(&ShapeSpec::new(ShapeKind::Sphere, 2, 16).unwrap());
        let tau = Threshold::default();
        assert_eq!(iou_scale_search(&g, &g, tau, &default_scales()).unwrap(), (1.0, 1.0));
        assert_eq!(iou_scale_search(&g, &g, tau, &[1.0, 1.001]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn ties_prefer_unit_then_smaller() {
        let tau = Threshold::default();
        let empty = VoxelGrid::empty(Dims::cube(8)).unwrap();
        // every scale ties at IoU 1
        assert_eq!(iou_scale_search(&empty, &empty, tau, &[2.0, 1.5, 0.5]).unwrap(), (1.0, 0.5));
        assert_eq!(iou_scale_search(&empty, &empty, tau, &[1.25, 0.75]).unwrap(), (1.0, 0.75));
    }

    #[test]
    fn single_scale_search_equals_direct_iou() {
        let tau = Threshold::default();
        let a = generate(&ShapeSpec::new(ShapeKind::Box, 1, 16).unwrap());
        let b = generate(&ShapeSpec::new(ShapeKind::Box, 2, 16).unwrap());
        for s in [0.7, 1.0, 1.3] {
            let direct = iou(&rescale(&a, b.dims(), s, tau).unwrap(), &b, tau).unwrap();
            assert_eq!(iou_scale_search(&a, &b, tau, &[s]).unwrap(), (direct, s));
        }
        assert!(iou_scale_search(&a, &b, tau, &[]).is_err());
        assert!(iou_scale_search(&a, &b, tau, &[0.0]).is_err());
    }

    #[test]
    fn depth_agreement_cases() {
        let tau = Threshold::default();
        let g = cube(8, [2, 2, 2], [6, 6, 6]);
        let sketch = render_sketchset(&g, ViewAxis::PosZ, tau);
        assert_eq!(depth_agreement(&g, &sketch, tau, 0.0).unwrap(), 1.0);
        let empty = VoxelGrid::empty(Dims::cube(8)).unwrap();
        assert_eq!(depth_agreement(&empty, &sketch, tau, 1.0).unwrap(), 0.0);

        let deeper = cube(8, [2, 2, 3], [6, 6, 7]);
        assert_eq!(depth_agreement(&deeper, &sketch, tau, 1.0).unwrap(), 1.0);
        assert_eq!(depth_agreement(&deeper, &sketch, tau, 0.5).unwrap(), 0.0);

        let side = render_sketchset(&g, ViewAxis::NegX, tau);
        assert_eq!(depth_agreement(&g, &side, tau, 0.0).unwrap(), 1.0);
        let small = VoxelGrid::empty(Dims::cube(4)).unwrap();
        assert!(depth_agreement(&small, &sketch, tau, 1.0).is_err());
    }
}
