//! Orthographic forward model: voxel grid to depth, silhouette and normal
//! images.

use crate::grid::{Threshold, ViewAxis, VoxelGrid};
use crate::sketch::{DepthMap, NormalMap, SilhouetteMask, SketchSet};

/// First-hit depth along `+Z`: `d(x, y) = min { z : v(x, y, z) >= tau }`,
/// background where the column has no occupied cell.
pub fn render_depth(grid: &VoxelGrid, tau: Threshold) -> DepthMap {
    let dims = grid.dims();
    let mut depth = DepthMap::new_background(dims.nx, dims.ny).expect("grid dims are positive");
    for y in 0..dims.ny {
        for x in 0..dims.nx {
            if let Some(z) = grid.column(x, y).iter().position(|&v| tau.is_occupied(v)) {
                depth.set(x, y, z as f32);
            }
        }
    }
    depth
}

pub fn render_silhouette(grid: &VoxelGrid, tau: Threshold) -> SilhouetteMask {
    silhouette_of(&render_depth(grid, tau))
}

fn silhouette_of(depth: &DepthMap) -> SilhouetteMask {
    let values = depth.values().iter().map(|&d| d != DepthMap::BACKGROUND).collect();
    SilhouetteMask::from_values(depth.width(), depth.height(), values)
        .expect("same size as the depth map")
}

/// Screen-space normals `n ∝ (∂d/∂x, ∂d/∂y, -1)`.
///
/// Slopes use central differences where both neighbours along an axis are
/// foreground and one-sided differences where only one is. A pixel with no
/// foreground neighbour along some axis copies the normal of the 4-neighbour
/// whose depth is closest to its own (first in the order `x-1, x+1, y-1,
/// y+1` on ties); if no neighbour has one, the missing slope is taken as 0.
pub fn render_normals(depth: &DepthMap) -> NormalMap {
    let (w, h) = (depth.width(), depth.height());
    let fg = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < w
            && (y as usize) < h
            && depth.is_foreground(x as usize, y as usize)
    };
    let d = |x: i64, y: i64| f64::from(depth.get(x as usize, y as usize));
    let slope = |x: i64, y: i64, dx: i64, dy: i64| -> Option<f64> {
        match (fg(x - dx, y - dy), fg(x + dx, y + dy)) {
            (true, true) => Some((d(x + dx, y + dy) - d(x - dx, y - dy)) / 2.0),
            (false, true) => Some(d(x + dx, y + dy) - d(x, y)),
            (true, false) => Some(d(x, y) - d(x - dx, y - dy)),
            (false, false) => None,
        }
    };

    let mut normals = NormalMap::new_undefined(w, h).expect("depth map size is positive");
    let mut pending = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !fg(x, y) {
                continue;
            }
            match (slope(x, y, 1, 0), slope(x, y, 0, 1)) {
                (Some(gx), Some(gy)) => {
                    normals.set(x as usize, y as usize, Some(unit_normal(gx, gy)));
                }
                (gx, gy) => pending.push((x, y, gx, gy)),
            }
        }
    }

    let mut filled = Vec::with_capacity(pending.len());
    for &(x, y, gx, gy) in &pending {
        let here = d(x, y);
        let nearest = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
            .into_iter()
            .filter(|&(nx, ny)| fg(nx, ny))
            .filter_map(|(nx, ny)| {
                normals
                    .get(nx as usize, ny as usize)
                    .map(|n| ((d(nx, ny) - here).abs(), n))
            })
            .fold(None::<(f64, [f32; 3])>, |best, cand| match best {
                Some(b) if b.0 <= cand.0 => Some(b),
                _ => Some(cand),
            });
        let n = match nearest {
            Some((_, n)) => n,
            None => unit_normal(gx.unwrap_or(0.0), gy.unwrap_or(0.0)),
        };
        filled.push((x as usize, y as usize, n));
    }
    for (x, y, n) in filled {
        normals.set(x, y, Some(n));
    }
    normals
}

fn unit_normal(gx: f64, gy: f64) -> [f32; 3] {
    let len = (gx * gx + gy * gy + 1.0).sqrt();
    [(gx / len) as f32, (gy / len) as f32, (-1.0 / len) as f32]
}

/// Renders depth, silhouette and normals of `grid` seen from `view`.
pub fn render_sketchset(grid: &VoxelGrid, view: ViewAxis, tau: Threshold) -> SketchSet {
    let oriented = grid.reorient(view);
    let depth = render_depth(&oriented, tau);
    SketchSet {
        normal: render_normals(&depth),
        silhouette: silhouette_of(&depth),
        depth,
        view,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use proptest::prelude::*;

    fn tau() -> Threshold {
        Threshold::default()
    }

    #[test]
    fn empty_grid_is_all_background() {
        let g = VoxelGrid::empty(Dims::cube(4)).unwrap();
        assert!(render_depth(&g, tau()).values().iter().all(|&d| d == f32::INFINITY));
        assert_eq!(render_silhouette(&g, tau()).count(), 0);
    }

    #[test]
    fn full_grid_is_all_foreground() {
        let g = VoxelGrid::new_filled(Dims::cube(4), 1.0).unwrap();
        assert_eq!(render_silhouette(&g, tau()).count(), 16);
        assert!(render_depth(&g, tau()).values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn single_voxel_first_hit() {
        let mut g = VoxelGrid::empty(Dims::cube(8)).unwrap();
        g.set(3, 4, 2, 1.0);
        let depth = render_depth(&g, tau());
        let sil = render_silhouette(&g, tau());
        for y in 0..8 {
            for x in 0..8 {
                if (x, y) == (3, 4) {
                    assert_eq!(depth.get(x, y), 2.0);
                    assert!(sil.get(x, y));
                } else {
                    assert_eq!(depth.get(x, y), f32::INFINITY);
                    assert!(!sil.get(x, y));
                }
            }
        }
    }

    #[test]
    fn depth_is_minimum_of_hits() {
        let mut g = VoxelGrid::empty(Dims::new(1, 1, 8)).unwrap();
        g.set(0, 0, 1, 0.7);
        g.set(0, 0, 5, 1.0);
        assert_eq!(render_depth(&g, tau()).get(0, 0), 1.0);
    }

    #[test]
    fn plateau_normals_face_camera() {
        let depth = DepthMap::from_values(5, 5, vec![3.0; 25]).unwrap();
        let n = render_normals(&depth);
        assert_eq!(n.get(2, 2), Some([0.0, 0.0, -1.0]));
    }

    #[test]
    fn ramp_normals() {
        let values = (0..25).map(|i| (i % 5) as f32).collect();
        let depth = DepthMap::from_values(5, 5, values).unwrap();
        let n = render_normals(&depth).get(2, 2).unwrap();
        let s = std::f32::consts::FRAC_1_SQRT_2;
        assert!((n[0] - s).abs() < 1e-6 && n[1].abs() < 1e-6 && (n[2] + s).abs() < 1e-6);
        // one-sided at the left and right edges of the ramp
        let edge = render_normals(&depth).get(0, 2).unwrap();
        assert!((edge[0] - s).abs() < 1e-6);
    }

    #[test]
    fn isolated_pixels_copy_or_face_camera() {
        // a one-pixel-wide vertical strip: no x neighbours anywhere
        let mut depth = DepthMap::new_background(3, 4).unwrap();
        for y in 0..4 {
            depth.set(1, y, y as f32);
        }
        let n = render_normals(&depth);
        for y in 0..4 {
            let [a, b, c] = n.get(1, y).unwrap();
            assert_eq!(a, 0.0);
            assert!((b - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
            assert!(c < 0.0);
        }
        // a lone pixel
        let mut depth = DepthMap::new_background(3, 3).unwrap();
        depth.set(1, 1, 2.0);
        assert_eq!(render_normals(&depth).get(1, 1), Some([0.0, 0.0, -1.0]));
    }

    // Neighbour-copy branch: the pixel at the end of a horizontal arm has no
    // y neighbours and takes the normal of its depth-nearest neighbour.
    #[test]
    fn arm_pixel_copies_nearest_neighbour() {
        let mut depth = DepthMap::new_background(4, 3).unwrap();
        for y in 0..3 {
            for x in 0..2 {
                depth.set(x, y, 1.0);
            }
        }
        depth.set(2, 1, 1.0);
        depth.set(3, 1, 9.0);
        let n = render_normals(&depth);
        assert_eq!(n.get(2, 1), n.get(1, 1));
    }

    #[test]
    fn box_silhouette_matches_footprint_and_mirrors() {
        let (lo, hi) = ([1usize, 2, 3], [4usize, 6, 5]);
        let inside = |x: usize, y: usize, z: usize| {
            (lo[0]..hi[0]).contains(&x) && (lo[1]..hi[1]).contains(&y) && (lo[2]..hi[2]).contains(&z)
        };
        let n = 8;
        let g = VoxelGrid::from_fn(Dims::cube(n), |x, y, z| inside(x, y, z) as u8 as f64).unwrap();
        let front = render_sketchset(&g, ViewAxis::PosZ, tau());
        let back = render_sketchset(&g, ViewAxis::NegZ, tau());
        for y in 0..n {
            for x in 0..n {
                let hit = (0..n).any(|z| inside(x, y, z));
                assert_eq!(front.silhouette.get(x, y), hit);
                assert_eq!(back.silhouette.get(n - 1 - x, y), hit);
                if hit {
                    assert_eq!(front.depth.get(x, y), lo[2] as f32);
                    assert_eq!(back.depth.get(n - 1 - x, y), (n - hi[2]) as f32);
                }
            }
        }
    }

    fn arb_grid() -> impl Strategy<Value = VoxelGrid> {
        (1usize..7, 1usize..7, 1usize..7).prop_flat_map(|(nx, ny, nz)| {
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], nx * ny * nz)
                .prop_map(move |v| VoxelGrid::from_values(Dims::new(nx, ny, nz), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rendered_sketches_validate(g in arb_grid(), vi in 0usize..6, t in 0.05f64..0.95) {
            let s = render_sketchset(&g, ViewAxis::ALL[vi], Threshold::new(t).unwrap());
            prop_assert!(s.validate().is_empty(), "{:?}", s.validate());
            for (&d, &m) in s.depth.values().iter().zip(s.silhouette.values()) {
                prop_assert_eq!(m, d != f32::INFINITY);
            }
        }

        #[test]
        fn raising_a_voxel_never_deepens_its_pixel(
            g in arb_grid(),
            cell in any::<proptest::sample::Index>(),
            bump in 0.0f64..1.0,
        ) {
            let dims = g.dims();
            let (x, y, z) = dims.coords(cell.index(dims.len()));
            let before = render_depth(&g, tau()).get(x, y);
            let mut raised = g.clone();
            raised.set(x, y, z, g.get(x, y, z) + bump);
            prop_assert!(render_depth(&raised, tau()).get(x, y) <= before);
            let mut lowered = g.clone();
            lowered.set(x, y, z, g.get(x, y, z) - bump);
            prop_assert!(render_depth(&lowered, tau()).get(x, y) >= before);
        }
    }
}
