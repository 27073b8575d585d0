//! Seeded procedural ground-truth shapes.
//!
//! Every random choice comes from [`SplitMix64`] seeded with [`ShapeSpec::seed`],
//! drawn in the order documented on each layout, so a `(kind, seed,
//! resolution)` triple always produces the same grid. The `y` axis is "up"
//! for the cylinder and chair.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Dims, VoxelGrid};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Box,
    Sphere,
    Cylinder,
    Chair,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Box,
        ShapeKind::Sphere,
        ShapeKind::Cylinder,
        ShapeKind::Chair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Box => "box",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Chair => "chair",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape kind '{s}'")))
    }
}

pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub seed: u64,
    /// Edge length of the cubic grid.
    pub resolution: usize,
}

/// Half-open integer box `[min, max)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cuboid {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl Cuboid {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        (self.min[0]..self.max[0]).contains(&x)
            && (self.min[1]..self.max[1]).contains(&y)
            && (self.min[2]..self.max[2]).contains(&z)
    }

    pub fn volume(&self) -> usize {
        (0..3).map(|a| self.max[a] - self.min[a]).product()
    }
}

/// Resolved geometry of a [`ShapeSpec`]. Continuous shapes contain a voxel
/// when its centre `(i + 0.5)` lies inside.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Box(Cuboid),
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis along `y`, occupying layers `y_range.0..y_range.1`.
    Cylinder {
        center_xz: [f64; 2],
        radius: f64,
        y_range: (usize, usize),
    },
    /// Seat, four legs and a backrest, in that order.
    Chair(Vec<Cuboid>),
}

impl Layout {
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        let c = |i: usize| i as f64 + 0.5;
        match self {
            Layout::Box(b) => b.contains(x, y, z),
            Layout::Sphere { center, radius } => {
                let d2 = (c(x) - center[0]).powi(2)
                    + (c(y) - center[1]).powi(2)
                    + (c(z) - center[2]).powi(2);
                d2 <= radius * radius
            }
            Layout::Cylinder {
                center_xz,
                radius,
                y_range,
            } => {
                (y_range.0..y_range.1).contains(&y)
                    && (c(x) - center_xz[0]).powi(2) + (c(z) - center_xz[1]).powi(2)
                        <= radius * radius
            }
            Layout::Chair(parts) => parts.iter().any(|p| p.contains(x, y, z)),
        }
    }
}

/// Integer span of length about `extent` centred on `center`, clipped to `0..n`
/// and never empty.
fn span(center: f64, extent: f64, n: usize) -> (usize, usize) {
    let lo = (center - extent / 2.0).round().clamp(0.0, (n - 1) as f64) as usize;
    let hi = (center + extent / 2.0).round().clamp(0.0, n as f64) as usize;
    (lo, hi.max(lo + 1))
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, seed: u64, resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(Error::invalid(format!(
                "shape resolution {resolution} below {MIN_RESOLUTION}"
            )));
        }
        Ok(Self {
            kind,
            seed,
            resolution,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims::cube(self.resolution)
    }

    /// Draws the shape's dimensions. Extents are uniform in `[0.3n, 0.8n]`
    /// and centres are `n/2` jittered by at most `0.1n`, drawn as:
    ///
    /// * box: extent x, y, z, then centre x, y, z;
    /// * sphere: diameter, then centre x, y, z;
    /// * cylinder: diameter, height, then centre x, y, z;
    /// * chair: seat width (x) and depth (z) in `[0.5n, 0.8n]`, seat
    ///   thickness in `[0.06n, 0.12n]`, seat height in `[0.25n, 0.4n]`, leg
    ///   thickness in `[0.08n, 0.14n]`, backrest height in `[0.25n, 0.35n]`,
    ///   backrest thickness in `[0.06n, 0.12n]`, then centre x and z. Legs
    ///   start at `y = round(0.05n)`; the backrest sits on the rear (`+z`)
    ///   edge of the seat. Thin parts are at least one voxel.
    pub fn layout(&self) -> Layout {
        let n = self.resolution;
        let nf = n as f64;
        let mut rng = SplitMix64::new(self.seed);
        let extent = |rng: &mut SplitMix64| rng.uniform(0.3 * nf, 0.8 * nf);
        let jitter = |rng: &mut SplitMix64| nf / 2.0 + rng.uniform(-0.1 * nf, 0.1 * nf);

        match self.kind {
            ShapeKind::Box => {
                let e = [extent(&mut rng), extent(&mut rng), extent(&mut rng)];
                let mut min = [0; 3];
                let mut max = [0; 3];
                for a in 0..3 {
                    (min[a], max[a]) = span(jitter(&mut rng), e[a], n);
                }
                Layout::Box(Cuboid { min, max })
            }
            ShapeKind::Sphere => {
                let radius = extent(&mut rng) / 2.0;
                let center = [jitter(&mut rng), jitter(&mut rng), jitter(&mut rng)]
                    .map(|c| c.clamp(radius, nf - radius));
                Layout::Sphere { center, radius }
            }
            ShapeKind::Cylinder => {
                let radius = extent(&mut rng) / 2.0;
                let height = extent(&mut rng);
                let cx = jitter(&mut rng).clamp(radius, nf - radius);
                let cy = jitter(&mut rng);
                let cz = jitter(&mut rng).clamp(radius, nf - radius);
                Layout::Cylinder {
                    center_xz: [cx, cz],
                    radius,
                    y_range: span(cy, height, n),
                }
            }
            ShapeKind::Chair => {
                let thick = |v: f64| (v.round() as usize).max(1);
                let seat_w = rng.uniform(0.5 * nf, 0.8 * nf);
                let seat_d = rng.uniform(0.5 * nf, 0.8 * nf);
                let seat_t = thick(rng.uniform(0.06 * nf, 0.12 * nf));
                let seat_h = rng.uniform(0.25 * nf, 0.4 * nf).round() as usize;
                let leg_t = thick(rng.uniform(0.08 * nf, 0.14 * nf));
                let back_h = rng.uniform(0.25 * nf, 0.35 * nf).round() as usize;
                let back_t = thick(rng.uniform(0.06 * nf, 0.12 * nf));
                let (x0, x1) = span(jitter(&mut rng), seat_w, n);
                let (z0, z1) = span(jitter(&mut rng), seat_d, n);

                let floor = (0.05 * nf).round() as usize;
                let seat_lo = (floor + seat_h).min(n - 2);
                let seat_hi = (seat_lo + seat_t).min(n - 1);
                let back_top = (seat_hi + back_h).min(n);
                let leg_t = leg_t.min((x1 - x0) / 2).min((z1 - z0) / 2).max(1);
                let back_t = back_t.min(z1 - z0);

                let mut parts = vec![Cuboid {
                    min: [x0, seat_lo, z0],
                    max: [x1, seat_hi, z1],
                }];
                for (lx, lz) in [
                    (x0, z0),
                    (x1 - leg_t, z0),
                    (x0, z1 - leg_t),
                    (x1 - leg_t, z1 - leg_t),
                ] {
                    parts.push(Cuboid {
                        min: [lx, floor, lz],
                        max: [lx + leg_t, seat_lo, lz + leg_t],
                    });
                }
                parts.push(Cuboid {
                    min: [x0, seat_hi, z1 - back_t],
                    max: [x1, back_top, z1],
                });
                Layout::Chair(parts)
            }
        }
    }
}

/// Rasterizes the layout of `spec` into a binary, solid grid.
pub fn generate(spec: &ShapeSpec) -> VoxelGrid {
    let layout = spec.layout();
    VoxelGrid::from_fn(spec.dims(), |x, y, z| layout.contains(x, y, z) as u8 as f64)
        .expect("resolution is at least MIN_RESOLUTION")
}

/// Marks every empty cell not 6-connected to the grid boundary through empty
/// cells as occupied.
pub fn fill_solid(grid: &VoxelGrid) -> Result<VoxelGrid> {
    if !grid.is_binary() {
        return Err(Error::invalid("fill_solid needs a binary grid"));
    }
    let dims = grid.dims();
    let values = grid.values();
    let mut outside = vec![false; dims.len()];
    let mut queue = VecDeque::new();
    for (i, &v) in values.iter().enumerate() {
        let (x, y, z) = dims.coords(i);
        let on_boundary = x == 0
            || y == 0
            || z == 0
            || x + 1 == dims.nx
            || y + 1 == dims.ny
            || z + 1 == dims.nz;
        if on_boundary && v == 0.0 {
            outside[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y, z) = dims.coords(i);
        let (x, y, z) = (x as i64, y as i64, z as i64);
        for (dx, dy, dz) in [
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ] {
            let (a, b, c) = (x + dx, y + dy, z + dz);
            if !dims.contains(a, b, c) {
                continue;
            }
            let j = dims.index(a as usize, b as usize, c as usize);
            if !outside[j] && values[j] == 0.0 {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    let filled = outside.iter().map(|&o| if o { 0.0 } else { 1.0 }).collect();
    VoxelGrid::from_values(dims, filled)
}
