//! Dense voxel occupancy grids, axis-aligned view reorientation and the VGRD
//! file format.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub const fn from_array(a: [usize; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Linear index of `(x, y, z)`: z fastest, then y, then x.
    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.ny + y) * self.nz + z
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let z = index % self.nz;
        let xy = index / self.nz;
        (xy / self.ny, xy % self.ny, z)
    }

    pub const fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Occupancy threshold `tau` in the open interval `(0, 1)`.
///
/// A cell counts as occupied when `v >= tau`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::invalid(format!("threshold {tau} outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_occupied(self, v: f64) -> bool {
        v >= self.0
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Self(0.5)
    }
}

/// One of the six axis-aligned viewing directions.
///
/// The canonical camera looks along `+Z`. Every other view is a proper
/// rotation (a signed axis permutation with determinant +1), so the
/// `(x, y, depth)` frame stays right-handed in every view. The table, written
/// as "new axis takes old axis", with `~` meaning reflected (`n - 1 - i`):
///
/// | view | x'  | y'  | z' (depth) |
/// |------|-----|-----|------------|
/// | `+Z` | x   | y   | z          |
/// | `-Z` | ~x  | y   | ~z         |
/// | `+X` | ~z  | y   | x          |
/// | `-X` | z   | y   | ~x         |
/// | `+Y` | x   | ~z  | y          |
/// | `-Y` | x   | z   | ~y         |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl ViewAxis {
    pub const ALL: [ViewAxis; 6] = [
        ViewAxis::PosX,
        ViewAxis::NegX,
        ViewAxis::PosY,
        ViewAxis::NegY,
        ViewAxis::PosZ,
        ViewAxis::NegZ,
    ];

    /// For each new axis: the source axis and whether it is reflected.
    const fn axis_map(self) -> [(usize, bool); 3] {
        match self {
            ViewAxis::PosZ => [(0, false), (1, false), (2, false)],
            ViewAxis::NegZ => [(0, true), (1, false), (2, true)],
            ViewAxis::PosX => [(2, true), (1, false), (0, false)],
            ViewAxis::NegX => [(2, false), (1, false), (0, true)],
            ViewAxis::PosY => [(0, false), (2, true), (1, false)],
            ViewAxis::NegY => [(0, false), (2, false), (1, true)],
        }
    }

    /// The view whose reorientation undoes this one.
    pub const fn inverse(self) -> Self {
        match self {
            ViewAxis::PosZ => ViewAxis::PosZ,
            ViewAxis::NegZ => ViewAxis::NegZ,
            ViewAxis::PosX => ViewAxis::NegX,
            ViewAxis::NegX => ViewAxis::PosX,
            ViewAxis::PosY => ViewAxis::NegY,
            ViewAxis::NegY => ViewAxis::PosY,
        }
    }

    /// Grid dimensions as seen from this view.
    pub fn view_dims(self, world: Dims) -> Dims {
        let w = world.as_array();
        let map = self.axis_map();
        Dims::new(w[map[0].0], w[map[1].0], w[map[2].0])
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            ViewAxis::PosX => "+x",
            ViewAxis::NegX => "-x",
            ViewAxis::PosY => "+y",
            ViewAxis::NegY => "-y",
            ViewAxis::PosZ => "+z",
            ViewAxis::NegZ => "-z",
        }
    }
}

impl fmt::Display for ViewAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "+x" | "x" => Ok(ViewAxis::PosX),
            "-x" => Ok(ViewAxis::NegX),
            "+y" | "y" => Ok(ViewAxis::PosY),
            "-y" => Ok(ViewAxis::NegY),
            "+z" | "z" => Ok(ViewAxis::PosZ),
            "-z" => Ok(ViewAxis::NegZ),
            other => Err(Error::invalid(format!("unknown view '{other}'"))),
        }
    }
}

/// Applies the view's signed axis permutation to a dense `(x, y, z)` field.
pub(crate) fn permute_field(dims: Dims, values: &[f64], view: ViewAxis) -> (Dims, Vec<f64>) {
    if view == ViewAxis::PosZ {
        return (dims, values.to_vec());
    }
    let src_dims = dims.as_array();
    let map = view.axis_map();
    let out_dims = view.view_dims(dims);
    let mut out = Vec::with_capacity(values.len());
    let mut src = [0usize; 3];
    for a in 0..out_dims.nx {
        for b in 0..out_dims.ny {
            for c in 0..out_dims.nz {
                for (i, &coord) in [a, b, c].iter().enumerate() {
                    let (axis, flip) = map[i];
                    src[axis] = if flip { src_dims[axis] - 1 - coord } else { coord };
                }
                out.push(values[dims.index(src[0], src[1], src[2])]);
            }
        }
    }
    (out_dims, out)
}

/// Dense occupancy field with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new_filled(dims: Dims, value: f64) -> Result<Self> {
        check_dims(dims)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("fill value {value} outside [0, 1]")));
        }
        Ok(Self {
            dims,
            values: vec![value; dims.len()],
        })
    }

    pub fn empty(dims: Dims) -> Result<Self> {
        Self::new_filled(dims, 0.0)
    }

    /// Builds a grid from values in storage order.
    pub fn from_values(dims: Dims, values: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        if values.len() != dims.len() {
            return Err(Error::invalid(format!(
                "{} values supplied for a {dims} grid",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!("value {v} at index {i} outside [0, 1]")));
        }
        Ok(Self { dims, values })
    }

    /// Builds a grid by evaluating `f` at every cell.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut values = Vec::with_capacity(dims.len());
        for x in 0..dims.nx {
            for y in 0..dims.ny {
                for z in 0..dims.nz {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::from_values(dims, values)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }

    /// Stores `value` clamped to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.dims.index(x, y, z);
        self.values[i] = value.clamp(0.0, 1.0);
    }

    /// The depth column at pixel `(x, y)`, indexed by `z`.
    #[inline]
    pub fn column(&self, x: usize, y: usize) -> &[f64] {
        let start = self.dims.index(x, y, 0);
        &self.values[start..start + self.dims.nz]
    }

    /// Applies `f` to every value in place, clamping the result to `[0, 1]`.
    pub fn map_in_place(&mut self, mut f: impl FnMut(usize, f64) -> f64) {
        for (i, v) in self.values.iter_mut().enumerate() {
            *v = f(i, *v).clamp(0.0, 1.0);
        }
    }

    pub fn occupied_count(&self, tau: Threshold) -> usize {
        self.values.iter().filter(|&&v| tau.is_occupied(v)).count()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn binarize(&self, tau: Threshold) -> VoxelGrid {
        VoxelGrid {
            dims: self.dims,
            values: self
                .values
                .iter()
                .map(|&v| if tau.is_occupied(v) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// The grid as seen from `view`: the returned grid's `+Z` axis is the
    /// viewing direction. See [`ViewAxis`] for the axis table.
    pub fn reorient(&self, view: ViewAxis) -> VoxelGrid {
        let (dims, values) = permute_field(self.dims, &self.values, view);
        VoxelGrid { dims, values }
    }

    pub fn to_vgrd_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.values.len());
        out.extend_from_slice(VGRD_MAGIC);
        for n in self.dims.as_array() {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_vgrd_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::format(bytes.len(), "truncated VGRD header"));
        }
        if &bytes[..4] != VGRD_MAGIC {
            return Err(Error::format(0, "missing VGRD magic"));
        }
        let mut n = [0usize; 3];
        for (i, slot) in n.iter_mut().enumerate() {
            let off = 4 + 4 * i;
            let v = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if v == 0 {
                return Err(Error::format(off, "zero grid dimension"));
            }
            *slot = v as usize;
        }
        let dims = Dims::from_array(n);
        let expected = dims
            .len()
            .checked_mul(4)
            .and_then(|b| b.checked_add(16))
            .ok_or_else(|| Error::format(4, "grid dimensions overflow"))?;
        if bytes.len() != expected {
            return Err(Error::format(
                bytes.len().min(expected),
                format!("expected {expected} bytes for a {dims} grid, found {}", bytes.len()),
            ));
        }
        let mut values = Vec::with_capacity(dims.len());
        for (i, chunk) in bytes[16..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !(-VGRD_SLACK..=1.0 + VGRD_SLACK).contains(&v) {
                return Err(Error::format(
                    16 + 4 * i,
                    format!("occupancy {v} outside [0, 1]"),
                ));
            }
            values.push(f64::from(v).clamp(0.0, 1.0));
        }
        Ok(VoxelGrid { dims, values })
    }

    pub fn read_vgrd(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_vgrd_bytes(&fs::read(path)?)
    }

    pub fn write_vgrd(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_vgrd_bytes())?;
        Ok(())
    }
}

const VGRD_MAGIC: &[u8; 4] = b"VGRD";
const VGRD_SLACK: f32 = 1e-6;

fn check_dims(dims: Dims) -> Result<()> {
    if dims.nx == 0 || dims.ny == 0 || dims.nz == 0 {
        return Err(Error::invalid(format!("grid dimensions must be positive, got {dims}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn filled_grids() {
        let g = VoxelGrid::new_filled(Dims::cube(2), 0.0).unwrap();
        assert_eq!(g.values(), &[0.0; 8]);
        let g = VoxelGrid::new_filled(Dims::cube(1), 1.0).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);
        let g = VoxelGrid::new_filled(Dims::cube(4), 0.5).unwrap();
        assert_eq!(g.values().len(), 64);
        assert_eq!(g.occupied_count(Threshold::default()), 64);
    }

    #[test]
    fn filled_rejects_bad_arguments() {
        assert!(VoxelGrid::new_filled(Dims::new(0, 2, 2), 0.0).is_err());
        assert!(VoxelGrid::new_filled(Dims::cube(2), 1.5).is_err());
        assert!(VoxelGrid::new_filled(Dims::cube(2), -0.1).is_err());
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.0).is_err());
    }

    #[test]
    fn binarize_is_closed_at_threshold() {
        let tau = Threshold::default();
        let g = VoxelGrid::new_filled(Dims::cube(3), 0.5).unwrap().binarize(tau);
        assert!(g.values().iter().all(|&v| v == 1.0));
        let g = VoxelGrid::new_filled(Dims::cube(3), 0.49).unwrap().binarize(tau);
        assert!(g.values().iter().all(|&v| v == 0.0));

        let bin = VoxelGrid::from_fn(Dims::cube(3), |x, y, z| ((x + y + z) % 2) as f64).unwrap();
        for t in [0.01, 0.3, 0.99] {
            assert_eq!(bin.binarize(Threshold::new(t).unwrap()), bin);
        }
    }

    #[test]
    fn storage_order_is_z_fastest() {
        let d = Dims::new(2, 3, 4);
        assert_eq!(d.index(0, 0, 1), 1);
        assert_eq!(d.index(0, 1, 0), 4);
        assert_eq!(d.index(1, 0, 0), 12);
        for i in 0..d.len() {
            let (x, y, z) = d.coords(i);
            assert_eq!(d.index(x, y, z), i);
        }
    }

    // Golden table: where the marked voxel (0, 1, 2) of a 3x4x5 grid lands.
    #[test]
    fn reorient_golden_positions() {
        let dims = Dims::new(3, 4, 5);
        let (x, y, z) = (0usize, 1usize, 2usize);
        let g = VoxelGrid::from_fn(dims, |a, b, c| ((a, b, c) == (x, y, z)) as u8 as f64).unwrap();
        let expected = [
            (ViewAxis::PosZ, Dims::new(3, 4, 5), (0, 1, 2)),
            (ViewAxis::NegZ, Dims::new(3, 4, 5), (2, 1, 2)),
            (ViewAxis::PosX, Dims::new(5, 4, 3), (2, 1, 0)),
            (ViewAxis::NegX, Dims::new(5, 4, 3), (2, 1, 2)),
            (ViewAxis::PosY, Dims::new(3, 5, 4), (0, 2, 1)),
            (ViewAxis::NegY, Dims::new(3, 5, 4), (0, 2, 2)),
        ];
        for (view, d, (ex, ey, ez)) in expected {
            let r = g.reorient(view);
            assert_eq!(r.dims(), d, "{view}");
            assert_eq!(r.get(ex, ey, ez), 1.0, "{view}");
            assert_eq!(r.occupied_count(Threshold::default()), 1, "{view}");
        }
    }

    #[test]
    fn reorient_neg_z_reflects_depth() {
        let n = 3;
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let g = VoxelGrid::from_fn(Dims::cube(n), |a, b, c| {
                        ((a, b, c) == (x, y, z)) as u8 as f64
                    })
                    .unwrap();
                    let r = g.reorient(ViewAxis::NegZ);
                    assert_eq!(r.get(n - 1 - x, y, n - 1 - z), 1.0);
                }
            }
        }
    }

    // Every view maps the 27 cells of a 3^3 grid bijectively, and each view
    // is a proper rotation (determinant +1).
    #[test]
    fn reorient_is_a_bijective_rotation() {
        let dims = Dims::cube(3);
        for view in ViewAxis::ALL {
            let mut seen = [false; 27];
            for i in 0..27 {
                let mut values = vec![0.0; 27];
                values[i] = 1.0;
                let g = VoxelGrid::from_values(dims, values).unwrap();
                let r = g.reorient(view);
                let hits: Vec<usize> = (0..27).filter(|&j| r.values()[j] == 1.0).collect();
                assert_eq!(hits.len(), 1);
                assert!(!seen[hits[0]]);
                seen[hits[0]] = true;
            }

            let map = view.axis_map();
            let mut m = [[0i32; 3]; 3];
            for (row, &(axis, flip)) in map.iter().enumerate() {
                m[row][axis] = if flip { -1 } else { 1 };
            }
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            assert_eq!(det, 1, "{view}");
        }
    }

    #[test]
    fn view_names_round_trip() {
        for view in ViewAxis::ALL {
            assert_eq!(view.as_str().parse::<ViewAxis>().unwrap(), view);
        }
        assert!("+w".parse::<ViewAxis>().is_err());
    }

    #[test]
    fn vgrd_layout() {
        let g = VoxelGrid::from_fn(Dims::new(1, 2, 3), |_, y, z| (y * 3 + z) as f64 / 8.0).unwrap();
        let bytes = g.to_vgrd_bytes();
        assert_eq!(&bytes[..4], b"VGRD");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 0.125);
        assert_eq!(VoxelGrid::from_vgrd_bytes(&bytes).unwrap(), g);
    }

    #[test]
    fn vgrd_reader_rejects_and_clamps() {
        let mut bytes = VoxelGrid::new_filled(Dims::cube(2), 0.5).unwrap().to_vgrd_bytes();
        bytes[16..20].copy_from_slice(&(1.0f32 + 5e-7).to_le_bytes());
        let g = VoxelGrid::from_vgrd_bytes(&bytes).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);

        bytes[20..24].copy_from_slice(&1.01f32.to_le_bytes());
        match VoxelGrid::from_vgrd_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("expected format error, got {other:?}"),
        }
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(VoxelGrid::from_vgrd_bytes(&bytes).is_err());

        assert!(VoxelGrid::from_vgrd_bytes(b"VGRX\x01\0\0\0\x01\0\0\0\x01\0\0\0\0\0\0\0").is_err());
        assert!(VoxelGrid::from_vgrd_bytes(&bytes[..30]).is_err());
    }

    fn arb_grid() -> impl Strategy<Value = VoxelGrid> {
        (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(nx, ny, nz)| {
            proptest::collection::vec(0.0f64..=1.0, nx * ny * nz).prop_map(move |values| {
                VoxelGrid::from_values(Dims::new(nx, ny, nz), values).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn reorient_then_inverse_is_identity(g in arb_grid(), vi in 0usize..6) {
            let view = ViewAxis::ALL[vi];
            prop_assert_eq!(g.reorient(view).reorient(view.inverse()), g);
        }

        #[test]
        fn reorient_preserves_occupied_count(g in arb_grid(), vi in 0usize..6, tau in 0.05f64..0.95) {
            let tau = Threshold::new(tau).unwrap();
            let view = ViewAxis::ALL[vi];
            prop_assert_eq!(g.reorient(view).occupied_count(tau), g.occupied_count(tau));
        }

        #[test]
        fn binarize_idempotent(g in arb_grid(), tau in 0.05f64..0.95) {
            let tau = Threshold::new(tau).unwrap();
            let once = g.binarize(tau);
            prop_assert_eq!(once.binarize(tau), once);
        }

        #[test]
        fn vgrd_round_trip_is_byte_identical(g in arb_grid()) {
            let bytes = g.to_vgrd_bytes();
            let back = VoxelGrid::from_vgrd_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_vgrd_bytes(), bytes);
        }
    }
}
