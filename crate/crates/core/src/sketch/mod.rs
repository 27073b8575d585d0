//! 2.5D sketches: per-pixel depth, surface normal and silhouette images for
//! one orthographic view.
//!
//! Pixel `(x, y)` corresponds to the voxel column `(x, y, ..)` of the grid
//! reoriented to the sketch's view. Images are stored row-major with `x`
//! fastest.

mod pnm;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::ViewAxis;

pub use pnm::{
    depth_from_pfm_bytes, depth_to_pfm_bytes, normal_from_pfm_bytes, normal_to_pfm_bytes,
    silhouette_from_pgm_bytes, silhouette_to_pgm_bytes,
};

/// Depth in voxel layers along the view direction; `+inf` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub const BACKGROUND: f32 = f32::INFINITY;

    pub fn new_background(width: usize, height: usize) -> Result<Self> {
        check_size(width, height)?;
        Ok(Self {
            width,
            height,
            values: vec![Self::BACKGROUND; width * height],
        })
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_size(width, height)?;
        check_len(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f32) {
        self.values[y * self.width + x] = depth;
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.get(x, y) != Self::BACKGROUND
    }

    /// The depth rounded to the nearest voxel layer (ties away from zero), or
    /// `None` for background.
    pub fn layer(&self, x: usize, y: usize) -> Option<i64> {
        let d = self.get(x, y);
        (d != Self::BACKGROUND).then(|| f64::from(d).round() as i64)
    }
}

/// Unit surface normals `(n_a, n_b, n_c)`, defined only on foreground pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    values: Vec<Option<[f32; 3]>>,
}

impl NormalMap {
    pub fn new_undefined(width: usize, height: usize) -> Result<Self> {
        check_size(width, height)?;
        Ok(Self {
            width,
            height,
            values: vec![None; width * height],
        })
    }

    pub fn from_values(width: usize, height: usize, values: Vec<Option<[f32; 3]>>) -> Result<Self> {
        check_size(width, height)?;
        check_len(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Option<[f32; 3]>] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[f32; 3]> {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, normal: Option<[f32; 3]>) {
        self.values[y * self.width + x] = normal;
    }

    /// Pixelwise `n -> -n`.
    pub fn negated(&self) -> NormalMap {
        NormalMap {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|n| n.map(|[a, b, c]| [-a, -b, -c]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilhouetteMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl SilhouetteMask {
    pub fn new(width: usize, height: usize, fill: bool) -> Result<Self> {
        check_size(width, height)?;
        Ok(Self {
            width,
            height,
            values: vec![fill; width * height],
        })
    }

    pub fn from_values(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        check_size(width, height)?;
        check_len(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    /// Bounds-checked lookup; `false` outside the image.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, inside: bool) {
        self.values[y * self.width + x] = inside;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}

/// Depth, normal and silhouette images of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSet {
    pub depth: DepthMap,
    pub normal: NormalMap,
    pub silhouette: SilhouetteMask,
    pub view: ViewAxis,
}

/// Maximum deviation from unit length tolerated for a defined normal.
pub const NORMAL_UNIT_TOLERANCE: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// The three images do not share width and height.
    SizeMismatch,
    /// Silhouette set but depth is background.
    OrphanSilhouette,
    /// Finite depth outside the silhouette.
    UnmaskedDepth,
    /// Foreground depth that is negative or not a number.
    InvalidDepth,
    /// Foreground pixel without a normal.
    MissingNormal,
    /// Background pixel with a normal.
    StrayNormal,
    NonUnitNormal,
}

/// One violated pixel class: how many pixels violate it and the first one in
/// row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub pixels: usize,
    pub first: (usize, usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}: {} pixel(s), first at ({}, {})",
            self.kind, self.pixels, self.first.0, self.first.1
        )
    }
}

impl SketchSet {
    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    /// Checks the bundle invariants. Returns an empty list iff they all hold.
    pub fn validate(&self) -> Vec<Violation> {
        let (w, h) = (self.depth.width, self.depth.height);
        if (self.normal.width, self.normal.height) != (w, h)
            || (self.silhouette.width, self.silhouette.height) != (w, h)
        {
            return vec![Violation {
                kind: ViolationKind::SizeMismatch,
                pixels: 0,
                first: (0, 0),
            }];
        }

        let mut found: Vec<Violation> = Vec::new();
        let mut record = |kind: ViolationKind, x: usize, y: usize| {
            match found.iter_mut().find(|v| v.kind == kind) {
                Some(v) => v.pixels += 1,
                None => found.push(Violation {
                    kind,
                    pixels: 1,
                    first: (x, y),
                }),
            }
        };

        for y in 0..h {
            for x in 0..w {
                let d = self.depth.get(x, y);
                let fg = d != DepthMap::BACKGROUND;
                let sil = self.silhouette.get(x, y);
                let n = self.normal.get(x, y);
                match (sil, fg) {
                    (true, false) => record(ViolationKind::OrphanSilhouette, x, y),
                    (false, true) => record(ViolationKind::UnmaskedDepth, x, y),
                    _ => {}
                }
                if fg && !(d >= 0.0 && d.is_finite()) {
                    record(ViolationKind::InvalidDepth, x, y);
                }
                match (fg, n) {
                    (true, None) => record(ViolationKind::MissingNormal, x, y),
                    (false, Some(_)) => record(ViolationKind::StrayNormal, x, y),
                    (true, Some([a, b, c])) => {
                        let len = (a * a + b * b + c * c).sqrt();
                        if len.is_nan() || (len - 1.0).abs() > NORMAL_UNIT_TOLERANCE {
                            record(ViolationKind::NonUnitNormal, x, y);
                        }
                    }
                    (false, None) => {}
                }
            }
        }
        found
    }

    /// The three files a sketch is stored in: `P.depth.pfm`, `P.normal.pfm`,
    /// `P.sil.pgm`, plus the one-line view tag `P.view`.
    pub fn paths(prefix: impl AsRef<Path>) -> [PathBuf; 4] {
        let p = prefix.as_ref().as_os_str();
        let with = |suffix: &str| {
            let mut s = p.to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        [
            with(".depth.pfm"),
            with(".normal.pfm"),
            with(".sil.pgm"),
            with(".view"),
        ]
    }

    pub fn save(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let [depth, normal, sil, view] = Self::paths(prefix);
        write_depth_pfm(&self.depth, depth)?;
        write_normal_pfm(&self.normal, normal)?;
        write_sil_pgm(&self.silhouette, sil)?;
        fs::write(view, format!("{}\n", self.view))?;
        Ok(())
    }

    /// Loads a sketch saved by [`SketchSet::save`]. A missing view tag means `+z`.
    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        let [depth, normal, sil, view] = Self::paths(prefix);
        let view = match fs::read_to_string(&view) {
            Ok(s) => s.parse()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ViewAxis::PosZ,
            Err(e) => return Err(e.into()),
        };
        let sketch = SketchSet {
            depth: read_depth_pfm(depth)?,
            normal: read_normal_pfm(normal)?,
            silhouette: read_sil_pgm(sil)?,
            view,
        };
        if (sketch.normal.width, sketch.normal.height) != (sketch.depth.width, sketch.depth.height)
            || (sketch.silhouette.width, sketch.silhouette.height)
                != (sketch.depth.width, sketch.depth.height)
        {
            return Err(Error::invalid(format!(
                "sketch images disagree in size: depth {}x{}, normal {}x{}, silhouette {}x{}",
                sketch.depth.width,
                sketch.depth.height,
                sketch.normal.width,
                sketch.normal.height,
                sketch.silhouette.width,
                sketch.silhouette.height
            )));
        }
        Ok(sketch)
    }
}

pub fn read_depth_pfm(path: impl AsRef<Path>) -> Result<DepthMap> {
    depth_from_pfm_bytes(&fs::read(path)?)
}

pub fn write_depth_pfm(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, depth_to_pfm_bytes(map))?;
    Ok(())
}

pub fn read_normal_pfm(path: impl AsRef<Path>) -> Result<NormalMap> {
    normal_from_pfm_bytes(&fs::read(path)?)
}

pub fn write_normal_pfm(map: &NormalMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, normal_to_pfm_bytes(map))?;
    Ok(())
}

pub fn read_sil_pgm(path: impl AsRef<Path>) -> Result<SilhouetteMask> {
    silhouette_from_pgm_bytes(&fs::read(path)?)
}

pub fn write_sil_pgm(mask: &SilhouetteMask, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, silhouette_to_pgm_bytes(mask))?;
    Ok(())
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image size must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if len != width * height {
        return Err(Error::invalid(format!(
            "{len} pixels supplied for a {width}x{height} image"
        )));
    }
    Ok(())
}
