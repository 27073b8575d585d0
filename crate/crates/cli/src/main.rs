use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand};
use image::{GrayImage, Luma};

use voxsketch::consistency::{finite_diff_check, total_loss};
use voxsketch::metrics::{default_scales, iou, iou_scale_search};
use voxsketch::refine::{refine, Init};
use voxsketch::render::render_sketchset;
use voxsketch::shapes::{generate, MIN_RESOLUTION};
use voxsketch::{
    Dims, LossConfig, RefineConfig, ShapeKind, ShapeSpec, SketchSet, Threshold, ViewAxis,
    VoxelGrid,
};

/// Gradients are accepted when every sampled cell is within this of its
/// finite-difference estimate.
const GRAD_CHECK_TOLERANCE: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "voxsketch", version, about = "Voxel shapes from 2.5D sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural fixture shape as a VGRD file.
    GenShape {
        #[arg(long)]
        kind: ShapeKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_resolution)]
        res: usize,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Render depth, normal and silhouette images of a grid from one view.
    Render {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long, default_value = "+z", allow_hyphen_values = true)]
        view: ViewAxis,
        #[arg(long, default_value_t = Threshold::default().value(), value_parser = parse_tau)]
        tau: f64,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Reprojection loss of a grid against a sketch.
    Loss {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        sketch_prefix: PathBuf,
        #[arg(long, default_value_t = LossConfig::default().normal_weight)]
        normal_weight: f64,
    },
    /// Compare analytic gradients with finite differences.
    GradCheck {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        sketch_prefix: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
    },
    /// Fit a grid to one or more sketches.
    Refine {
        #[arg(long = "sketch-prefix", required = true)]
        sketch_prefixes: Vec<PathBuf>,
        /// `uniform:C` or the path of a VGRD file.
        #[arg(long, default_value = "uniform:0.5")]
        init: String,
        /// Grid size `NXxNYxNZ`; inferred from the sketches when omitted.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<Dims>,
        #[arg(long, default_value_t = RefineConfig::default().iterations)]
        iters: usize,
        #[arg(long, default_value_t = RefineConfig::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = RefineConfig::default().momentum)]
        momentum: f64,
        #[arg(long, default_value_t = RefineConfig::default().tv_weight)]
        tv: f64,
        #[arg(long, default_value_t = RefineConfig::default().binariness_weight)]
        bin: f64,
        #[arg(long, default_value_t = LossConfig::default().normal_weight)]
        normal_weight: f64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// IoU of a prediction against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        scale_search: bool,
        #[arg(long, default_value_t = Threshold::default().value(), value_parser = parse_tau)]
        tau: f64,
    },
    /// Grayscale PNG with one max-occupancy projection per axis.
    ExportPng {
        #[arg(long)]
        shape: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

fn parse_resolution(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n < MIN_RESOLUTION {
        return Err(format!("resolution must be at least {MIN_RESOLUTION}"));
    }
    Ok(n)
}

fn parse_tau(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    Threshold::new(t).map(Threshold::value).map_err(|e| e.to_string())
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{e}"))?;
    match parts[..] {
        [nx, ny, nz] if nx > 0 && ny > 0 && nz > 0 => Ok(Dims::new(nx, ny, nz)),
        _ => Err(format!("expected NXxNYxNZ with positive sizes, got '{s}'")),
    }
}

fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, message).exit()
}

fn read_grid(path: &Path) -> Result<VoxelGrid> {
    VoxelGrid::read_vgrd(path).with_context(|| format!("reading {}", path.display()))
}

fn write_grid(grid: &VoxelGrid, path: &Path) -> Result<()> {
    grid.write_vgrd(path).with_context(|| format!("writing {}", path.display()))
}

fn read_sketch(prefix: &Path) -> Result<SketchSet> {
    SketchSet::load(prefix).with_context(|| format!("reading sketch {}", prefix.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// World grid size implied by the sketches. Each view fixes two world axes;
/// an axis no view fixes takes the largest known extent.
fn infer_dims(sketches: &[SketchSet]) -> Result<Dims> {
    let mut known: [Option<usize>; 3] = [None; 3];
    for s in sketches {
        // view_dims only permutes, so it maps axis labels as well as sizes
        let axes = s.view.view_dims(Dims::new(0, 1, 2));
        for (axis, size) in [(axes.nx, s.width()), (axes.ny, s.height())] {
            match known[axis] {
                Some(prev) if prev != size => anyhow::bail!(
                    "sketches disagree on the extent of axis {}: {prev} vs {size}",
                    ["x", "y", "z"][axis]
                ),
                _ => known[axis] = Some(size),
            }
        }
    }
    let fallback = known.iter().flatten().copied().max().unwrap_or(0);
    Ok(Dims::from_array(known.map(|k| k.unwrap_or(fallback))))
}

fn projection_png(grid: &VoxelGrid) -> GrayImage {
    let d = grid.dims();
    // (horizontal axis, vertical axis, projected axis), +y or +z pointing up
    let panels = [(2usize, 1usize, 0usize), (0, 2, 1), (0, 1, 2)];
    let n = d.as_array();
    let gap = 1;
    let width: usize = panels.iter().map(|p| n[p.0]).sum::<usize>() + gap * (panels.len() - 1);
    let height = panels.iter().map(|p| n[p.1]).max().unwrap_or(0);
    let mut img = GrayImage::new(width as u32, height as u32);
    let mut left = 0;
    for &(h, v, p) in &panels {
        for i in 0..n[h] {
            for j in 0..n[v] {
                let mut peak = 0.0f64;
                let mut c = [0usize; 3];
                c[h] = i;
                c[v] = j;
                for k in 0..n[p] {
                    c[p] = k;
                    peak = peak.max(grid.get(c[0], c[1], c[2]));
                }
                let px = (peak * 255.0).round() as u8;
                img.put_pixel((left + i) as u32, (height - 1 - j) as u32, Luma([px]));
            }
        }
        left += n[h] + gap;
    }
    img
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenShape { kind, seed, res, out } => {
            let spec = ShapeSpec::new(kind, seed, res).unwrap_or_else(|e| usage_error(e));
            let grid = generate(&spec);
            write_grid(&grid, &out)?;
            println!("occupied={}", grid.occupied_count(Threshold::default()));
        }
        Command::Render { shape, view, tau, out_prefix } => {
            let grid = read_grid(&shape)?;
            let tau = Threshold::new(tau)?;
            let sketch = render_sketchset(&grid, view, tau);
            sketch
                .save(&out_prefix)
                .with_context(|| format!("writing sketch {}", out_prefix.display()))?;
            println!("foreground={}", sketch.silhouette.count());
        }
        Command::Loss { shape, sketch_prefix, normal_weight } => {
            let cfg = LossConfig { normal_weight, ..LossConfig::default() };
            cfg.validate().unwrap_or_else(|e| usage_error(e));
            let grid = read_grid(&shape)?;
            let sketch = read_sketch(&sketch_prefix)?;
            println!("{}", total_loss(&grid, &sketch, &cfg)?);
        }
        Command::GradCheck { shape, sketch_prefix, samples, h } => {
            let grid = read_grid(&shape)?;
            let sketch = read_sketch(&sketch_prefix)?;
            let err =
                finite_diff_check(&grid, &sketch, &LossConfig::default(), h, samples as usize)?;
            println!("max_abs_error={err:e}");
            if err > GRAD_CHECK_TOLERANCE {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Refine {
            sketch_prefixes,
            init,
            dims,
            iters,
            lr,
            momentum,
            tv,
            bin,
            normal_weight,
            out,
        } => {
            let init = match init.strip_prefix("uniform:") {
                Some(c) => Init::Uniform(c.parse().unwrap_or_else(|e| {
                    usage_error(format!("bad uniform init '{c}': {e}"))
                })),
                None => Init::FromGrid(init),
            };
            let cfg = RefineConfig {
                learning_rate: lr,
                momentum,
                iterations: iters,
                tv_weight: tv,
                binariness_weight: bin,
                loss: LossConfig { normal_weight, ..LossConfig::default() },
                init: init.clone(),
            };
            cfg.validate().unwrap_or_else(|e| usage_error(e));
            let sketches = sketch_prefixes
                .iter()
                .map(|p| read_sketch(p))
                .collect::<Result<Vec<_>>>()?;
            let start = match &init {
                Init::Uniform(c) => {
                    let dims = match dims {
                        Some(d) => d,
                        None => infer_dims(&sketches)?,
                    };
                    VoxelGrid::new_filled(dims, *c).unwrap_or_else(|e| usage_error(e))
                }
                Init::FromGrid(path) => read_grid(Path::new(path))?,
            };
            let result = refine(&start, &sketches, &cfg)?;
            write_grid(&result.final_grid, &out)?;

            let mut manifest = cfg.to_manifest();
            manifest.push_str(&format!("dims={}\n", start.dims()));
            for p in &sketch_prefixes {
                manifest.push_str(&format!("sketch={}\n", p.display()));
            }
            manifest.push_str(&format!("iterations_run={}\n", result.iterations_run));
            if let Some(last) = result.trajectory.last() {
                manifest.push_str(&format!("final_total={}\n", last.total));
            }
            let manifest_path = sibling(&out, ".manifest");
            std::fs::write(&manifest_path, manifest)
                .with_context(|| format!("writing {}", manifest_path.display()))?;
            let csv_path = sibling(&out, ".trajectory.csv");
            std::fs::write(&csv_path, result.trajectory_csv())
                .with_context(|| format!("writing {}", csv_path.display()))?;
            if let Some(last) = result.trajectory.last() {
                println!("final_total={}", last.total);
            }
        }
        Command::Eval { pred, gt, scale_search, tau } => {
            let tau = Threshold::new(tau)?;
            let p = read_grid(&pred)?;
            let g = read_grid(&gt)?;
            let (score, scale) = if scale_search {
                iou_scale_search(&p, &g, tau, &default_scales())?
            } else {
                (iou(&p, &g, tau)?, 1.0)
            };
            println!("iou={score}");
            println!("scale={scale}");
        }
        Command::ExportPng { shape, out } => {
            let grid = read_grid(&shape)?;
            projection_png(&grid)
                .save_with_format(&out, image::ImageFormat::Png)
                .with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
