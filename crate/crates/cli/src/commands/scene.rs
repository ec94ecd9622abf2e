use anyhow::Context;
use log::info;
use serde::Serialize;

use objfield::grasp::{evaluate, grasps_to_text, propose, FilterConfig, GripperModel};
use objfield::image_io::RgbImage;
use objfield::raymarch::Jitter;
use objfield::render::{render as render_image, render_grasp_field, Colormap, RenderOptions};
use objfield::voxel::{voxelize as voxelize_object, voxelize_scene};
use objfield::{ObjectInstance, Scene, Vec3};

use super::{load_model, load_scene, prepare};
use crate::args::{GraspArgs, RenderArgs, VoxelizeArgs};
use crate::config::{section, set, GraspConfig, RenderConfig, VoxelConfig};
use crate::manifest::Manifest;
use crate::output::OutDir;
use crate::{usage, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderKind {
    Color,
    Depth,
    GraspField,
}

impl RenderKind {
    fn command(self) -> &'static str {
        match self {
            RenderKind::Color => "render",
            RenderKind::Depth => "render-depth",
            RenderKind::GraspField => "render-graspfield",
        }
    }
}

/// Grayscale preview of a depth raster: near is white, far is dark and
/// pixels without depth are black.
fn depth_preview(depth: &objfield::image_io::DepthMap) -> objfield::Result<RgbImage> {
    let valid: Vec<f64> = depth
        .depth
        .iter()
        .zip(&depth.valid)
        .filter(|(_, &v)| v)
        .map(|(&d, _)| d)
        .collect();
    let lo = valid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = valid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let data = depth
        .depth
        .iter()
        .zip(&depth.valid)
        .flat_map(|(&d, &v)| {
            let g = if v { 1.0 - 0.8 * (d - lo) / span } else { 0.0 };
            [g; 3]
        })
        .collect();
    RgbImage::new(depth.width, depth.height, data)
}

pub fn render(a: RenderArgs, kind: RenderKind) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: RenderConfig = section(c.config.as_deref(), kind.command())?;
    cfg.camera.apply(&a.camera);
    set!(cfg.samples, a.samples);
    if a.background.is_some() {
        cfg.background = a.background;
    }
    set!(cfg.jitter, a.jitter);
    set!(cfg.seed, c.seed);
    if cfg.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let camera = cfg.camera.camera()?;
    let model = load_model(&a.checkpoint)?;
    let mut scene = load_scene(&a.layout, &model)?;
    if let Some(bg) = cfg.background {
        scene.set_background(bg);
    }
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new(kind.command(), &cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.layout)?;
    let out = OutDir::create(&c.out)?;
    let options = RenderOptions {
        samples: cfg.samples,
        jitter: if cfg.jitter {
            Jitter::Seeded(cfg.seed)
        } else {
            Jitter::None
        },
    };
    info!(
        "rendering {}x{} with {} samples per ray",
        camera.width, camera.height, cfg.samples
    );
    match kind {
        RenderKind::Color => {
            let img = render_image(&model, &scene, &camera, &options)?;
            img.rgb.save_png(&out.fresh("image.png")?)?;
        }
        RenderKind::Depth => {
            let img = render_image(&model, &scene, &camera, &options)?;
            img.depth.save(&out.fresh("depth.bin")?)?;
            depth_preview(&img.depth)?.save_png(&out.fresh("depth.png")?)?;
        }
        RenderKind::GraspField => {
            let img = render_grasp_field(
                &model,
                &model,
                &scene,
                &camera,
                &options,
                Colormap::RedGreen,
            )?;
            img.rgb.save_png(&out.fresh("graspfield.png")?)?;
        }
    }
    manifest.finish(&out)
}

/// The objects a command works on: all of them, or the one asked for.
fn pick_objects(scene: &Scene, id: Option<usize>) -> CliResult<Vec<&ObjectInstance>> {
    match id {
        None => Ok(scene.objects().iter().collect()),
        Some(id) => scene
            .object(id)
            .map(|o| vec![o])
            .ok_or_else(|| usage(format!("the layout has no object {id}"))),
    }
}

pub fn grasp(a: GraspArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: GraspConfig = section(c.config.as_deref(), "grasp")?;
    set!(cfg.res, a.res);
    set!(cfg.top_k, a.top_k);
    set!(cfg.t_open, a.t_open);
    set!(cfg.t_closed, a.t_closed);
    set!(cfg.gripper_width, a.gripper_width);
    set!(cfg.ground_plane, a.ground_plane);
    set!(cfg.seed, c.seed);
    if cfg.res < 2 || cfg.top_k < 1 {
        return Err(usage("--res must be at least 2 and --top-k at least 1"));
    }
    if !(cfg.t_open > 0.0 && cfg.t_closed > 0.0) {
        return Err(usage("--t-open and --t-closed must be positive"));
    }
    let gripper =
        GripperModel::new(cfg.gripper_width, cfg.seed).map_err(|e| usage(e.to_string()))?;
    let model = load_model(&a.checkpoint)?;
    let scene = load_scene(&a.layout, &model)?;
    let objects = pick_objects(&scene, a.object)?;
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("grasp", &cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.layout)?;
    let out = OutDir::create(&c.out)?;
    let filter = FilterConfig {
        t_open: cfg.t_open,
        t_closed: cfg.t_closed,
        ground_plane: cfg.ground_plane,
    };
    let mut proposals = Vec::new();
    for o in objects {
        proposals.extend(propose(&model, o, cfg.res, cfg.top_k)?);
    }
    let graded = evaluate(&model, &scene, &proposals, &gripper, &filter)?;
    info!(
        "{} of {} proposals pass the gripper filter",
        graded.iter().filter(|g| g.passed).count(),
        graded.len()
    );
    out.write("grasps.txt", grasps_to_text(&graded))?;
    manifest.finish(&out)
}

#[derive(Serialize)]
struct VoxelSummary {
    name: String,
    res: usize,
    occupied: usize,
}

#[derive(Serialize)]
struct VoxelReport {
    grids: Vec<VoxelSummary>,
}

pub fn voxelize(a: VoxelizeArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: VoxelConfig = section(c.config.as_deref(), "voxelize")?;
    set!(cfg.res, a.res);
    set!(cfg.threshold, a.threshold);
    if a.bounds.is_some() {
        cfg.bounds = a.bounds;
    }
    set!(cfg.ground_plane, a.ground_plane);
    if cfg.res < 2 || !(cfg.threshold > 0.0) {
        return Err(usage("--res must be at least 2 and --threshold positive"));
    }
    if let Some(b) = cfg.bounds {
        if !(0..3).all(|i| b[i + 3] > b[i]) {
            return Err(usage("--bounds must have min < max on every axis"));
        }
    }
    let model = load_model(&a.checkpoint)?;
    let scene = load_scene(&a.layout, &model)?;
    let objects = pick_objects(&scene, a.object)?;
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("voxelize", &cfg)?;
    manifest.threads = c.threads;
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.layout)?;
    let out = OutDir::create(&c.out)?;
    let mut grids = Vec::new();
    if let Some(b) = cfg.bounds {
        grids.push((
            "scene".to_string(),
            voxelize_scene(
                &model,
                &scene,
                Vec3::new(b[0], b[1], b[2]),
                Vec3::new(b[3], b[4], b[5]),
                cfg.res,
                cfg.threshold,
                cfg.ground_plane,
            )?,
        ));
    } else {
        for o in objects {
            grids.push((
                format!("object_{}", o.id),
                voxelize_object(&model, o, cfg.res, cfg.threshold)?,
            ));
        }
    }
    let mut report = VoxelReport { grids: Vec::new() };
    for (name, grid) in &grids {
        grid.save_sparse(&out.fresh(&format!("{name}.txt"))?)?;
        grid.save_bitmap(&out.fresh(&format!("{name}.vox"))?)?;
        info!(
            "{name}: {} of {} cells occupied",
            grid.occupied_count(),
            grid.occupancy.len()
        );
        report.grids.push(VoxelSummary {
            name: name.clone(),
            res: grid.res,
            occupied: grid.occupied_count(),
        });
    }
    out.write(
        "summary.toml",
        toml::to_string_pretty(&report).context("serializing summary")?,
    )?;
    manifest.finish(&out)
}
