use std::time::Instant;

use anyhow::Context;
use log::info;
use serde::Serialize;

use objfield::dataset::{psnr, ssim, SceneDataset, Split, ViewRole};
use objfield::image_io::RgbImage;
use objfield::nn::{DecoderConfig, Model};
use objfield::render::{render, RenderOptions};
use objfield::train::{mean_psnr, score_views};
use objfield::{BoundingVolume, Camera, ObjectInstance, Pose, Scene, Vec3};

use super::{bad_input, load_model, load_scene, prepare, require};
use crate::args::{BenchArgs, EvalArgs};
use crate::config::{section, set, BenchConfig, EvalConfig};
use crate::manifest::Manifest;
use crate::output::OutDir;
use crate::{usage, CliResult};

#[derive(Serialize)]
struct PairMetrics {
    psnr_db: f64,
    exact_match: bool,
    ssim: f64,
}

#[derive(Serialize)]
struct ViewMetrics {
    scene: String,
    index: usize,
    psnr_db: f64,
    ssim: f64,
}

#[derive(Serialize)]
struct DatasetMetrics {
    role: String,
    mean_psnr_db: f64,
    mean_ssim: f64,
    views: Vec<ViewMetrics>,
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let c = &a.common;
    if let (Some(pa), Some(pb)) = (&a.a, &a.b) {
        require(pa, "image")?;
        require(pb, "image")?;
        let ia = RgbImage::load_png(pa).map_err(bad_input(pa))?;
        let ib = RgbImage::load_png(pb).map_err(bad_input(pb))?;
        if (ia.width(), ia.height()) != (ib.width(), ib.height()) {
            return Err(usage("the two images differ in size"));
        }
        prepare(&c.out, c.threads)?;
        let mut manifest = Manifest::new("eval", &toml::Table::new())?;
        manifest.threads = c.threads;
        manifest.input(pa)?;
        manifest.input(pb)?;
        let out = OutDir::create(&c.out)?;
        let p = psnr(&ia, &ib)?;
        let metrics = PairMetrics {
            psnr_db: p.db,
            exact_match: p.exact_match,
            ssim: ssim(&ia, &ib)?,
        };
        info!("PSNR {} dB, SSIM {:.6}", metrics.psnr_db, metrics.ssim);
        out.write(
            "metrics.toml",
            toml::to_string_pretty(&metrics).context("serializing metrics")?,
        )?;
        return manifest.finish(&out);
    }

    let (Some(ckpt), Some(data)) = (&a.checkpoint, &a.data) else {
        return Err(usage("give --a and --b, or --checkpoint and --data"));
    };
    let mut cfg: EvalConfig = section(c.config.as_deref(), "eval")?;
    set!(cfg.role, a.role.clone());
    set!(cfg.samples, a.samples);
    let role = ViewRole::parse(&cfg.role).map_err(|e| usage(e.to_string()))?;
    if cfg.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let model = load_model(ckpt)?;
    require(data, "dataset")?;
    let dataset = SceneDataset::load(data).map_err(bad_input(data))?;
    let records: Vec<_> = match &a.scene_name {
        Some(name) => {
            let r: Vec<_> = dataset.scenes.iter().filter(|s| &s.name == name).collect();
            if r.is_empty() {
                return Err(usage(format!("dataset has no scene {name:?}")));
            }
            r
        }
        None => dataset.split(Split::Train).collect(),
    };
    let mut scenes = Vec::new();
    for record in &records {
        let scene = match &a.layout {
            Some(layout) => load_scene(layout, &model)?,
            None => {
                if let Some(o) = record
                    .scene
                    .objects()
                    .iter()
                    .find(|o| o.id >= model.num_latents())
                {
                    return Err(usage(format!(
                        "scene {}: object {} has no latent in the checkpoint; pass --layout",
                        record.name, o.id
                    )));
                }
                record.scene_with_latents(|id| model.latent(id).expect("row checked above"))
            }
        };
        scenes.push(scene);
    }
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("eval", &cfg)?;
    manifest.threads = c.threads;
    manifest.input(ckpt)?;
    manifest.input(data)?;
    if let Some(layout) = &a.layout {
        manifest.input(layout)?;
    }
    let out = OutDir::create(&c.out)?;
    let mut views = Vec::new();
    let mut all = Vec::new();
    for (record, scene) in records.iter().zip(&scenes) {
        let scores = score_views(&model, record, scene, role, cfg.samples)?;
        for (index, s) in scores.iter().enumerate() {
            views.push(ViewMetrics {
                scene: record.name.clone(),
                index,
                psnr_db: s.psnr,
                ssim: s.ssim,
            });
        }
        all.extend(scores);
    }
    let report = DatasetMetrics {
        role: cfg.role.clone(),
        mean_psnr_db: mean_psnr(&all),
        mean_ssim: all.iter().map(|s| s.ssim).sum::<f64>() / all.len().max(1) as f64,
        views,
    };
    info!(
        "{} views: PSNR {:.2} dB, SSIM {:.4}",
        all.len(),
        report.mean_psnr_db,
        report.mean_ssim
    );
    out.write(
        "metrics.toml",
        toml::to_string_pretty(&report).context("serializing metrics")?,
    )?;
    manifest.finish(&out)
}

#[derive(Serialize)]
struct BenchReport {
    width: usize,
    height: usize,
    samples: usize,
    iterations: usize,
    threads: usize,
    min_ms: f64,
    median_ms: f64,
    mean_ms: f64,
    max_ms: f64,
}

/// A single randomly initialized object filling most of the frame.
pub fn bench_scene(
    seed: u64,
    width: usize,
    height: usize,
) -> objfield::Result<(Model, Scene, Camera)> {
    let config = DecoderConfig {
        density_scale: 50.0,
        ..DecoderConfig::default()
    };
    let model = Model::new(config, 1, 0.1, seed)?;
    let object = ObjectInstance {
        id: 0,
        pose: Pose::identity(),
        volume: BoundingVolume::new(Vec3::new(0.1, 0.08, 0.06))?,
        latent: model.latent(0)?,
    };
    let scene = Scene::new(vec![object], [1.0; 3])?;
    let focal = 2.0 * width.max(height) as f64;
    let camera = Camera::orbit(
        Vec3::new(0.4, -0.4, 0.3),
        Vec3::zeros(),
        focal,
        width,
        height,
    )?;
    Ok((model, scene, camera))
}

pub fn bench(a: BenchArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: BenchConfig = section(c.config.as_deref(), "bench")?;
    set!(cfg.width, a.width);
    set!(cfg.height, a.height);
    set!(cfg.samples, a.samples);
    set!(cfg.iterations, a.iterations);
    set!(cfg.warmup, a.warmup);
    set!(cfg.seed, c.seed);
    if cfg.width == 0 || cfg.height == 0 || cfg.samples == 0 || cfg.iterations == 0 {
        return Err(usage(
            "width, height, samples and iterations must be positive",
        ));
    }
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("bench", &cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    let mut out = OutDir::create(&c.out)?;
    let (model, scene, camera) = bench_scene(cfg.seed, cfg.width, cfg.height)?;
    let options = RenderOptions::new(cfg.samples);
    for _ in 0..cfg.warmup {
        render(&model, &scene, &camera, &options)?;
    }
    let mut times = Vec::with_capacity(cfg.iterations);
    let mut last = None;
    for _ in 0..cfg.iterations {
        let t = Instant::now();
        let img = render(&model, &scene, &camera, &options)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(img);
    }
    times.sort_by(f64::total_cmp);
    let report = BenchReport {
        width: cfg.width,
        height: cfg.height,
        samples: cfg.samples,
        iterations: cfg.iterations,
        threads: rayon::current_num_threads(),
        min_ms: times[0],
        median_ms: times[times.len() / 2],
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        max_ms: times[times.len() - 1],
    };
    info!(
        "{}x{} at {} samples: median {:.2} ms over {} runs",
        cfg.width, cfg.height, cfg.samples, report.median_ms, cfg.iterations
    );
    if let Some(img) = last {
        img.rgb.save_png(&out.fresh("render.png")?)?;
    }
    out.write(
        "bench.toml",
        toml::to_string_pretty(&report).context("serializing report")?,
    )?;
    out.mark_volatile("bench.toml");
    manifest.finish(&out)
}
