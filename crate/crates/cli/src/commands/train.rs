use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use log::info;
use serde::Serialize;

use objfield::dataset::{generate_dataset, DatasetConfig, SceneDataset, ViewRole};
use objfield::image_io::RgbImage;
use objfield::nn::save_checkpoint;
use objfield::scene::{ObjectDescription, SceneDescription};
use objfield::train::{
    finetune, mean_psnr, score_views, FinetuneConfig, FinetuneMode, Observation, TrainConfig,
};
use objfield::Scene;

use super::{bad_input, load_model, prepare, require};
use crate::args::{GenDataArgs, InvertArgs, PretrainArgs};
use crate::config::{section, set, CameraConfig};
use crate::manifest::Manifest;
use crate::output::OutDir;
use crate::{usage, CliResult};

pub fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: DatasetConfig = section(c.config.as_deref(), "gen-data")?;
    set!(cfg.train_objects, a.train_objects);
    set!(cfg.test_objects, a.test_objects);
    set!(cfg.multi_object_scenes, a.multi_object_scenes);
    set!(cfg.views, a.views);
    set!(cfg.held_out_views, a.held_out_views);
    set!(cfg.input_views, a.input_views);
    set!(cfg.novel_views, a.novel_views);
    set!(cfg.width, a.width);
    set!(cfg.height, a.height);
    set!(cfg.focal, a.focal);
    set!(cfg.camera_distance, a.camera_distance);
    set!(cfg.background, a.background);
    set!(cfg.grasps_per_object, a.grasps_per_object);
    set!(cfg.perturbations, a.perturbations);
    set!(cfg.gripper_width, a.gripper_width);
    set!(cfg.oracle_samples, a.oracle_samples);
    set!(cfg.seed, c.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("gen-data", &cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    let out = OutDir::create(&c.out)?;
    info!(
        "generating {} train, {} test and {} multi-object scenes",
        cfg.train_objects, cfg.test_objects, cfg.multi_object_scenes
    );
    let dataset = generate_dataset(&cfg)?;
    dataset.save(out.root())?;
    manifest.finish(&out)
}

pub fn pretrain(a: PretrainArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: TrainConfig = section(c.config.as_deref(), "pretrain")?;
    let d = &a.decoder;
    set!(cfg.decoder.latent_dim, d.latent_dim);
    set!(cfg.decoder.width, d.width);
    set!(cfg.decoder.pos_freqs, d.pos_freqs);
    set!(cfg.decoder.dir_freqs, d.dir_freqs);
    set!(cfg.decoder.include_input, d.include_input);
    set!(cfg.decoder.coord_scale, d.coord_scale);
    set!(cfg.decoder.density_scale, d.density_scale);
    set!(cfg.optimizer.lr, a.optimizer.lr);
    set!(cfg.optimizer.decay, a.optimizer.decay);
    set!(cfg.optimizer.eps, a.optimizer.eps);
    set!(cfg.lambda, a.lambda);
    set!(cfg.rays_per_batch, a.rays_per_batch);
    set!(cfg.grasps_per_batch, a.grasps_per_batch);
    set!(cfg.samples, a.samples);
    set!(cfg.epochs, a.epochs);
    if a.max_steps.is_some() {
        cfg.max_steps = a.max_steps;
    }
    set!(cfg.latent_std, a.latent_std);
    set!(cfg.log_every, a.log_every);
    set!(cfg.seed, c.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    require(&a.data, "dataset")?;
    prepare(&c.out, c.threads)?;
    let dataset = SceneDataset::load(&a.data).map_err(bad_input(&a.data))?;

    let mut manifest = Manifest::new("pretrain", &cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    manifest.input(&a.data)?;
    let out = OutDir::create(&c.out)?;
    let mut log = OpenOptions::new()
        .append(true)
        .create_new(true)
        .open(out.fresh("train.log")?)?;
    let mut log_error = None;
    let outcome = objfield::train::pretrain(&dataset, &cfg, |e| {
        if let Err(err) = writeln!(log, "{e}") {
            log_error.get_or_insert(err);
        }
    })?;
    if let Some(e) = log_error {
        return Err(anyhow::Error::from(e).context("writing train.log").into());
    }
    let metadata = toml::to_string(&cfg).context("serializing config")?;
    save_checkpoint(&out.fresh("model.ckpt")?, &outcome.model, &metadata)?;
    info!("trained {} steps", outcome.steps);
    manifest.finish(&out)
}

/// Settings recorded for `invert`.
#[derive(Serialize)]
struct InvertSettings {
    finetune: FinetuneConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    role: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    camera: Option<CameraConfig>,
}

/// A layout without latent references: only poses and volumes matter.
fn plain_layout(path: &Path) -> CliResult<Scene> {
    require(path, "layout")?;
    let mut desc = SceneDescription::load(path).map_err(bad_input(path))?;
    for o in &mut desc.objects {
        o.latent_row = None;
        o.latent_file = None;
        o.latent = None;
    }
    desc.resolve(Path::new("."), None, 0)
        .map_err(bad_input(path))
}

#[derive(Serialize)]
struct ViewMetrics {
    index: usize,
    psnr_db: f64,
    ssim: f64,
}

#[derive(Serialize)]
struct NovelReport {
    scene: String,
    mean_psnr_db: f64,
    views: Vec<ViewMetrics>,
}

pub fn invert(a: InvertArgs) -> CliResult<()> {
    let c = &a.common;
    let mut cfg: FinetuneConfig = section(c.config.as_deref(), "invert")?;
    if let Some(m) = &a.mode {
        cfg.mode = FinetuneMode::parse(m).map_err(|e| usage(e.to_string()))?;
    }
    set!(cfg.epochs, a.epochs);
    set!(cfg.rays_per_batch, a.rays_per_batch);
    set!(cfg.samples, a.samples);
    set!(cfg.optimizer.lr, a.optimizer.lr);
    set!(cfg.optimizer.decay, a.optimizer.decay);
    set!(cfg.optimizer.eps, a.optimizer.eps);
    set!(cfg.latent_std, a.latent_std);
    set!(cfg.seed, c.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let model = load_model(&a.checkpoint)?;

    let mut manifest_inputs = vec![a.checkpoint.clone()];
    let (layout, observations, record, settings) = match (&a.data, &a.layout) {
        (Some(data), None) => {
            let name = a.scene_name.as_deref().unwrap_or_default();
            let role = ViewRole::parse(&a.role).map_err(|e| usage(e.to_string()))?;
            require(data, "dataset")?;
            let dataset = SceneDataset::load(data).map_err(bad_input(data))?;
            let record = dataset
                .scenes
                .into_iter()
                .find(|s| s.name == name)
                .ok_or_else(|| usage(format!("dataset has no scene {name:?}")))?;
            let observations: Vec<Observation> = record
                .views_with(role)
                .map(|v| Observation {
                    camera: v.camera.clone(),
                    image: v.image.clone(),
                })
                .collect();
            if observations.is_empty() {
                return Err(usage(format!("scene {name} has no {} views", a.role)));
            }
            manifest_inputs.push(data.join(name));
            let settings = InvertSettings {
                finetune: cfg.clone(),
                role: Some(a.role.clone()),
                camera: None,
            };
            (record.scene.clone(), observations, Some(record), settings)
        }
        (None, Some(layout_path)) => {
            let image_path = a
                .image
                .as_deref()
                .expect("clap requires --image with --layout");
            require(image_path, "image")?;
            let image = RgbImage::load_png(image_path).map_err(bad_input(image_path))?;
            let mut camera = CameraConfig::default();
            camera.apply(&a.camera);
            camera.width = image.width();
            camera.height = image.height();
            let observations = vec![Observation {
                camera: camera.camera()?,
                image,
            }];
            manifest_inputs.push(layout_path.clone());
            manifest_inputs.push(image_path.to_path_buf());
            let settings = InvertSettings {
                finetune: cfg.clone(),
                role: None,
                camera: Some(camera),
            };
            (plain_layout(layout_path)?, observations, None, settings)
        }
        _ => {
            return Err(usage(
                "give either --data with --scene-name, or --layout with --image",
            ))
        }
    };
    if layout.objects().is_empty() {
        return Err(usage("the layout has no objects to invert"));
    }
    prepare(&c.out, c.threads)?;

    let mut manifest = Manifest::new("invert", &settings)?;
    manifest.seed = Some(cfg.seed);
    manifest.threads = c.threads;
    for p in &manifest_inputs {
        manifest.input(p)?;
    }
    let out = OutDir::create(&c.out)?;
    info!(
        "fitting {} object(s) to {} image(s), mode {:?}",
        layout.objects().len(),
        observations.len(),
        cfg.mode
    );
    let outcome = finetune(&model, &layout, &observations, &cfg)?;
    let log: String = outcome.log.iter().map(|e| format!("{e}\n")).collect();
    out.write("invert.log", log)?;
    info!(
        "best full-image loss {:.6e} after epoch {}",
        outcome.best_loss, outcome.best_epoch
    );
    save_checkpoint(
        &out.fresh("model.ckpt")?,
        &outcome.model,
        &toml::to_string(&cfg).context("serializing config")?,
    )?;
    let desc = SceneDescription {
        background: outcome.scene.background(),
        objects: outcome
            .scene
            .objects()
            .iter()
            .map(|o| ObjectDescription {
                latent: Some(o.latent.values().to_vec()),
                ..ObjectDescription::from_object(o)
            })
            .collect(),
    };
    out.write("layout.toml", desc.to_toml()?)?;

    if let Some(record) = record {
        let scores = score_views(
            &outcome.model,
            &record,
            &outcome.scene,
            ViewRole::Novel,
            cfg.samples,
        )?;
        if !scores.is_empty() {
            let report = NovelReport {
                scene: record.name.clone(),
                mean_psnr_db: mean_psnr(&scores),
                views: scores
                    .iter()
                    .enumerate()
                    .map(|(index, s)| ViewMetrics {
                        index,
                        psnr_db: s.psnr,
                        ssim: s.ssim,
                    })
                    .collect(),
            };
            info!("novel-view PSNR {:.2} dB", report.mean_psnr_db);
            out.write(
                "novel_metrics.toml",
                toml::to_string_pretty(&report).context("serializing metrics")?,
            )?;
        }
    }
    manifest.finish(&out)
}
