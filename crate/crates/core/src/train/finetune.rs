//! Test-time fitting to images: latent inversion and decoder fine-tuning.
//!
//! Every object in the target scene gets a fresh random latent. Only the
//! image loss is optimized; grasp annotations are never used. After each
//! epoch the loss over all target pixels is measured without jitter, and
//! the returned model is the iterate where that loss was lowest.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{RmsProp, RmsPropConfig};
use super::pretrain::{joint_loss, GraspBatch, LogEntry};
use super::tape_render::sample_rays;
use crate::dataset::psnr_from_mse;
use crate::error::{invalid, Error, Result};
use crate::image_io::RgbImage;
use crate::nn::{Model, ParamGroup, ParamId, Tape};
use crate::raymarch::Jitter;
use crate::raytrace::{pixel_ray, trace_camera};
use crate::scene::{Camera, LatentCode, Scene};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneMode {
    /// Decoders frozen; only the latents move.
    #[default]
    LatentOnly,
    /// Latents fixed at their random draw; only the decoders move.
    DecoderOnly,
    Both,
}

impl FinetuneMode {
    pub fn trains(self, group: ParamGroup) -> bool {
        match self {
            FinetuneMode::LatentOnly => group == ParamGroup::Latent,
            FinetuneMode::DecoderOnly => group != ParamGroup::Latent,
            FinetuneMode::Both => true,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "latent" | "latent_only" => Ok(FinetuneMode::LatentOnly),
            "decoder" | "decoder_only" => Ok(FinetuneMode::DecoderOnly),
            "both" => Ok(FinetuneMode::Both),
            _ => Err(invalid(format!("unknown fine-tuning mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub mode: FinetuneMode,
    /// Passes over the target pixels.
    pub epochs: usize,
    pub rays_per_batch: usize,
    pub samples: usize,
    pub optimizer: RmsPropConfig,
    pub latent_std: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            mode: FinetuneMode::LatentOnly,
            epochs: 100,
            rays_per_batch: 1024,
            samples: 32,
            optimizer: RmsPropConfig {
                lr: 1e-2,
                ..RmsPropConfig::default()
            },
            latent_std: 0.1,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.rays_per_batch == 0 || self.samples == 0 {
            return Err(invalid("rays_per_batch and samples must be positive"));
        }
        if !(self.latent_std >= 0.0 && self.latent_std.is_finite()) {
            return Err(invalid("latent_std must be non-negative"));
        }
        Ok(())
    }
}

/// A target image and the camera it was taken with.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub camera: Camera,
    pub image: RgbImage,
}

pub struct FinetuneOutcome {
    /// The checkpoint's decoders (updated unless latent-only) with one
    /// latent-table row per scene object, in scene order.
    pub model: Model,
    /// The scene with the fitted latents attached.
    pub scene: Scene,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub log: Vec<LogEntry>,
}

/// Fine-tuning aborts after this many consecutive steps with a loss above
/// `DIVERGENCE_FACTOR` times the initial loss.
const DIVERGENCE_PATIENCE: usize = 100;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Fits latents (and per `mode` the decoders) of every object in `layout`
/// to `observations`. Latents in `layout` are ignored.
pub fn finetune(
    model: &Model,
    layout: &Scene,
    observations: &[Observation],
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    config.validate()?;
    if observations.is_empty() {
        return Err(invalid("fine-tuning needs at least one image"));
    }
    for o in observations {
        if o.image.width() != o.camera.width || o.image.height() != o.camera.height {
            return Err(Error::ShapeMismatch(
                "image size differs from its camera".into(),
            ));
        }
    }
    let ids_in_order: Vec<usize> = layout.objects().iter().map(|o| o.id).collect();
    let row_of = |id: usize| ids_in_order.iter().position(|&x| x == id);
    let mut work = model.with_latent_table(ids_in_order.len(), config.latent_std, config.seed)?;
    let trainable: Vec<ParamId> = work
        .params()
        .ids()
        .filter(|&id| config.mode.trains(work.group_of(id)))
        .collect();
    let mut opt = RmsProp::new(config.optimizer, work.params())?;

    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (k, o) in observations.iter().enumerate() {
        pool.extend(
            trace_camera(&o.camera, layout)
                .ray_pixel_index
                .iter()
                .map(|&p| (k, p)),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let background = layout.background();
    let all_rays: Vec<_> = pool
        .iter()
        .map(|&(k, p)| pixel_ray(&observations[k].camera, p))
        .collect();
    let eval_rays = sample_rays(layout, &all_rays, config.samples, Jitter::None, row_of)?;
    let eval_targets: Vec<[f64; 3]> = eval_rays
        .ray_index
        .iter()
        .map(|&i| observations[pool[i].0].image.pixel(pool[i].1))
        .collect();
    let evaluate = |m: &Model| -> Result<f64> {
        let mut tape = Tape::new();
        let mut bound = m.bind(&mut tape, |_| false);
        let none = GraspBatch::default();
        Ok(joint_loss(
            &mut tape,
            &mut bound,
            m,
            &eval_rays,
            &eval_targets,
            background,
            &none,
            0.1,
        )?
        .map_or(0.0, |(_, parts)| parts.rgb))
    };

    let mut best = (evaluate(&work)?, 0, work.params().clone());
    let first_loss = best.0;
    let mut log = Vec::new();
    let mut over = 0usize;
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        pool.shuffle(&mut rng);
        for chunk in pool.chunks(config.rays_per_batch) {
            let rays: Vec<_> = chunk
                .iter()
                .map(|&(k, p)| pixel_ray(&observations[k].camera, p))
                .collect();
            let jitter = Jitter::Seeded(config.seed.wrapping_add(step as u64));
            let sampled = sample_rays(layout, &rays, config.samples, jitter, row_of)?;
            let targets: Vec<[f64; 3]> = sampled
                .ray_index
                .iter()
                .map(|&i| observations[chunk[i].0].image.pixel(chunk[i].1))
                .collect();
            let mut tape = Tape::new();
            let mut bound = work.bind(&mut tape, |g| config.mode.trains(g));
            let none = GraspBatch::default();
            let Some((loss, parts)) = joint_loss(
                &mut tape, &mut bound, &work, &sampled, &targets, background, &none, 0.1,
            )?
            else {
                continue;
            };
            if !parts.rgb.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite image loss at step {step}"
                )));
            }
            over = if parts.rgb > DIVERGENCE_FACTOR * first_loss {
                over + 1
            } else {
                0
            };
            if over >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged(format!(
                    "image loss above {DIVERGENCE_FACTOR}x its initial value for {DIVERGENCE_PATIENCE} steps"
                )));
            }
            let grads = tape.backward(loss, work.params())?;
            if !grads.all_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite gradient at step {step}"
                )));
            }
            opt.step(work.params_mut(), &grads, &trainable)?;
            log.push(LogEntry {
                step,
                loss: parts.rgb,
                rgb: parts.rgb,
                gscore: 0.0,
                grot: 0.0,
                psnr: psnr_from_mse(parts.rgb).db,
            });
            step += 1;
        }
        let loss = evaluate(&work)?;
        log::debug!("epoch {epoch} image loss {loss:.6e}");
        if loss < best.0 {
            best = (loss, epoch, work.params().clone());
        }
    }
    let best_loss = best.0;
    let best_epoch = best.1;
    let work = Model::from_params(*work.config(), best.2)?;
    let latents: Vec<LatentCode> = work.latents()?;
    let mut scene = layout.clone();
    for (o, l) in scene.objects_mut().iter_mut().zip(latents) {
        o.latent = l;
    }
    Ok(FinetuneOutcome {
        model: work,
        scene,
        best_loss,
        best_epoch,
        log,
    })
}
