//! Joint pre-training of the decoders and the latent table.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{tape_loss_grot, tape_loss_gscore, tape_loss_rgb, tape_rotation, DEFAULT_LAMBDA};
use super::optim::{RmsProp, RmsPropConfig};
use super::tape_render::{sample_rays, tape_render, SampledRays};
use crate::dataset::{psnr_from_mse, SceneDataset, SceneRecord, Split, ViewRole};
use crate::error::{invalid, Error, Result};
use crate::nn::{Bound, DecoderConfig, Matrix, Model, NodeId, ParamId, Tape};
use crate::raymarch::Jitter;
use crate::raytrace::{pixel_ray, trace_camera};
use crate::scene::{Mat3, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub decoder: DecoderConfig,
    pub optimizer: RmsPropConfig,
    /// Weight of score over-prediction in the grasp score loss.
    pub lambda: f64,
    pub rays_per_batch: usize,
    pub grasps_per_batch: usize,
    /// Samples per ray, `J + 1`.
    pub samples: usize,
    /// Passes over the training pixels.
    pub epochs: usize,
    /// Caps the step count derived from `epochs`.
    pub max_steps: Option<usize>,
    pub latent_std: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            decoder: DecoderConfig {
                density_scale: 50.0,
                ..DecoderConfig::default()
            },
            optimizer: RmsPropConfig::default(),
            lambda: DEFAULT_LAMBDA,
            rays_per_batch: 1024,
            grasps_per_batch: 256,
            samples: 32,
            epochs: 1,
            max_steps: None,
            latent_std: 0.1,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        self.optimizer.validate()?;
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(invalid("lambda must lie in (0, 1)"));
        }
        if self.rays_per_batch == 0 || self.samples == 0 {
            return Err(invalid("rays_per_batch and samples must be positive"));
        }
        if !(self.latent_std >= 0.0) {
            return Err(invalid("latent_std must be non-negative"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub rgb: f64,
    pub gscore: f64,
    pub grot: f64,
    /// PSNR of the batch's rays.
    pub psnr: f64,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} loss={:.6e} rgb={:.6e} gscore={:.6e} grot={:.6e} psnr={:.3}",
            self.step, self.loss, self.rgb, self.gscore, self.grot, self.psnr
        )
    }
}

/// Grasp labels in the layout the tape losses expect.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraspBatch {
    pub rows: Vec<usize>,
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
    pub scores: Vec<f64>,
}

impl GraspBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: usize, position: Vec3, rotation: Mat3, score: f64) {
        self.rows.push(row);
        self.positions.push(position);
        self.rotations.push(rotation);
        self.scores.push(score);
    }
}

/// Values of the loss terms; absent terms are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub rgb: f64,
    pub gscore: f64,
    pub grot: f64,
}

/// Records `L_rgb + L_gscore + L_grot` on `tape`. `targets` holds one color
/// per hit ray of `rays`, in the same order. Returns `None` when both the
/// ray and the grasp batch are empty.
pub fn joint_loss(
    tape: &mut Tape,
    bound: &mut Bound,
    model: &Model,
    rays: &SampledRays,
    targets: &[[f64; 3]],
    background: [f64; 3],
    grasps: &GraspBatch,
    lambda: f64,
) -> Result<Option<(NodeId, LossParts)>> {
    if targets.len() != rays.num_rays() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} rays",
            targets.len(),
            rays.num_rays()
        )));
    }
    let mut parts = LossParts::default();
    let mut terms = Vec::new();
    if rays.num_rays() > 0 {
        let rgb = tape_render(tape, bound, model, rays, background);
        let target = Matrix::from_vec(
            targets.len(),
            3,
            targets.iter().flatten().copied().collect(),
        )
        .unwrap();
        let l = tape_loss_rgb(tape, rgb, target);
        parts.rgb = tape.value(l).get(0, 0);
        terms.push(l);
    }
    if !grasps.is_empty() {
        let pe = tape.constant(model.encode_positions(&grasps.positions));
        let h = bound.backbone(tape, pe, grasps.rows.clone());
        let (score, a, b) = bound.grasp(tape, h);
        let ls = tape_loss_gscore(tape, score, &grasps.scores, lambda);
        let rot = tape_rotation(tape, a, b);
        let lr = tape_loss_grot(tape, rot, &grasps.rotations, &grasps.scores);
        parts.gscore = tape.value(ls).get(0, 0);
        parts.grot = tape.value(lr).get(0, 0);
        terms.push(ls);
        terms.push(lr);
    }
    let Some(&first) = terms.first() else {
        return Ok(None);
    };
    let total = terms[1..].iter().fold(first, |acc, &t| tape.add(acc, t));
    parts.total = tape.value(total).get(0, 0);
    Ok(Some((total, parts)))
}

/// A training pixel whose ray hits at least one volume.
#[derive(Clone, Copy, Debug)]
struct PixelRef {
    scene: u32,
    view: u32,
    pixel: u32,
}

/// Pixels of views with `role` whose rays hit a volume.
fn hit_pixels(scenes: &[&SceneRecord], role: ViewRole) -> Vec<PixelRef> {
    let mut out = Vec::new();
    for (si, s) in scenes.iter().enumerate() {
        for (vi, v) in s.views.iter().enumerate() {
            if v.role != role {
                continue;
            }
            let table = trace_camera(&v.camera, &s.scene);
            out.extend(table.ray_pixel_index.iter().map(|&p| PixelRef {
                scene: si as u32,
                view: vi as u32,
                pixel: p as u32,
            }));
        }
    }
    out
}

/// Samples a ray batch from `pool`, grouped by scene so each group can be
/// intersected against its own objects.
fn sample_batch(
    scenes: &[&SceneRecord],
    pool: &[PixelRef],
    count: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
    row_of: &dyn Fn(usize) -> Option<usize>,
) -> Result<(SampledRays, Vec<[f64; 3]>)> {
    let mut picks: Vec<PixelRef> = (0..count)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect();
    picks.sort_by_key(|p| (p.scene, p.view, p.pixel));
    let mut rays = SampledRays {
        samples,
        ..SampledRays::default()
    };
    let mut targets = Vec::with_capacity(count);
    let mut start = 0;
    while start < picks.len() {
        let scene = picks[start].scene;
        let end = start
            + picks[start..]
                .iter()
                .take_while(|p| p.scene == scene)
                .count();
        let record = scenes[scene as usize];
        let group = &picks[start..end];
        let group_rays: Vec<_> = group
            .iter()
            .map(|p| pixel_ray(&record.views[p.view as usize].camera, p.pixel as usize))
            .collect();
        let jitter = Jitter::Seeded(rng.random());
        let sampled = sample_rays(&record.scene, &group_rays, samples, jitter, row_of)?;
        for &i in &sampled.ray_index {
            let p = group[i];
            targets.push(record.views[p.view as usize].image.pixel(p.pixel as usize));
        }
        rays.append(sampled, start);
        start = end;
    }
    Ok((rays, targets))
}

/// Grasp annotations of `scenes` as training rows.
fn grasp_pool(
    scenes: &[&SceneRecord],
    row_of: &dyn Fn(usize) -> Option<usize>,
) -> Result<GraspBatch> {
    let mut out = GraspBatch::default();
    for s in scenes {
        for g in &s.grasps {
            let row = row_of(g.object_id)
                .ok_or_else(|| invalid(format!("object {} has no latent row", g.object_id)))?;
            out.push(row, g.position, g.rotation, g.score);
        }
    }
    Ok(out)
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogEntry>,
    pub steps: usize,
}

/// Number of optimizer steps `config` runs on `dataset`.
pub fn planned_steps(dataset: &SceneDataset, config: &TrainConfig) -> usize {
    let scenes: Vec<&SceneRecord> = dataset.split(Split::Train).collect();
    let pixels = hit_pixels(&scenes, ViewRole::Train).len();
    let grasps = scenes.iter().map(|s| s.grasps.len()).sum();
    steps_for(pixels, grasps, config)
}

/// An epoch covers every training pixel once, or every grasp annotation
/// once when there are no images.
fn steps_for(pixels: usize, grasps: usize, config: &TrainConfig) -> usize {
    let per_epoch = if pixels > 0 {
        pixels.div_ceil(config.rays_per_batch)
    } else if config.grasps_per_batch > 0 {
        grasps.div_ceil(config.grasps_per_batch)
    } else {
        0
    };
    let steps = per_epoch * config.epochs;
    config.max_steps.map_or(steps, |m| steps.min(m))
}

/// Pre-trains on the training split. Object `id` uses latent row `id`.
/// `on_log` receives every `log_every`-th entry plus the last one.
pub fn pretrain(
    dataset: &SceneDataset,
    config: &TrainConfig,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    config.validate()?;
    let scenes: Vec<&SceneRecord> = dataset.split(Split::Train).collect();
    let rows = scenes
        .iter()
        .flat_map(|s| s.objects.keys())
        .map(|&id| id + 1)
        .max()
        .unwrap_or(0);
    let mut model = Model::new(config.decoder, rows, config.latent_std, config.seed)?;
    let row_of = |id: usize| (id < rows).then_some(id);
    let pool = hit_pixels(&scenes, ViewRole::Train);
    let grasps = grasp_pool(&scenes, &row_of)?;
    let steps = steps_for(pool.len(), grasps.len(), config);
    let ids: Vec<ParamId> = model.params().ids().collect();
    let mut opt = RmsProp::new(config.optimizer, model.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::new();
    let background = scenes.first().map_or([1.0; 3], |s| s.scene.background());

    for step in 0..steps {
        let (rays, targets) = if pool.is_empty() {
            (SampledRays::default(), Vec::new())
        } else {
            sample_batch(
                &scenes,
                &pool,
                config.rays_per_batch,
                config.samples,
                &mut rng,
                &row_of,
            )?
        };
        let mut batch = GraspBatch::default();
        if !grasps.is_empty() {
            for _ in 0..config.grasps_per_batch {
                let k = rng.random_range(0..grasps.len());
                batch.push(
                    grasps.rows[k],
                    grasps.positions[k],
                    grasps.rotations[k],
                    grasps.scores[k],
                );
            }
        }
        let mut tape = Tape::new();
        let mut bound = model.bind(&mut tape, |_| true);
        let Some((loss, parts)) = joint_loss(
            &mut tape,
            &mut bound,
            &model,
            &rays,
            &targets,
            background,
            &batch,
            config.lambda,
        )?
        else {
            break;
        };
        if !parts.total.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at step {step}: {parts:?}"
            )));
        }
        let grads = tape.backward(loss, model.params())?;
        if !grads.all_finite() {
            return Err(Error::Diverged(format!(
                "non-finite gradient at step {step}"
            )));
        }
        opt.step(model.params_mut(), &grads, &ids)?;
        let entry = LogEntry {
            step,
            loss: parts.total,
            rgb: parts.rgb,
            gscore: parts.gscore,
            grot: parts.grot,
            psnr: psnr_from_mse(parts.rgb).db,
        };
        if (config.log_every > 0 && step % config.log_every == 0) || step + 1 == steps {
            log::info!("{entry}");
            on_log(&entry);
        }
        log.push(entry);
    }
    Ok(TrainOutcome { model, log, steps })
}
