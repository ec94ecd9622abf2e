//! Differentiable compositing of ray batches on a tape.
//!
//! Rays are marched exactly as for inference. Every sample is queried in
//! its own object's frame with that object's latent-table row, and the
//! per-ray samples are composited with
//! `T_j = exp(-Σ_{k<j} σ_k δ_k)`, `w_j = T_j (1 - exp(-σ_j δ_j))` and
//! `rgb = Σ w_j c_j + (1 - Σ w_j) · background`.

use crate::error::{invalid, Result};
use crate::nn::{Bound, Matrix, Model, NodeId, Tape};
use crate::raymarch::{march, Jitter};
use crate::raytrace::{intersect, Ray};
use crate::scene::{Scene, Vec3};

/// Marched samples of the rays that hit at least one volume.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledRays {
    pub samples: usize,
    /// Index into the caller's ray list of each hit ray.
    pub ray_index: Vec<usize>,
    /// Object-frame sample positions, `samples` per ray.
    pub positions: Vec<Vec3>,
    /// Object-frame unit view directions.
    pub dirs: Vec<Vec3>,
    /// Latent-table row of each sample's object.
    pub rows: Vec<usize>,
    pub deltas: Vec<f64>,
}

impl SampledRays {
    pub fn num_rays(&self) -> usize {
        self.ray_index.len()
    }

    /// Appends `other`, whose ray indices are offset by `ray_offset`.
    pub fn append(&mut self, other: SampledRays, ray_offset: usize) {
        debug_assert!(self.ray_index.is_empty() || self.samples == other.samples);
        self.samples = other.samples;
        self.ray_index
            .extend(other.ray_index.into_iter().map(|i| i + ray_offset));
        self.positions.extend(other.positions);
        self.dirs.extend(other.dirs);
        self.rows.extend(other.rows);
        self.deltas.extend(other.deltas);
    }
}

/// Intersects and marches `rays` through `scene`. `row_of` maps an object
/// id to its latent-table row.
pub fn sample_rays(
    scene: &Scene,
    rays: &[Ray],
    samples: usize,
    jitter: Jitter,
    row_of: impl Fn(usize) -> Option<usize>,
) -> Result<SampledRays> {
    let mut out = SampledRays {
        samples,
        ..SampledRays::default()
    };
    if rays.is_empty() || scene.objects().is_empty() {
        return Ok(out);
    }
    let table = intersect(rays, scene);
    let batch = march(&table, samples, jitter)?;
    let objects = scene.objects();
    let rows: Vec<usize> = objects
        .iter()
        .map(|o| row_of(o.id).ok_or_else(|| invalid(format!("object {} has no latent row", o.id))))
        .collect::<Result<_>>()?;
    out.ray_index = batch.ray_pixel_index.clone();
    for (k, &col) in batch.object_columns.iter().enumerate() {
        let o = &objects[col];
        out.positions
            .push(o.pose.world_to_object(&batch.positions[k]));
        out.dirs
            .push(o.pose.rotation().transpose() * batch.rays[k / samples].direction);
        out.rows.push(rows[col]);
    }
    out.deltas = batch.deltas;
    Ok(out)
}

/// Composited colors (`rays × 3`) of `sampled`.
pub fn tape_render(
    tape: &mut Tape,
    bound: &mut Bound,
    model: &Model,
    sampled: &SampledRays,
    background: [f64; 3],
) -> NodeId {
    let (r, s) = (sampled.num_rays(), sampled.samples);
    let pe = tape.constant(model.encode_positions(&sampled.positions));
    let h = bound.backbone(tape, pe, sampled.rows.clone());
    let sigma = bound.sigma(tape, h);
    let pe_dir = tape.constant(model.encode_directions(&sampled.dirs));
    let color = bound.color(tape, h, pe_dir);

    let sigma = tape.reshape(sigma, r, s);
    let delta = tape.constant(Matrix::from_vec(r, s, sampled.deltas.clone()).unwrap());
    let tau = tape.mul(sigma, delta);
    let optical = tape.cumsum_exclusive(tau);
    let optical = tape.neg(optical);
    let transmittance = tape.exp(optical);
    let neg_tau = tape.neg(tau);
    let keep = tape.exp(neg_tau);
    let keep = tape.neg(keep);
    let alpha = tape.offset(keep, 1.0);
    let w = tape.mul(transmittance, alpha);
    let rgb = tape.weighted_samples(w, color);
    let acc = tape.sum_rows(w);
    let acc = tape.neg(acc);
    let rest = tape.offset(acc, 1.0);
    let bg = tape.constant(Matrix::row(&background));
    let bg = tape.outer(rest, bg);
    tape.add(rgb, bg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::DecoderConfig;
    use crate::raytrace::generate_rays;
    use crate::render::{render_rays, RenderOptions};
    use crate::scene::{BoundingVolume, Camera, ObjectInstance, Pose};

    #[test]
    fn matches_inference_renderer() {
        let config = DecoderConfig {
            density_scale: 20.0,
            ..DecoderConfig::default()
        };
        let model = Model::new(config, 2, 0.5, 3).unwrap();
        let objects = (0..2)
            .map(|i| ObjectInstance {
                id: i,
                pose: Pose::from_axis_angle(
                    Vec3::new(1.0, 2.0, 0.5),
                    0.3 * i as f64,
                    Vec3::new(0.05 * i as f64, 0.0, 0.0),
                )
                .unwrap(),
                volume: BoundingVolume::new(Vec3::new(0.1, 0.06, 0.08)).unwrap(),
                latent: model.latent(i).unwrap(),
            })
            .collect();
        let scene = Scene::new(objects, [0.9, 0.8, 1.0]).unwrap();
        let cam = Camera::orbit(Vec3::new(0.6, -0.5, 0.4), Vec3::zeros(), 24.0, 12, 12).unwrap();
        let rays = generate_rays(&cam);
        let want = render_rays(&model, &scene, &rays, &RenderOptions::new(16)).unwrap();

        let sampled = sample_rays(&scene, &rays, 16, Jitter::None, Some).unwrap();
        assert!(sampled.num_rays() > 20 && sampled.num_rays() < rays.len());
        let mut tape = Tape::new();
        let mut bound = model.bind(&mut tape, |_| true);
        let rgb = tape_render(&mut tape, &mut bound, &model, &sampled, scene.background());
        let got = tape.value(rgb);
        for (k, &i) in sampled.ray_index.iter().enumerate() {
            for c in 0..3 {
                assert!((got.get(k, c) - want[i].rgb[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unknown_rows_are_rejected() {
        let scene = Scene::new(
            vec![ObjectInstance {
                id: 5,
                pose: Pose::identity(),
                volume: BoundingVolume::cube(0.1).unwrap(),
                latent: crate::scene::LatentCode::zeros(0),
            }],
            [1.0; 3],
        )
        .unwrap();
        let cam = Camera::orbit(Vec3::new(0.0, 0.0, 1.0), Vec3::zeros(), 10.0, 4, 4).unwrap();
        assert!(sample_rays(&scene, &generate_rays(&cam), 8, Jitter::None, |_| None).is_err());
    }
}
