//! Reference renderer with dense uniform sampling.
//!
//! Each ray is sampled uniformly over the union of all its hit intervals,
//! with no per-object budget. Where boxes overlap, densities add and colors
//! are density-weighted. Compositing uses accumulated optical depth
//! `T_j = exp(-Σ_{k<j} σ_k δ)`, a separate formulation from the renderer's
//! running product.

use rayon::prelude::*;

use crate::error::Result;
use crate::field::RadianceField;
use crate::image_io::{DepthMap, RgbImage};
use crate::raytrace::{generate_rays, intersect_box, Ray};
use crate::render::{RenderedImage, DEPTH_ALPHA_THRESHOLD};
use crate::scene::{Camera, Scene, Vec3};

pub const DEFAULT_ORACLE_SAMPLES: usize = 1024;

/// `(rgb, alpha, depth)` of one ray.
pub fn oracle_ray<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    ray: &Ray,
    samples: usize,
) -> Result<([f64; 3], f64, f64)> {
    let bg = scene.background();
    let hits: Vec<(usize, f64, f64)> = scene
        .objects()
        .iter()
        .enumerate()
        .filter_map(|(i, o)| intersect_box(ray, &o.pose, &o.volume).map(|(a, b)| (i, a, b)))
        .collect();
    if hits.is_empty() {
        return Ok((bg, 0.0, 0.0));
    }
    let start = hits.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
    let end = hits.iter().map(|h| h.2).fold(f64::NEG_INFINITY, f64::max);
    let step = (end - start) / samples as f64;
    let depths: Vec<f64> = (0..samples)
        .map(|j| start + (j as f64 + 0.5) * step)
        .collect();

    let mut sigma = vec![0.0; samples];
    let mut weighted = vec![[0.0; 3]; samples];
    for &(i, a, b) in &hits {
        let obj = &scene.objects()[i];
        let idx: Vec<usize> = (0..samples)
            .filter(|&j| depths[j] >= a && depths[j] <= b)
            .collect();
        let pts: Vec<Vec3> = idx
            .iter()
            .map(|&j| obj.pose.world_to_object(&ray.at(depths[j])))
            .collect();
        let dir = obj.pose.rotation().transpose() * ray.direction;
        let out = field.radiance(obj, &pts, &vec![dir; pts.len()])?;
        for (&j, o) in idx.iter().zip(out) {
            sigma[j] += o.sigma;
            for c in 0..3 {
                weighted[j][c] += o.sigma * o.color[c];
            }
        }
    }

    let mut optical_depth = 0.0_f64;
    let mut rgb = [0.0; 3];
    let mut depth = 0.0;
    for j in 0..samples {
        if sigma[j] > 0.0 {
            let t = (-optical_depth).exp();
            let w = t * (1.0 - (-sigma[j] * step).exp());
            for c in 0..3 {
                rgb[c] += w * weighted[j][c] / sigma[j];
            }
            depth += w * depths[j];
        }
        optical_depth += sigma[j] * step;
    }
    let t_final = (-optical_depth).exp();
    for c in 0..3 {
        rgb[c] += t_final * bg[c];
    }
    let alpha = 1.0 - t_final;
    let depth = if alpha >= DEPTH_ALPHA_THRESHOLD {
        depth / alpha
    } else {
        0.0
    };
    Ok((rgb, alpha, depth))
}

pub fn oracle_render<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    camera: &Camera,
    samples: usize,
) -> Result<RenderedImage> {
    let rays = generate_rays(camera);
    let px: Vec<([f64; 3], f64, f64)> = rays
        .par_iter()
        .with_min_len(32)
        .map(|r| oracle_ray(field, scene, r, samples))
        .collect::<Result<_>>()?;
    Ok(RenderedImage {
        rgb: RgbImage::new(
            camera.width,
            camera.height,
            px.iter().flat_map(|p| p.0).collect(),
        )?,
        alpha: px.iter().map(|p| p.1).collect(),
        depth: DepthMap {
            width: camera.width,
            height: camera.height,
            depth: px.iter().map(|p| p.2).collect(),
            valid: px.iter().map(|p| p.1 >= DEPTH_ALPHA_THRESHOLD).collect(),
        },
    })
}
