//! Image-quality evaluation of a model against dataset views.

use crate::dataset::{psnr, ssim, SceneRecord, ViewRole};
use crate::error::Result;
use crate::nn::Model;
use crate::render::{render, RenderOptions};
use crate::scene::Scene;

/// PSNR (dB) and SSIM of one rendered view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewScore {
    pub psnr: f64,
    pub ssim: f64,
}

/// Renders every view of `record` with `role` through `scene` (the record's
/// layout with latents attached) and scores it against the stored image.
pub fn score_views(
    model: &Model,
    record: &SceneRecord,
    scene: &Scene,
    role: ViewRole,
    samples: usize,
) -> Result<Vec<ViewScore>> {
    record
        .views_with(role)
        .map(|v| {
            let img = render(model, scene, &v.camera, &RenderOptions::new(samples))?.rgb;
            Ok(ViewScore {
                psnr: psnr(&img, &v.image)?.db,
                ssim: ssim(&img, &v.image)?,
            })
        })
        .collect()
}

/// Mean PSNR over scores; exact matches count as 100 dB.
pub fn mean_psnr(scores: &[ViewScore]) -> f64 {
    if scores.is_empty() {
        return f64::NAN;
    }
    scores.iter().map(|s| s.psnr.min(100.0)).sum::<f64>() / scores.len() as f64
}
