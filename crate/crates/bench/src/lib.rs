//! Shared fixtures for the benchmarks.

use objfield::nn::{DecoderConfig, Model};
use objfield::{BoundingVolume, Camera, ObjectInstance, Pose, Result, Scene, Vec3};

/// A randomly initialized model and one object filling most of a
/// `width × height` frame.
pub fn single_object(seed: u64, width: usize, height: usize) -> Result<(Model, Scene, Camera)> {
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

/// `n` boxes in a row along `x`, each with its own latent row.
pub fn row_of_objects(seed: u64, n: usize) -> Result<(Model, Scene)> {
    let model = Model::new(DecoderConfig::default(), n, 0.1, seed)?;
    let objects = (0..n)
        .map(|i| {
            Ok(ObjectInstance {
                id: i,
                pose: Pose::from_translation(Vec3::new(
                    0.12 * (i as f64 - (n as f64 - 1.0) / 2.0),
                    0.0,
                    0.0,
                )),
                volume: BoundingVolume::cube(0.05)?,
                latent: model.latent(i)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((model, Scene::new(objects, [1.0; 3])?))
}
