//! Field abstractions shared by the renderer, grasp filtering and voxel
//! extraction. Both the learned decoders and the analytic fixtures implement
//! them, so every downstream stage runs on either.

use crate::error::Result;
use crate::scene::{ObjectInstance, Scene, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadianceOutput {
    /// Density in 1/m, non-negative.
    pub sigma: f64,
    /// RGB in [0, 1].
    pub color: [f64; 3],
}

/// Raw grasp decoder output at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspOutput {
    /// Grasp success probability in [0, 1].
    pub score: f64,
    /// Approach vector, unnormalized.
    pub approach: Vec3,
    /// Lateral hint, unnormalized and not yet orthogonalized.
    pub lateral: Vec3,
}

/// Density and color of each object, queried in the object's own frame.
pub trait RadianceField: Sync {
    /// Evaluates the field at object-frame `points` seen along object-frame
    /// unit directions `dirs` (same length).
    fn radiance(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>>;

    /// Density only; density never depends on the viewing direction.
    fn density(&self, object: &ObjectInstance, points: &[Vec3]) -> Result<Vec<f64>> {
        let dirs = vec![Vec3::z(); points.len()];
        Ok(self
            .radiance(object, points, &dirs)?
            .into_iter()
            .map(|r| r.sigma)
            .collect())
    }
}

pub trait GraspField: Sync {
    /// Evaluates the grasp field at object-frame `points`.
    fn grasp(&self, object: &ObjectInstance, points: &[Vec3]) -> Result<Vec<GraspOutput>>;
}

/// Summed density at world-frame `points`: every object whose box contains a
/// point contributes its own density there, points outside every box get 0.
/// With `ground_plane`, points below `z = 0` get infinite density.
pub fn scene_density<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    points: &[Vec3],
    ground_plane: bool,
) -> Result<Vec<f64>> {
    let per_object = object_densities(field, scene, points)?;
    let mut out = vec![0.0; points.len()];
    for dens in &per_object {
        for (o, d) in out.iter_mut().zip(dens) {
            if let Some(d) = d {
                *o += d;
            }
        }
    }
    if ground_plane {
        for (o, p) in out.iter_mut().zip(points) {
            if p.z < 0.0 {
                *o = f64::INFINITY;
            }
        }
    }
    Ok(out)
}

/// Per object (in scene order), the density at each point inside its box.
pub fn object_densities<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    points: &[Vec3],
) -> Result<Vec<Vec<Option<f64>>>> {
    scene
        .objects()
        .iter()
        .map(|obj| {
            let local: Vec<Vec3> = points.iter().map(|p| obj.pose.world_to_object(p)).collect();
            let inside: Vec<usize> = (0..points.len())
                .filter(|&i| obj.volume.contains(&local[i], 0.0))
                .collect();
            let mut dens = vec![None; points.len()];
            if !inside.is_empty() {
                let query: Vec<Vec3> = inside.iter().map(|&i| local[i]).collect();
                for (&i, d) in inside.iter().zip(field.density(obj, &query)?) {
                    dens[i] = Some(d);
                }
            }
            Ok(dens)
        })
        .collect()
}
