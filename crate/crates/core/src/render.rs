//! Compositional volume rendering.
//!
//! Rendering runs four stages: camera rays are intersected with every
//! object's box, the surviving rays are marched with a fixed sample budget,
//! each sample is sent to its own object's field in that object's frame, and
//! the samples are alpha-composited front to back over the background.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{GraspField, RadianceField, RadianceOutput};
use crate::image_io::{DepthMap, RgbImage};
use crate::raymarch::{march, Jitter, RaySampleBatch};
use crate::raytrace::{generate_rays, intersect, Ray};
use crate::scene::{Camera, ObjectInstance, Scene, Vec3};

/// Pixels with less accumulated opacity than this report no depth.
pub const DEPTH_ALPHA_THRESHOLD: f64 = 1e-3;

/// Rays composited per parallel work item.
const RAY_CHUNK: usize = 128;

/// Composited result of one ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub rgb: [f64; 3],
    pub alpha: f64,
    /// Expected termination depth; 0 when `alpha` is below
    /// [`DEPTH_ALPHA_THRESHOLD`].
    pub depth: f64,
}

impl PixelSample {
    pub fn background(bg: [f64; 3]) -> Self {
        Self {
            rgb: bg,
            alpha: 0.0,
            depth: 0.0,
        }
    }

    pub fn depth_valid(&self) -> bool {
        self.alpha >= DEPTH_ALPHA_THRESHOLD
    }
}

/// Front-to-back compositing of one ray's samples:
/// `α_j = 1 - exp(-σ_j δ_j)`, `T_j = Π_{k<j} (1 - α_k)`,
/// `rgb = Σ T_j α_j c_j + T_final · background`.
pub fn integrate_ray(
    sigma: &[f64],
    color: &[[f64; 3]],
    delta: &[f64],
    depth: &[f64],
    background: [f64; 3],
) -> Result<PixelSample> {
    let n = sigma.len();
    if color.len() != n || delta.len() != n || depth.len() != n {
        return Err(Error::ShapeMismatch(
            "per-sample arrays differ in length".into(),
        ));
    }
    let nan = sigma
        .iter()
        .chain(delta)
        .chain(depth)
        .chain(color.iter().flatten())
        .any(|v| v.is_nan());
    if nan {
        return Err(Error::NonFinite(
            "NaN sample passed to integrate_ray".into(),
        ));
    }
    let mut transmittance = 1.0;
    let mut rgb = [0.0; 3];
    let mut depth_acc = 0.0;
    for j in 0..n {
        // An infinitely dense but zero-length segment contributes nothing.
        let tau = if delta[j] == 0.0 {
            0.0
        } else {
            sigma[j] * delta[j]
        };
        let alpha = 1.0 - (-tau).exp();
        let w = transmittance * alpha;
        for (o, c) in rgb.iter_mut().zip(color[j]) {
            *o += w * c;
        }
        depth_acc += w * depth[j];
        transmittance *= 1.0 - alpha;
    }
    for (o, b) in rgb.iter_mut().zip(background) {
        *o += transmittance * b;
    }
    let alpha = 1.0 - transmittance;
    let depth = if alpha >= DEPTH_ALPHA_THRESHOLD {
        depth_acc / alpha
    } else {
        0.0
    };
    Ok(PixelSample { rgb, alpha, depth })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Samples per ray, `J + 1`.
    pub samples: usize,
    pub jitter: Jitter,
}

impl RenderOptions {
    pub fn new(samples: usize) -> Self {
        Self {
            samples,
            jitter: Jitter::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub rgb: RgbImage,
    pub alpha: Vec<f64>,
    pub depth: DepthMap,
}

impl RenderedImage {
    fn from_pixels(width: usize, height: usize, pixels: &[PixelSample]) -> Result<Self> {
        let rgb = RgbImage::new(width, height, pixels.iter().flat_map(|p| p.rgb).collect())?;
        Ok(Self {
            rgb,
            alpha: pixels.iter().map(|p| p.alpha).collect(),
            depth: DepthMap {
                width,
                height,
                depth: pixels.iter().map(|p| p.depth).collect(),
                valid: pixels.iter().map(PixelSample::depth_valid).collect(),
            },
        })
    }
}

/// Per-object field query used by the compositor: object-frame points and
/// unit directions in, density and color out.
pub trait SampleShader: Sync {
    fn shade(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>>;
}

struct Radiance<'a, F: ?Sized>(&'a F);

impl<F: RadianceField + ?Sized> SampleShader for Radiance<'_, F> {
    fn shade(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>> {
        self.0.radiance(object, points, dirs)
    }
}

/// Maps grasp scores in `[0, 1]` to colors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Colormap {
    /// `(1 - s, s, 0)`: red at score 0, green at score 1.
    #[default]
    RedGreen,
}

impl Colormap {
    pub fn map(&self, score: f64) -> [f64; 3] {
        let s = score.clamp(0.0, 1.0);
        match self {
            Colormap::RedGreen => [1.0 - s, s, 0.0],
        }
    }
}

struct GraspShading<'a, R: ?Sized, G: ?Sized> {
    radiance: &'a R,
    grasp: &'a G,
    colormap: Colormap,
}

impl<R: RadianceField + ?Sized, G: GraspField + ?Sized> SampleShader for GraspShading<'_, R, G> {
    fn shade(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        _dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>> {
        let sigma = self.radiance.density(object, points)?;
        let grasp = self.grasp.grasp(object, points)?;
        Ok(sigma
            .into_iter()
            .zip(grasp)
            .map(|(s, g)| RadianceOutput {
                sigma: s,
                color: self.colormap.map(g.score),
            })
            .collect())
    }
}

/// Shades and composites the samples of rays `rays` of `batch`.
fn composite_rays<S: SampleShader + ?Sized>(
    shader: &S,
    scene: &Scene,
    batch: &RaySampleBatch,
    rays: std::ops::Range<usize>,
) -> Result<Vec<PixelSample>> {
    let s = batch.samples_per_ray;
    let range = rays.start * s..rays.end * s;
    let mut sigma = vec![0.0; range.len()];
    let mut color = vec![[0.0; 3]; range.len()];
    for (col, object) in scene.objects().iter().enumerate() {
        let idx: Vec<usize> = range
            .clone()
            .filter(|&i| batch.object_columns[i] == col)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let points: Vec<Vec3> = idx
            .iter()
            .map(|&i| object.pose.world_to_object(&batch.positions[i]))
            .collect();
        let rot_t = object.pose.rotation().transpose();
        let dirs: Vec<Vec3> = idx
            .iter()
            .map(|&i| rot_t * batch.rays[i / s].direction)
            .collect();
        let out = shader.shade(object, &points, &dirs)?;
        for (&i, o) in idx.iter().zip(out) {
            sigma[i - range.start] = o.sigma;
            color[i - range.start] = o.color;
        }
    }
    let first = rays.start;
    rays.map(|n| {
        let local = (n - first) * s..(n - first + 1) * s;
        let global = batch.ray_range(n);
        integrate_ray(
            &sigma[local.clone()],
            &color[local],
            &batch.deltas[global.clone()],
            &batch.depths[global],
            scene.background(),
        )
    })
    .collect()
}

/// Composites an arbitrary list of rays, returning one result per input ray.
pub fn render_rays_with<S: SampleShader + ?Sized>(
    shader: &S,
    scene: &Scene,
    rays: &[Ray],
    options: &RenderOptions,
) -> Result<Vec<PixelSample>> {
    let mut pixels = vec![PixelSample::background(scene.background()); rays.len()];
    if scene.objects().is_empty() || rays.is_empty() {
        return Ok(pixels);
    }
    let table = intersect(rays, scene);
    let batch = march(&table, options.samples, options.jitter)?;
    let chunks: Vec<std::ops::Range<usize>> = (0..batch.num_rays())
        .step_by(RAY_CHUNK)
        .map(|a| a..(a + RAY_CHUNK).min(batch.num_rays()))
        .collect();
    let results: Vec<Vec<PixelSample>> = chunks
        .into_par_iter()
        .map(|r| composite_rays(shader, scene, &batch, r))
        .collect::<Result<_>>()?;
    for (n, p) in results.into_iter().flatten().enumerate() {
        pixels[batch.ray_pixel_index[n]] = p;
    }
    Ok(pixels)
}

pub fn render_rays<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    rays: &[Ray],
    options: &RenderOptions,
) -> Result<Vec<PixelSample>> {
    render_rays_with(&Radiance(field), scene, rays, options)
}

/// Renders color, opacity and depth of `scene` seen by `camera`.
pub fn render<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    camera: &Camera,
    options: &RenderOptions,
) -> Result<RenderedImage> {
    let pixels = render_rays(field, scene, &generate_rays(camera), options)?;
    RenderedImage::from_pixels(camera.width, camera.height, &pixels)
}

/// Renders with each sample's color replaced by the color-mapped grasp
/// score at that sample; densities still come from the radiance field.
pub fn render_grasp_field<R: RadianceField + ?Sized, G: GraspField + ?Sized>(
    radiance: &R,
    grasp: &G,
    scene: &Scene,
    camera: &Camera,
    options: &RenderOptions,
    colormap: Colormap,
) -> Result<RenderedImage> {
    let shader = GraspShading {
        radiance,
        grasp,
        colormap,
    };
    let pixels = render_rays_with(&shader, scene, &generate_rays(camera), options)?;
    RenderedImage::from_pixels(camera.width, camera.height, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GraspOutput;
    use crate::scene::{BoundingVolume, LatentCode, Pose};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Uniform density inside a sphere, color from position.
    struct Blob {
        radius: f64,
        sigma: f64,
    }

    impl RadianceField for Blob {
        fn radiance(
            &self,
            _: &ObjectInstance,
            points: &[Vec3],
            _: &[Vec3],
        ) -> Result<Vec<RadianceOutput>> {
            Ok(points
                .iter()
                .map(|p| RadianceOutput {
                    sigma: if p.norm() < self.radius {
                        self.sigma
                    } else {
                        0.0
                    },
                    color: [0.5 + p.x, 0.5 + p.y, 0.5 - p.z].map(|c: f64| c.clamp(0.0, 1.0)),
                })
                .collect())
        }
    }

    struct ConstGrasp(f64);

    impl GraspField for ConstGrasp {
        fn grasp(&self, _: &ObjectInstance, points: &[Vec3]) -> Result<Vec<GraspOutput>> {
            Ok(vec![
                GraspOutput {
                    score: self.0,
                    approach: Vec3::z(),
                    lateral: Vec3::x(),
                };
                points.len()
            ])
        }
    }

    fn object(id: usize, t: [f64; 3], angle: f64) -> ObjectInstance {
        ObjectInstance {
            id,
            pose: Pose::from_axis_angle(Vec3::new(0.3, 0.2, 1.0), angle, Vec3::from(t)).unwrap(),
            volume: BoundingVolume::new(Vec3::new(0.12, 0.1, 0.11)).unwrap(),
            latent: LatentCode::zeros(1),
        }
    }

    fn camera(w: usize) -> Camera {
        Camera::orbit(
            Vec3::new(0.8, -0.6, 0.4),
            Vec3::zeros(),
            w as f64 * 1.6,
            w,
            w,
        )
        .unwrap()
    }

    #[test]
    fn integrate_transparent_and_opaque() {
        let p = integrate_ray(
            &[0.0; 3],
            &[[1.0, 0.0, 0.0]; 3],
            &[0.1; 3],
            &[1.0, 1.1, 1.2],
            [0.2, 0.3, 0.4],
        )
        .unwrap();
        assert_eq!(p.rgb, [0.2, 0.3, 0.4]);
        assert_eq!(p.alpha, 0.0);
        assert!(!p.depth_valid());
        let p = integrate_ray(&[1e300], &[[0.1, 0.7, 0.9]], &[1.0], &[2.0], [1.0; 3]).unwrap();
        assert_eq!(p.rgb, [0.1, 0.7, 0.9]);
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn integrate_two_samples_closed_form() {
        let p = integrate_ray(
            &[1.0, 1.0],
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[0.5, 0.5],
            &[0.0, 0.5],
            [0.0; 3],
        )
        .unwrap();
        // Straightforward evaluation of the same equation.
        let a = 1.0 - (-0.5f64).exp();
        assert!((a - 0.39347).abs() < 1e-5);
        assert!((p.rgb[0] - a).abs() < 1e-12);
        assert!((p.rgb[1] - a * (1.0 - a)).abs() < 1e-12);
        assert!((p.rgb[1] - 0.2387).abs() < 1e-4);
        assert_eq!(p.rgb[2], 0.0);
    }

    #[test]
    fn integrate_rejects_nan() {
        assert!(integrate_ray(&[f64::NAN], &[[0.0; 3]], &[1.0], &[1.0], [0.0; 3]).is_err());
        assert!(integrate_ray(&[1.0], &[[0.0; 3]], &[1.0, 2.0], &[1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn empty_scene_is_background() {
        let scene = Scene::empty([0.1, 0.2, 0.3]);
        let img = render(
            &Blob {
                radius: 0.1,
                sigma: 50.0,
            },
            &scene,
            &camera(8),
            &RenderOptions::new(16),
        )
        .unwrap();
        assert!(img.rgb.data().chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
        assert!(img.alpha.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn ray_order_does_not_matter() {
        let scene = Scene::new(
            vec![object(0, [0.0; 3], 0.3), object(1, [0.05, 0.1, 0.0], 1.0)],
            [1.0; 3],
        )
        .unwrap();
        let field = Blob {
            radius: 0.09,
            sigma: 40.0,
        };
        let rays = generate_rays(&camera(24));
        let opts = RenderOptions::new(24);
        let base = render_rays(&field, &scene, &rays, &opts).unwrap();
        let mut order: Vec<usize> = (0..rays.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let shuffled: Vec<Ray> = order.iter().map(|&i| rays[i]).collect();
        let out = render_rays(&field, &scene, &shuffled, &opts).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(out[k], base[i]);
        }
    }

    #[test]
    fn object_order_does_not_matter() {
        let objs = vec![
            object(0, [0.0; 3], 0.3),
            object(1, [0.05, 0.1, 0.0], 1.0),
            object(2, [-0.1, 0.0, 0.05], 2.0),
        ];
        let field = Blob {
            radius: 0.09,
            sigma: 40.0,
        };
        let opts = RenderOptions::new(17);
        let a = render(
            &field,
            &Scene::new(objs.clone(), [1.0; 3]).unwrap(),
            &camera(20),
            &opts,
        )
        .unwrap();
        let rev: Vec<_> = objs.into_iter().rev().collect();
        let b = render(
            &field,
            &Scene::new(rev, [1.0; 3]).unwrap(),
            &camera(20),
            &opts,
        )
        .unwrap();
        for (x, y) in a.rgb.data().iter().zip(b.rgb.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn energy_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(1..10);
            let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
            let color: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random(), rng.random(), rng.random()])
                .collect();
            let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.1)).collect();
            let bg = [rng.random(), rng.random(), rng.random()];
            let p = integrate_ray(&sigma, &color, &delta, &vec![1.0; n], bg).unwrap();
            for c in 0..3 {
                let bound = color.iter().map(|x| x[c]).fold(bg[c], f64::max);
                assert!(p.rgb[c] <= bound + 1e-6);
            }
            assert!((0.0..=1.0).contains(&p.alpha));
        }
    }

    #[test]
    fn grasp_render_uses_colormap() {
        let scene = Scene::new(vec![object(0, [0.0; 3], 0.0)], [0.0; 3]).unwrap();
        let field = Blob {
            radius: 0.2,
            sigma: 1e4,
        };
        let img = render_grasp_field(
            &field,
            &ConstGrasp(0.25),
            &scene,
            &camera(16),
            &RenderOptions::new(32),
            Colormap::RedGreen,
        )
        .unwrap();
        let opaque: Vec<usize> = (0..256).filter(|&i| img.alpha[i] > 0.999999).collect();
        assert!(!opaque.is_empty());
        for i in opaque {
            let p = img.rgb.pixel(i);
            assert!((p[0] - 0.75).abs() < 1e-5 && (p[1] - 0.25).abs() < 1e-5 && p[2] == 0.0);
        }
        assert_eq!(Colormap::RedGreen.map(0.0), [1.0, 0.0, 0.0]);
        assert_eq!(Colormap::RedGreen.map(1.0), [0.0, 1.0, 0.0]);
        let mut prev = Colormap::RedGreen.map(0.0)[1];
        for k in 1..=100 {
            let g = Colormap::RedGreen.map(k as f64 / 100.0)[1];
            assert!(g > prev);
            prev = g;
        }
    }
}
