//! Camera rays and ray/oriented-box intersection.
//!
//! Intersections are computed with the slab method in each object's frame.
//! Rigid transforms preserve length, so the entry and exit parameters found
//! in the object frame are world-frame distances along the ray.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::scene::{BoundingVolume, Camera, Pose, Scene, Vec3};

/// Intervals shorter than this (meters) are treated as misses.
pub const GRAZING_EPSILON: f64 = 1e-6;

/// Rays per parallel work item.
const RAY_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// One ray per pixel through the pixel center, in row-major pixel order
/// (index `v * width + u`).
///
/// The camera looks along its local `+z` with `x` right and `y` down. A pixel
/// `(u, v)` maps to the camera-frame direction
/// `((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1)`, so with `cx = W / 2` the
/// optical axis passes through the image center.
pub fn generate_rays(camera: &Camera) -> Vec<Ray> {
    (0..camera.num_pixels())
        .map(|i| pixel_ray(camera, i))
        .collect()
}

/// The ray of row-major pixel `index`.
pub fn pixel_ray(camera: &Camera, index: usize) -> Ray {
    let (u, v) = (index % camera.width, index / camera.width);
    Ray {
        origin: *camera.pose.translation(),
        direction: camera.pose.rotation() * pixel_direction(camera, u as f64 + 0.5, v as f64 + 0.5),
    }
}

/// Camera-frame unit direction through image point `(x, y)` in pixels.
pub fn pixel_direction(camera: &Camera, x: f64, y: f64) -> Vec3 {
    Vec3::new(
        (x - camera.cx) / camera.fx,
        (y - camera.cy) / camera.fy,
        1.0,
    )
    .normalize()
}

/// Slab test of a ray against an origin-centered box with `half` extents,
/// everything expressed in the box frame. Returns the raw `(t_near, t_far)`
/// of the infinite line, or `None` when the line misses the box.
///
/// A zero direction component never produces NaN: the ray either lies inside
/// that slab for all `t` or misses the box.
pub fn slab_interval(origin: &Vec3, dir: &Vec3, half: &Vec3) -> Option<(f64, f64)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        let (o, d, h) = (origin[i], dir[i], half[i]);
        if d == 0.0 {
            if o < -h || o > h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut t0, mut t1) = ((-h - o) * inv, (h - o) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    Some((t_near, t_far))
}

/// Forward intersection interval `[d_min, d_max]` of a world ray with a posed
/// box. The entry is clamped to 0 when the origin is inside; intervals
/// behind the origin or shorter than [`GRAZING_EPSILON`] are misses.
pub fn intersect_box(ray: &Ray, pose: &Pose, volume: &BoundingVolume) -> Option<(f64, f64)> {
    let o = pose.world_to_object(&ray.origin);
    let d = pose.rotation().transpose() * ray.direction;
    let (t0, t1) = slab_interval(&o, &d, volume.half_extents())?;
    let d_min = t0.max(0.0);
    if t1 - d_min < GRAZING_EPSILON {
        return None;
    }
    Some((d_min, t1))
}

/// Hit and depth matrices for the rays that hit at least one object.
///
/// Rows are surviving rays, columns follow the scene's object list order;
/// `object_ids[m]` is the id of column `m`. Storage is row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionTable {
    pub rays: Vec<Ray>,
    pub ray_pixel_index: Vec<usize>,
    pub object_ids: Vec<usize>,
    pub hit: Vec<bool>,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
}

impl IntersectionTable {
    pub fn num_rays(&self) -> usize {
        self.rays.len()
    }

    pub fn num_objects(&self) -> usize {
        self.object_ids.len()
    }

    pub fn hit(&self, n: usize, m: usize) -> bool {
        self.hit[n * self.num_objects() + m]
    }

    /// `(column, d_min, d_max)` of every hit on row `n`, in column order.
    pub fn hits(&self, n: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let m = self.num_objects();
        (0..m)
            .filter(move |&j| self.hit[n * m + j])
            .map(move |j| (j, self.d_min[n * m + j], self.d_max[n * m + j]))
    }

    /// Structured text listing, one line per surviving ray.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# rays={} objects={:?}",
            self.num_rays(),
            self.object_ids
        );
        for n in 0..self.num_rays() {
            let _ = write!(s, "pixel {}:", self.ray_pixel_index[n]);
            for (m, a, b) in self.hits(n) {
                let _ = write!(s, " [id {} {:.6} {:.6}]", self.object_ids[m], a, b);
            }
            s.push('\n');
        }
        s
    }
}

/// Intersects `rays` with every object of `scene` and prunes rays without
/// hits. `ray_pixel_index` holds the original index of each surviving ray.
pub fn intersect(rays: &[Ray], scene: &Scene) -> IntersectionTable {
    let objects = scene.objects();
    let m = objects.len();
    let rows: Vec<(usize, Vec<Option<(f64, f64)>>)> = rays
        .par_chunks(RAY_CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            chunk.iter().enumerate().filter_map(move |(i, ray)| {
                let row: Vec<_> = objects
                    .iter()
                    .map(|o| intersect_box(ray, &o.pose, &o.volume))
                    .collect();
                row.iter()
                    .any(Option::is_some)
                    .then_some((c * RAY_CHUNK + i, row))
            })
        })
        .collect();
    let mut table = IntersectionTable {
        rays: Vec::with_capacity(rows.len()),
        ray_pixel_index: Vec::with_capacity(rows.len()),
        object_ids: objects.iter().map(|o| o.id).collect(),
        hit: Vec::with_capacity(rows.len() * m),
        d_min: Vec::with_capacity(rows.len() * m),
        d_max: Vec::with_capacity(rows.len() * m),
    };
    for (idx, row) in rows {
        table.rays.push(rays[idx]);
        table.ray_pixel_index.push(idx);
        for r in row {
            let (h, a, b) = r.map_or((false, 0.0, 0.0), |(a, b)| (true, a, b));
            table.hit.push(h);
            table.d_min.push(a);
            table.d_max.push(b);
        }
    }
    table
}

/// Rays for every pixel of `camera`, intersected with `scene`.
pub fn trace_camera(camera: &Camera, scene: &Scene) -> IntersectionTable {
    intersect(&generate_rays(camera), scene)
}
