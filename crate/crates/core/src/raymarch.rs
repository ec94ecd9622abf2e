//! Fixed-budget sampling of rays inside object volumes.
//!
//! Every surviving ray gets exactly `S = J + 1` samples. The budget is split
//! evenly among the objects the ray hits; when `S` is not a multiple of the
//! number of hit objects, the extra samples go to the objects with the
//! longest intervals, ties broken by the lower object id. Each object's share
//! is stratified over its own `[d_min, d_max]` interval (stratum midpoints,
//! or a uniform draw inside each stratum when jittered) and the per-object
//! lists are merged by `(depth, id)`.
//!
//! Segment lengths are `δ_j = d_{j+1} - d_j`, so the segment that crosses a
//! gap between disjoint objects belongs to the last sample before the gap.
//! The final segment ends at the ray's exit depth, the largest `d_max`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raytrace::{IntersectionTable, Ray, GRAZING_EPSILON};
use crate::scene::Vec3;

/// Sample placement within strata.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Jitter {
    /// Deterministic stratum midpoints.
    None,
    /// Uniform within each stratum. Ray `n` of a table draws from stream
    /// `pixel_index(n)` of a generator seeded with this value, so results do
    /// not depend on processing order.
    Seeded(u64),
}

/// One object's hit interval on a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    /// Column of the object in the scene's object list.
    pub column: usize,
    pub id: usize,
    pub d_min: f64,
    pub d_max: f64,
}

/// Samples of a single ray, sorted by depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Index into the interval slice passed to [`march_ray`].
    pub slots: Vec<usize>,
}

/// Per-object sample counts for `intervals`, summing to `samples`.
pub fn allocate(intervals: &[Interval], samples: usize) -> Result<Vec<usize>> {
    let k = intervals.len();
    if samples < k {
        return Err(Error::SampleBudget {
            samples,
            objects: k,
        });
    }
    let mut counts = vec![samples / k; k];
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&intervals[a], &intervals[b]);
        (ib.d_max - ib.d_min)
            .total_cmp(&(ia.d_max - ia.d_min))
            .then(ia.id.cmp(&ib.id))
    });
    for &i in order.iter().take(samples % k) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Places `samples` samples along one ray. `intervals` shorter than the
/// grazing epsilon are ignored.
pub fn march_ray<R: Rng + ?Sized>(
    intervals: &[Interval],
    samples: usize,
    mut rng: Option<&mut R>,
) -> Result<RaySamples> {
    let usable: Vec<usize> = (0..intervals.len())
        .filter(|&i| intervals[i].d_max - intervals[i].d_min >= GRAZING_EPSILON)
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyRay { ray: 0 });
    }
    let subset: Vec<Interval> = usable.iter().map(|&i| intervals[i]).collect();
    let counts = allocate(&subset, samples)?;
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(samples);
    for ((iv, &count), &slot) in subset.iter().zip(&counts).zip(&usable) {
        let h = (iv.d_max - iv.d_min) / count as f64;
        for s in 0..count {
            let offset = match rng.as_deref_mut() {
                Some(r) => r.random::<f64>(),
                None => 0.5,
            };
            let d = (iv.d_min + (s as f64 + offset) * h).clamp(iv.d_min, iv.d_max);
            entries.push((d, iv.id, slot));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let exit = subset
        .iter()
        .map(|iv| iv.d_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let depths: Vec<f64> = entries.iter().map(|e| e.0).collect();
    let deltas = (0..samples)
        .map(|j| {
            if j + 1 < samples {
                depths[j + 1] - depths[j]
            } else {
                exit - depths[j]
            }
        })
        .collect();
    Ok(RaySamples {
        depths,
        deltas,
        slots: entries.iter().map(|e| e.2).collect(),
    })
}

/// Hit intervals of row `n` of `table`.
pub fn row_intervals(table: &IntersectionTable, n: usize) -> Vec<Interval> {
    table
        .hits(n)
        .map(|(m, a, b)| Interval {
            column: m,
            id: table.object_ids[m],
            d_min: a,
            d_max: b,
        })
        .collect()
}

/// Samples for every row of an intersection table, stored row-major with
/// `samples_per_ray` entries per ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySampleBatch {
    pub samples_per_ray: usize,
    pub rays: Vec<Ray>,
    pub ray_pixel_index: Vec<usize>,
    pub positions: Vec<Vec3>,
    pub depths: Vec<f64>,
    pub deltas: Vec<f64>,
    pub object_ids: Vec<usize>,
    /// Column of each sample's object in the scene's object list.
    pub object_columns: Vec<usize>,
}

impl RaySampleBatch {
    pub fn num_rays(&self) -> usize {
        self.rays.len()
    }

    /// Flat index range of ray `n`'s samples.
    pub fn ray_range(&self, n: usize) -> std::ops::Range<usize> {
        n * self.samples_per_ray..(n + 1) * self.samples_per_ray
    }

    /// One line per ray: `pixel: (depth, id) ...`.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        for n in 0..self.num_rays() {
            let _ = write!(s, "pixel {}:", self.ray_pixel_index[n]);
            for i in self.ray_range(n) {
                let _ = write!(s, " ({:.6}, {})", self.depths[i], self.object_ids[i]);
            }
            s.push('\n');
        }
        s
    }
}

/// Marches every ray of `table` with `samples` samples per ray.
pub fn march(table: &IntersectionTable, samples: usize, jitter: Jitter) -> Result<RaySampleBatch> {
    let per_ray: Vec<RaySamples> = (0..table.num_rays())
        .into_par_iter()
        .with_min_len(64)
        .map(|n| {
            let intervals = row_intervals(table, n);
            let result = match jitter {
                Jitter::None => march_ray::<ChaCha8Rng>(&intervals, samples, None),
                Jitter::Seeded(seed) => {
                    let mut rng = ray_rng(seed, table.ray_pixel_index[n]);
                    march_ray(&intervals, samples, Some(&mut rng))
                }
            };
            result
                .map(|mut r| {
                    r.slots.iter_mut().for_each(|s| *s = intervals[*s].column);
                    r
                })
                .map_err(|e| match e {
                    Error::EmptyRay { .. } => Error::EmptyRay {
                        ray: table.ray_pixel_index[n],
                    },
                    e => e,
                })
        })
        .collect::<Result<_>>()?;
    let total = per_ray.len() * samples;
    let mut batch = RaySampleBatch {
        samples_per_ray: samples,
        rays: table.rays.clone(),
        ray_pixel_index: table.ray_pixel_index.clone(),
        positions: Vec::with_capacity(total),
        depths: Vec::with_capacity(total),
        deltas: Vec::with_capacity(total),
        object_ids: Vec::with_capacity(total),
        object_columns: Vec::with_capacity(total),
    };
    for (ray, r) in table.rays.iter().zip(per_ray) {
        batch.positions.extend(r.depths.iter().map(|&d| ray.at(d)));
        batch
            .object_ids
            .extend(r.slots.iter().map(|&c| table.object_ids[c]));
        batch.depths.extend(r.depths);
        batch.deltas.extend(r.deltas);
        batch.object_columns.extend(r.slots);
    }
    Ok(batch)
}

/// Generator for one ray, independent of the order rays are processed in.
pub fn ray_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel as u64);
    rng
}
