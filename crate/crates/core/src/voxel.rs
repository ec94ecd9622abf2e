//! Occupancy grids and point collision queries on density fields.
//!
//! A cell is occupied when the density at its center is at least the
//! threshold; the same `≥` rule decides point collisions.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::field::{object_densities, RadianceField};
use crate::scene::{ObjectInstance, Pose, Scene, Vec3};

pub const VOXEL_MAGIC: &[u8; 8] = b"OBJFVOX1";

/// `res³` occupancy grid over an axis-aligned box of its own frame.
///
/// Cell `(ix, iy, iz)` has flat index `(ix · res + iy) · res + iz` and center
/// `origin + (i + 0.5) · cell_size` per axis. `frame` places the grid in the
/// world (the object pose for per-object grids, identity for scene grids).
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub res: usize,
    pub origin: Vec3,
    pub cell_size: Vec3,
    pub frame: Pose,
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.res + iy) * self.res + iz
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.origin
            + Vec3::new(
                (ix as f64 + 0.5) * self.cell_size.x,
                (iy as f64 + 0.5) * self.cell_size.y,
                (iz as f64 + 0.5) * self.cell_size.z,
            )
    }

    pub fn centers(&self) -> Vec<Vec3> {
        let r = self.res;
        let mut out = Vec::with_capacity(r * r * r);
        for ix in 0..r {
            for iy in 0..r {
                for iz in 0..r {
                    out.push(self.center(ix, iy, iz));
                }
            }
        }
        out
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Halves the resolution; a coarse cell is occupied if any of its eight
    /// children is.
    pub fn downsample_or(&self) -> Result<VoxelGrid> {
        if self.res % 2 != 0 {
            return Err(invalid("downsampling needs an even resolution"));
        }
        let r = self.res / 2;
        let mut occ = vec![false; r * r * r];
        for ix in 0..self.res {
            for iy in 0..self.res {
                for iz in 0..self.res {
                    if self.occupancy[self.index(ix, iy, iz)] {
                        occ[(ix / 2 * r + iy / 2) * r + iz / 2] = true;
                    }
                }
            }
        }
        Ok(VoxelGrid {
            res: r,
            origin: self.origin,
            cell_size: self.cell_size * 2.0,
            frame: self.frame,
            occupancy: occ,
        })
    }

    fn header(&self) -> String {
        let r = self.frame.rotation();
        let t = self.frame.translation();
        format!(
            "res {}\norigin {} {} {}\ncell {} {} {}\nrotation {} {} {} {} {} {} {} {} {}\ntranslation {} {} {}\n",
            self.res,
            self.origin.x,
            self.origin.y,
            self.origin.z,
            self.cell_size.x,
            self.cell_size.y,
            self.cell_size.z,
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z
        )
    }

    /// Metadata header (`res`, `origin`, `cell`, row-major `rotation`,
    /// `translation`), a line `occupied N`, then one `ix iy iz` line per
    /// occupied cell in index order.
    pub fn to_sparse_text(&self) -> String {
        let mut s = self.header();
        let _ = writeln!(s, "occupied {}", self.occupied_count());
        for ix in 0..self.res {
            for iy in 0..self.res {
                for iz in 0..self.res {
                    if self.occupancy[self.index(ix, iy, iz)] {
                        let _ = writeln!(s, "{ix} {iy} {iz}");
                    }
                }
            }
        }
        s
    }

    /// Dense bitmap, little-endian: magic `OBJFVOX1`, `res` u32, origin 3×f64,
    /// cell size 3×f64, frame rotation 9×f64 row-major, translation 3×f64,
    /// then `ceil(res³ / 8)` bytes with cell `i` at bit `i % 8` of byte `i / 8`.
    pub fn to_bitmap(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(VOXEL_MAGIC);
        out.extend_from_slice(&(self.res as u32).to_le_bytes());
        let r = self.frame.rotation();
        let t = self.frame.translation();
        let mut floats = vec![self.origin.x, self.origin.y, self.origin.z];
        floats.extend([self.cell_size.x, self.cell_size.y, self.cell_size.z]);
        for i in 0..3 {
            for j in 0..3 {
                floats.push(r[(i, j)]);
            }
        }
        floats.extend([t.x, t.y, t.z]);
        for f in floats {
            out.extend_from_slice(&f.to_le_bytes());
        }
        let mut bits = vec![0u8; self.occupancy.len().div_ceil(8)];
        for (i, &o) in self.occupancy.iter().enumerate() {
            if o {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend(bits);
        out
    }

    pub fn from_bitmap(bytes: &[u8]) -> Result<VoxelGrid> {
        let head = 8 + 4 + 18 * 8;
        if bytes.len() < head || &bytes[..8] != VOXEL_MAGIC {
            return Err(Error::Format("not a voxel bitmap".into()));
        }
        let res = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let f: Vec<f64> = bytes[12..head]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n = res * res * res;
        if bytes.len() != head + n.div_ceil(8) {
            return Err(Error::Format("voxel bitmap length".into()));
        }
        let rot = crate::scene::Mat3::from_row_slice(&f[6..15]);
        let frame = Pose::new(rot, Vec3::new(f[15], f[16], f[17]))?;
        let occupancy = (0..n)
            .map(|i| bytes[head + i / 8] & (1 << (i % 8)) != 0)
            .collect();
        Ok(VoxelGrid {
            res,
            origin: Vec3::new(f[0], f[1], f[2]),
            cell_size: Vec3::new(f[3], f[4], f[5]),
            frame,
            occupancy,
        })
    }

    pub fn save_bitmap(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bitmap())?;
        Ok(())
    }

    pub fn save_sparse(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_sparse_text())?;
        Ok(())
    }
}

fn check(res: usize, threshold: f64) -> Result<()> {
    if res < 2 || !(threshold > 0.0) {
        return Err(invalid(
            "voxelization needs res >= 2 and a positive threshold",
        ));
    }
    Ok(())
}

/// Per-object grid spanning the object's box, in the object frame.
pub fn voxelize<F: RadianceField + ?Sized>(
    field: &F,
    object: &ObjectInstance,
    res: usize,
    threshold: f64,
) -> Result<VoxelGrid> {
    check(res, threshold)?;
    let h = *object.volume.half_extents();
    let mut grid = VoxelGrid {
        res,
        origin: -h,
        cell_size: h * 2.0 / res as f64,
        frame: object.pose,
        occupancy: Vec::new(),
    };
    let dens = field.density(object, &grid.centers())?;
    grid.occupancy = dens.iter().map(|&d| d >= threshold).collect();
    Ok(grid)
}

/// World-frame grid over `[min, max]` using [`query_collision`] at cell
/// centers.
pub fn voxelize_scene<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    min: Vec3,
    max: Vec3,
    res: usize,
    threshold: f64,
    ground_plane: bool,
) -> Result<VoxelGrid> {
    check(res, threshold)?;
    if !(0..3).all(|i| max[i] > min[i]) {
        return Err(invalid("scene grid bounds are empty"));
    }
    let mut grid = VoxelGrid {
        res,
        origin: min,
        cell_size: (max - min) / res as f64,
        frame: Pose::identity(),
        occupancy: Vec::new(),
    };
    grid.occupancy = query_collision(field, scene, &grid.centers(), threshold, ground_plane)?;
    Ok(grid)
}

/// A world point collides iff some object whose box contains it has density
/// `≥ threshold` there, or it lies below `z = 0` with the ground plane on.
pub fn query_collision<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    points: &[Vec3],
    threshold: f64,
    ground_plane: bool,
) -> Result<Vec<bool>> {
    let per_object = object_densities(field, scene, points)?;
    Ok((0..points.len())
        .map(|i| {
            (ground_plane && points[i].z < 0.0)
                || per_object
                    .iter()
                    .any(|d| d[i].is_some_and(|s| s >= threshold))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RadianceOutput;
    use crate::scene::{BoundingVolume, LatentCode};

    /// Density `level` inside `|p|∞ ≤ half`, zero elsewhere.
    struct Cube {
        half: f64,
        level: f64,
    }

    impl RadianceField for Cube {
        fn radiance(
            &self,
            _: &ObjectInstance,
            points: &[Vec3],
            _: &[Vec3],
        ) -> Result<Vec<RadianceOutput>> {
            Ok(points
                .iter()
                .map(|p| RadianceOutput {
                    sigma: if p.amax() <= self.half {
                        self.level
                    } else {
                        0.0
                    },
                    color: [0.0; 3],
                })
                .collect())
        }
    }

    fn obj(id: usize, at: Vec3) -> ObjectInstance {
        ObjectInstance {
            id,
            pose: Pose::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7, at).unwrap(),
            volume: BoundingVolume::cube(1.0).unwrap(),
            latent: LatentCode::zeros(1),
        }
    }

    #[test]
    fn zero_density_gives_empty_grid() {
        let g = voxelize(
            &Cube {
                half: 0.5,
                level: 0.0,
            },
            &obj(0, Vec3::zeros()),
            8,
            1.0,
        )
        .unwrap();
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn half_size_box_fills_an_eighth() {
        for res in [8usize, 9, 16, 17] {
            let g = voxelize(
                &Cube {
                    half: 0.5,
                    level: 10.0,
                },
                &obj(0, Vec3::zeros()),
                res,
                1.0,
            )
            .unwrap();
            let frac = g.occupied_count() as f64 / (res * res * res) as f64;
            // Within one voxel shell of the exact ratio.
            let cell = 2.0 / res as f64;
            let lo = ((1.0 - 2.0 * cell) / 2.0).max(0.0).powi(3);
            let hi = ((1.0 + 2.0 * cell) / 2.0).powi(3);
            assert!(lo <= frac && frac <= hi, "res {res}: {frac}");
        }
    }

    #[test]
    fn threshold_monotonicity_and_tie_rule() {
        let f = Cube {
            half: 0.5,
            level: 3.0,
        };
        let o = obj(0, Vec3::zeros());
        let a = voxelize(&f, &o, 10, 3.0).unwrap();
        let b = voxelize(&f, &o, 10, 3.5).unwrap();
        assert!(a.occupied_count() > 0);
        assert_eq!(b.occupied_count(), 0);
        assert!(a.occupancy.iter().zip(&b.occupancy).all(|(x, y)| *x || !*y));
    }

    #[test]
    fn coarse_grid_is_covered_by_downsampled_fine_grid() {
        let f = Cube {
            half: 0.37,
            level: 3.0,
        };
        let o = obj(0, Vec3::zeros());
        for res in [3usize, 4, 5, 7] {
            let coarse = voxelize(&f, &o, res, 1.0).unwrap();
            let fine = voxelize(&f, &o, 2 * res, 1.0)
                .unwrap()
                .downsample_or()
                .unwrap();
            for (c, d) in coarse.occupancy.iter().zip(&fine.occupancy) {
                assert!(!*c || *d);
            }
        }
    }

    #[test]
    fn collision_queries() {
        let scene = Scene::new(
            vec![
                obj(0, Vec3::new(0.0, 0.0, 2.0)),
                obj(1, Vec3::new(3.0, 0.0, 2.0)),
            ],
            [1.0; 3],
        )
        .unwrap();
        let f = Cube {
            half: 0.5,
            level: 5.0,
        };
        let pts = [
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        assert_eq!(
            query_collision(&f, &scene, &pts, 5.0, false).unwrap(),
            vec![true, false, true, false]
        );
        assert_eq!(
            query_collision(&f, &scene, &pts, 5.0, true).unwrap(),
            vec![true, false, true, true]
        );
        let rev = Scene::new(scene.objects().iter().rev().cloned().collect(), [1.0; 3]).unwrap();
        assert_eq!(
            query_collision(&f, &rev, &pts, 5.0, true).unwrap(),
            query_collision(&f, &scene, &pts, 5.0, true).unwrap()
        );
    }

    #[test]
    fn exports_round_trip() {
        let g = voxelize(
            &Cube {
                half: 0.5,
                level: 10.0,
            },
            &obj(0, Vec3::new(0.1, 0.2, 0.3)),
            5,
            1.0,
        )
        .unwrap();
        let back = VoxelGrid::from_bitmap(&g.to_bitmap()).unwrap();
        assert_eq!(back.occupancy, g.occupancy);
        assert_eq!(back.res, 5);
        let text = g.to_sparse_text();
        assert!(text.starts_with("res 5\n"));
        assert_eq!(text.lines().count(), 6 + g.occupied_count());
        let s = voxelize_scene(
            &Cube {
                half: 0.5,
                level: 10.0,
            },
            &Scene::new(vec![obj(0, Vec3::new(0.0, 0.0, 1.0))], [1.0; 3]).unwrap(),
            Vec3::new(-1.0, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 2.0),
            6,
            1.0,
            true,
        )
        .unwrap();
        // Bottom layer lies below the ground plane.
        assert!((0..6).all(|ix| (0..6).all(|iy| s.occupancy[s.index(ix, iy, 0)])));
    }
}
