//! Procedural objects with closed-form density and color.
//!
//! Each shape is described by a signed distance function (negative inside).
//! Density is `σ_max · smoothstep(-sdf / band)`: zero outside, rising to
//! `σ_max` over a thin band beneath the surface. Color blends between two
//! endpoint colors along the object's `x` axis. All shapes are centered so
//! their tight bounds are symmetric about the object origin.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{RadianceField, RadianceOutput};
use crate::scene::{BoundingVolume, ObjectInstance, Vec3};

pub const DEFAULT_SIGMA_MAX: f64 = 400.0;
pub const DEFAULT_BAND: f64 = 0.005;
/// Gap between the shape's tight bounds and its bounding volume.
pub const DEFAULT_PADDING: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box {
        half: [f64; 3],
    },
    /// Segment along `x` swept by a sphere.
    Capsule {
        radius: f64,
        half_length: f64,
    },
    /// Round bar along `x` whose radius narrows to `waist_radius` at `x = 0`:
    /// `r(x) = end_radius - (end_radius - waist_radius) · exp(-x² / waist_width²)`.
    WaistBar {
        half_length: f64,
        end_radius: f64,
        waist_radius: f64,
        waist_width: f64,
    },
    /// A large sphere fused with a smaller one further along `x`.
    TwoLobe {
        big_radius: f64,
        small_radius: f64,
        separation: f64,
    },
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b + (a - b) * h - k * h * (1.0 - h)
}

/// `3t² − 2t³` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Blend width of the two-lobe union.
const LOBE_BLEND: f64 = 0.01;

impl Shape {
    fn lobe_centers(big: f64, small: f64, sep: f64) -> (f64, f64) {
        let xb = (big - sep - small) / 2.0;
        (xb, xb + sep)
    }

    /// Signed distance (an upper bound on distance for the waisted bar).
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Box { half } => {
                let q = p.abs() - Vec3::from(half);
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Capsule {
                radius,
                half_length,
            } => {
                let x = p.x.clamp(-half_length, half_length);
                (p - Vec3::new(x, 0.0, 0.0)).norm() - radius
            }
            Shape::WaistBar {
                half_length,
                end_radius,
                waist_radius,
                waist_width,
            } => {
                let w2 = waist_width * waist_width;
                let e = (-(p.x * p.x) / w2).exp();
                let r = end_radius - (end_radius - waist_radius) * e;
                let slope = (end_radius - waist_radius) * e * 2.0 * p.x / w2;
                let radial = ((p.y * p.y + p.z * p.z).sqrt() - r) / (1.0 + slope * slope).sqrt();
                let cap = p.x.abs() - half_length;
                if radial > 0.0 && cap > 0.0 {
                    (radial * radial + cap * cap).sqrt()
                } else {
                    radial.max(cap)
                }
            }
            Shape::TwoLobe {
                big_radius,
                small_radius,
                separation,
            } => {
                let (xb, xs) = Self::lobe_centers(big_radius, small_radius, separation);
                let db = (p - Vec3::new(xb, 0.0, 0.0)).norm() - big_radius;
                let ds = (p - Vec3::new(xs, 0.0, 0.0)).norm() - small_radius;
                smooth_min(db, ds, LOBE_BLEND)
            }
        }
    }

    /// Outward unit normal from the SDF gradient.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        let h = 1e-6;
        let g = Vec3::new(
            self.sdf(&(p + Vec3::x() * h)) - self.sdf(&(p - Vec3::x() * h)),
            self.sdf(&(p + Vec3::y() * h)) - self.sdf(&(p - Vec3::y() * h)),
            self.sdf(&(p + Vec3::z() * h)) - self.sdf(&(p - Vec3::z() * h)),
        );
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vec3::z()
        }
    }

    /// Tight half-extents of the shape.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Shape::Box { half } => Vec3::from(half),
            Shape::Capsule {
                radius,
                half_length,
            } => Vec3::new(half_length + radius, radius, radius),
            Shape::WaistBar {
                half_length,
                end_radius,
                ..
            } => Vec3::new(half_length, end_radius, end_radius),
            Shape::TwoLobe {
                big_radius,
                small_radius,
                separation,
            } => {
                let (xb, _) = Self::lobe_centers(big_radius, small_radius, separation);
                let r = big_radius.max(small_radius);
                Vec3::new(big_radius - xb, r, r)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Box { half } => half.iter().all(|&h| h > 0.0),
            Shape::Capsule {
                radius,
                half_length,
            } => radius > 0.0 && half_length >= 0.0,
            Shape::WaistBar {
                half_length,
                end_radius,
                waist_radius,
                waist_width,
            } => {
                half_length > 0.0
                    && end_radius >= waist_radius
                    && waist_radius > 0.0
                    && waist_width > 0.0
            }
            Shape::TwoLobe {
                big_radius,
                small_radius,
                separation,
            } => {
                big_radius >= small_radius
                    && small_radius > 0.0
                    && separation > 0.0
                    && separation < big_radius + small_radius
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid shape parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticObject {
    pub shape: Shape,
    /// Color at the `-x` end.
    pub color_a: [f64; 3],
    /// Color at the `+x` end.
    pub color_b: [f64; 3],
    pub sigma_max: f64,
    pub band: f64,
    pub padding: f64,
}

impl AnalyticObject {
    pub fn new(shape: Shape, color_a: [f64; 3], color_b: [f64; 3]) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            color_a,
            color_b,
            sigma_max: DEFAULT_SIGMA_MAX,
            band: DEFAULT_BAND,
            padding: DEFAULT_PADDING,
        })
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.shape.sdf(p)
    }

    pub fn density(&self, p: &Vec3) -> f64 {
        self.sigma_max * smoothstep(-self.shape.sdf(p) / self.band)
    }

    pub fn color(&self, p: &Vec3) -> [f64; 3] {
        let ext = self.shape.half_extents().x;
        let t = smoothstep(0.5 + p.x / (2.0 * ext));
        std::array::from_fn(|i| self.color_a[i] * (1.0 - t) + self.color_b[i] * t)
    }

    /// Tight bounds plus padding.
    pub fn volume(&self) -> BoundingVolume {
        BoundingVolume::new(self.shape.half_extents().add_scalar(self.padding))
            .expect("shape extents are positive")
    }

    /// The waisted bar used for grasp tests: 24 cm long, 10 cm across at the
    /// ends, 3 cm across at the waist.
    pub fn waist_bar_fixture() -> Self {
        Self::new(
            Shape::WaistBar {
                half_length: 0.12,
                end_radius: 0.05,
                waist_radius: 0.015,
                waist_width: 0.05,
            },
            [0.8, 0.3, 0.2],
            [0.2, 0.4, 0.8],
        )
        .unwrap()
    }

    /// A boot-like object whose large lobe (13 cm across) does not fit in
    /// the gripper while the small lobe does.
    pub fn boot_fixture() -> Self {
        Self::new(
            Shape::TwoLobe {
                big_radius: 0.065,
                small_radius: 0.025,
                separation: 0.08,
            },
            [0.3, 0.3, 0.3],
            [0.7, 0.6, 0.3],
        )
        .unwrap()
    }

    /// Random object of family `kind % 4` (box, capsule, waisted bar, two-lobe).
    pub fn random(kind: usize, rng: &mut impl Rng) -> Self {
        let mut u = |a: f64, b: f64| rng.random_range(a..b);
        let shape = match kind % 4 {
            0 => Shape::Box {
                half: [u(0.03, 0.09), u(0.03, 0.09), u(0.03, 0.09)],
            },
            1 => Shape::Capsule {
                radius: u(0.025, 0.05),
                half_length: u(0.02, 0.08),
            },
            2 => {
                let end = u(0.035, 0.055);
                Shape::WaistBar {
                    half_length: u(0.08, 0.13),
                    end_radius: end,
                    waist_radius: u(0.012, 0.025),
                    waist_width: u(0.02, 0.04),
                }
            }
            _ => {
                let big = u(0.045, 0.07);
                let small = u(0.02, 0.035);
                Shape::TwoLobe {
                    big_radius: big,
                    small_radius: small,
                    separation: u(0.5, 0.95) * (big + small),
                }
            }
        };
        let color_a = [u(0.05, 0.95), u(0.05, 0.95), u(0.05, 0.95)];
        let color_b = [u(0.05, 0.95), u(0.05, 0.95), u(0.05, 0.95)];
        Self::new(shape, color_a, color_b).expect("sampled parameters are valid")
    }
}

/// Analytic objects keyed by scene object id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyticField {
    pub objects: BTreeMap<usize, AnalyticObject>,
}

impl AnalyticField {
    pub fn new(objects: impl IntoIterator<Item = (usize, AnalyticObject)>) -> Self {
        Self {
            objects: objects.into_iter().collect(),
        }
    }

    pub fn get(&self, id: usize) -> Result<&AnalyticObject> {
        self.objects
            .get(&id)
            .ok_or_else(|| invalid(format!("no analytic object with id {id}")))
    }
}

impl RadianceField for AnalyticField {
    fn radiance(
        &self,
        object: &ObjectInstance,
        points: &[Vec3],
        _dirs: &[Vec3],
    ) -> Result<Vec<RadianceOutput>> {
        let o = self.get(object.id)?;
        Ok(points
            .iter()
            .map(|p| RadianceOutput {
                sigma: o.density(p),
                color: o.color(p),
            })
            .collect())
    }

    fn density(&self, object: &ObjectInstance, points: &[Vec3]) -> Result<Vec<f64>> {
        let o = self.get(object.id)?;
        Ok(points.iter().map(|p| o.density(p)).collect())
    }
}
