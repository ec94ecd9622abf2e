//! Parallel-jaw gripper point clouds.
//!
//! Gripper frame: `x` is the closing direction (the jaws separate along
//! `x`), `z` is the approach direction and `y = z × x`. The origin is the
//! grasp point, midway between the finger pads. Each finger is a box
//! reaching [`FINGER_TIP`] past the grasp point along `+z` and
//! [`FINGER_LENGTH`] back towards the palm; the palm is a bar spanning both
//! fingers behind them.
//!
//! The open cloud has the finger pads at `x = ±width/2`, the closed cloud has
//! them touching at `x = 0`. The palm is the same in both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::scene::{Mat3, Vec3};

pub const CLOUD_POINTS: usize = 1000;
/// Finger thickness along `x`.
pub const FINGER_THICKNESS: f64 = 0.01;
/// Finger depth along `y`.
pub const FINGER_DEPTH: f64 = 0.02;
pub const FINGER_LENGTH: f64 = 0.05;
/// How far the fingertips reach past the grasp point.
pub const FINGER_TIP: f64 = 0.01;
pub const PALM_THICKNESS: f64 = 0.01;

/// Axis-aligned box in the gripper frame, `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GripperBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl GripperBox {
    fn volume(&self) -> f64 {
        let d = self.max - self.min;
        d.x * d.y * d.z
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        Vec3::new(
            rng.random_range(self.min.x..self.max.x),
            rng.random_range(self.min.y..self.max.y),
            rng.random_range(self.min.z..self.max.z),
        )
    }
}

/// Finger and palm boxes for a jaw opening of `opening` meters.
pub fn gripper_boxes(opening: f64) -> [GripperBox; 3] {
    let half = opening / 2.0;
    let (t, d) = (FINGER_THICKNESS, FINGER_DEPTH / 2.0);
    let z0 = FINGER_TIP - FINGER_LENGTH;
    [
        GripperBox {
            min: Vec3::new(half, -d, z0),
            max: Vec3::new(half + t, d, FINGER_TIP),
        },
        GripperBox {
            min: Vec3::new(-half - t, -d, z0),
            max: Vec3::new(-half, d, FINGER_TIP),
        },
        GripperBox {
            min: Vec3::new(-half - t, -d, z0 - PALM_THICKNESS),
            max: Vec3::new(half + t, d, z0),
        },
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GripperModel {
    pub width: f64,
    pub open_cloud: Vec<Vec3>,
    pub closed_cloud: Vec<Vec3>,
}

fn sample_cloud(boxes: &[GripperBox], rng: &mut impl Rng) -> Vec<Vec3> {
    let total: f64 = boxes.iter().map(GripperBox::volume).sum();
    // Volume-proportional counts, remainder to the last box.
    let mut counts: Vec<usize> = boxes
        .iter()
        .map(|b| ((b.volume() / total) * CLOUD_POINTS as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    *counts.last_mut().unwrap() += CLOUD_POINTS - assigned;
    boxes
        .iter()
        .zip(counts)
        .flat_map(|(b, n)| (0..n).map(|_| b.sample(rng)).collect::<Vec<_>>())
        .collect()
}

impl GripperModel {
    /// Seeded clouds for a gripper whose jaws open to `width` meters.
    pub fn new(width: f64, seed: u64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(invalid("gripper width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            width,
            open_cloud: sample_cloud(&gripper_boxes(width), &mut rng),
            closed_cloud: sample_cloud(&gripper_boxes(0.0), &mut rng),
        })
    }

    /// The 6 cm preset.
    pub fn narrow() -> Self {
        Self::new(0.06, 0).unwrap()
    }

    /// The 8 cm preset.
    pub fn wide() -> Self {
        Self::new(0.08, 0).unwrap()
    }

    /// Clouds transformed to the grasp pose `(position, rotation)`.
    pub fn posed(&self, rotation: &Mat3, position: &Vec3) -> (Vec<Vec3>, Vec<Vec3>) {
        let tf = |c: &[Vec3]| c.iter().map(|p| rotation * p + position).collect();
        (tf(&self.open_cloud), tf(&self.closed_cloud))
    }

    /// Plain text: header line `width`, then `open`/`closed` sections of
    /// `x y z` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("width {}\nopen {}\n", self.width, self.open_cloud.len());
        for p in &self.open_cloud {
            s += &format!("{} {} {}\n", p.x, p.y, p.z);
        }
        s += &format!("closed {}\n", self.closed_cloud.len());
        for p in &self.closed_cloud {
            s += &format!("{} {} {}\n", p.x, p.y, p.z);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("gripper cloud: {m}"));
        let lines: Vec<&str> = text.lines().collect();
        let mut at = 0;
        let header = |key: &str, at: &mut usize| -> Result<String> {
            let line = lines.get(*at).ok_or_else(|| bad("truncated"))?;
            *at += 1;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let points = |n: usize, at: &mut usize| -> Result<Vec<Vec3>> {
            let block = lines.get(*at..*at + n).ok_or_else(|| bad("truncated"))?;
            *at += n;
            block
                .iter()
                .map(|l| {
                    let v: Vec<f64> = l
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(l))?;
                    match v[..] {
                        [x, y, z] => Ok(Vec3::new(x, y, z)),
                        _ => Err(bad(l)),
                    }
                })
                .collect()
        };
        let width: f64 = header("width", &mut at)?
            .parse()
            .map_err(|_| bad("width"))?;
        let n: usize = header("open", &mut at)?
            .parse()
            .map_err(|_| bad("open count"))?;
        let open_cloud = points(n, &mut at)?;
        let n: usize = header("closed", &mut at)?
            .parse()
            .map_err(|_| bad("closed count"))?;
        let closed_cloud = points(n, &mut at)?;
        if open_cloud.len() != CLOUD_POINTS || closed_cloud.len() != CLOUD_POINTS {
            return Err(bad("clouds must have 1000 points"));
        }
        Ok(Self {
            width,
            open_cloud,
            closed_cloud,
        })
    }
}
