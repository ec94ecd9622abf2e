//! Grasp annotation and scoring with a pluggable stability oracle.
//!
//! A grasp score is the success rate over `N` perturbed copies of a grasp:
//! `S = Σ Γ(Δξ_i · ξ) / N`, where `Γ` decides whether a single gripper pose
//! holds the object.
//!
//! The default oracle is an analytic antipodal test on the object's signed
//! distance field:
//! 1. no point of the open gripper cloud may lie inside the object;
//! 2. closing the jaws along the gripper `x` axis through the grasp point
//!    must meet the surface from both sides;
//! 3. each contact normal must lie inside the friction cone (half-angle
//!    `atan μ`) around the opposing jaw's closing direction.
//!
//! Contacts are found on the jaw centerline only.

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::dataset::analytic::AnalyticObject;
use crate::error::{invalid, Result};
use crate::grasp::{assemble_rotation, GripperModel};
use crate::scene::{Mat3, Vec3};

pub const DEFAULT_FRICTION: f64 = 0.5;
pub const DEFAULT_PERTURBATIONS: usize = 50;

/// A labeled grasp in its object's frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspAnnotation {
    pub object_id: usize,
    pub position: Vec3,
    pub rotation: Mat3,
    pub score: f64,
}

/// Decides whether a single gripper pose holds the object.
pub trait StabilityOracle: Sync {
    fn succeeds(
        &self,
        object: &AnalyticObject,
        rotation: &Mat3,
        position: &Vec3,
        gripper: &GripperModel,
    ) -> bool;
}

/// Always succeeds or always fails; useful for testing the score formula.
pub struct ConstantOracle(pub bool);

impl StabilityOracle for ConstantOracle {
    fn succeeds(&self, _: &AnalyticObject, _: &Mat3, _: &Vec3, _: &GripperModel) -> bool {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AntipodalOracle {
    pub friction: f64,
}

impl Default for AntipodalOracle {
    fn default() -> Self {
        Self {
            friction: DEFAULT_FRICTION,
        }
    }
}

/// Jaw line search resolution.
const CONTACT_STEP: f64 = 5e-4;

/// First `s` moving from `from` towards `to` where `p + s·b` enters the
/// object, refined by bisection.
fn first_contact(object: &AnalyticObject, p: &Vec3, b: &Vec3, from: f64, to: f64) -> Option<f64> {
    let steps = ((to - from).abs() / CONTACT_STEP).ceil() as usize;
    let at = |s: f64| object.sdf(&(p + b * s));
    let mut prev = from;
    if at(prev) <= 0.0 {
        return None;
    }
    for k in 1..=steps {
        let s = from + (to - from) * k as f64 / steps as f64;
        if at(s) <= 0.0 {
            let (mut out, mut inside) = (prev, s);
            for _ in 0..30 {
                let mid = 0.5 * (out + inside);
                if at(mid) <= 0.0 {
                    inside = mid;
                } else {
                    out = mid;
                }
            }
            return Some(inside);
        }
        prev = s;
    }
    None
}

impl StabilityOracle for AntipodalOracle {
    fn succeeds(
        &self,
        object: &AnalyticObject,
        rotation: &Mat3,
        position: &Vec3,
        gripper: &GripperModel,
    ) -> bool {
        let clear = gripper
            .open_cloud
            .iter()
            .all(|q| object.sdf(&(rotation * q + position)) > 0.0);
        if !clear {
            return false;
        }
        let b: Vec3 = rotation.column(0).into();
        let half = gripper.width / 2.0;
        let Some(s1) = first_contact(object, position, &b, half, -half) else {
            return false;
        };
        let Some(s2) = first_contact(object, position, &b, -half, half) else {
            return false;
        };
        if s2 > s1 {
            return false;
        }
        let cos_cone = 1.0 / (1.0 + self.friction * self.friction).sqrt();
        let n1 = object.shape.normal(&(position + b * s1));
        let n2 = object.shape.normal(&(position + b * s2));
        n1.dot(&b) >= cos_cone && n2.dot(&-b) >= cos_cone
    }
}

/// Bounds of the random pose perturbations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationBounds {
    /// Meters.
    pub translation: f64,
    /// Radians.
    pub rotation: f64,
}

impl Default for PerturbationBounds {
    fn default() -> Self {
        Self {
            translation: 0.005,
            rotation: 5f64.to_radians(),
        }
    }
}

/// Random rigid perturbation: translation uniform in a ball, rotation about
/// a uniform axis by a uniform angle, both within `bounds`.
pub fn sample_perturbation(bounds: &PerturbationBounds, rng: &mut impl Rng) -> (Mat3, Vec3) {
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let r = bounds.translation * rng.random::<f64>().cbrt();
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = bounds.rotation * rng.random::<f64>();
    let rot = nalgebra::Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(Vec3::from(axis)),
        angle,
    );
    (rot.into_inner(), Vec3::from(dir) * r)
}

/// Success rate of `n` perturbed copies of the grasp `(rotation, position)`.
/// Perturbations rotate about the grasp point and then translate it.
#[allow(clippy::too_many_arguments)]
pub fn score_grasp<O: StabilityOracle + ?Sized>(
    object: &AnalyticObject,
    rotation: &Mat3,
    position: &Vec3,
    gripper: &GripperModel,
    n: usize,
    bounds: &PerturbationBounds,
    oracle: &O,
    rng: &mut impl Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(invalid("score_grasp needs at least one perturbation"));
    }
    let successes = (0..n)
        .filter(|_| {
            let (dr, dt) = sample_perturbation(bounds, rng);
            oracle.succeeds(object, &(dr * rotation), &(position + dt), gripper)
        })
        .count();
    Ok(successes as f64 / n as f64)
}

/// Uniform unit vector orthogonal to unit `a`.
fn random_perpendicular(a: &Vec3, rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::from(UnitSphere.sample(rng));
        let p = v - a * a.dot(&v);
        if p.norm() > 1e-3 {
            return p.normalize();
        }
    }
}

/// Nearest surface point, by Newton steps along the SDF gradient.
fn project_to_surface(object: &AnalyticObject, mut p: Vec3) -> Option<Vec3> {
    for _ in 0..20 {
        let d = object.sdf(&p);
        if d.abs() < 1e-6 {
            return Some(p);
        }
        p -= object.shape.normal(&p) * d;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnotationConfig {
    pub count: usize,
    /// Share of surface-based candidates; the rest are uniform in the volume.
    pub surface_fraction: f64,
    /// Range of grasp-point depth below the surface along the approach, meters.
    pub inset: (f64, f64),
    pub perturbations: usize,
    pub bounds: PerturbationBounds,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            count: 200,
            surface_fraction: 0.7,
            inset: (0.005, 0.025),
            perturbations: DEFAULT_PERTURBATIONS,
            bounds: PerturbationBounds::default(),
        }
    }
}

/// Samples `config.count` grasps on `object` and scores each with `oracle`.
///
/// Surface-based candidates approach a random surface point from outside
/// (approach `a = -n`), sit `inset` below it, and take a random lateral
/// axis. The remaining candidates have uniform positions in the bounding
/// volume and uniform random orientations. Every position lies inside the
/// bounding volume.
pub fn annotate<O: StabilityOracle + ?Sized>(
    object_id: usize,
    object: &AnalyticObject,
    gripper: &GripperModel,
    oracle: &O,
    config: &AnnotationConfig,
    rng: &mut impl Rng,
) -> Result<Vec<GraspAnnotation>> {
    let volume = object.volume();
    let h = *volume.half_extents();
    let tight = object.shape.half_extents();
    let mut out = Vec::with_capacity(config.count);
    while out.len() < config.count {
        let surface = rng.random::<f64>() < config.surface_fraction;
        let (position, rotation) = if surface {
            let start = Vec3::new(
                rng.random_range(-tight.x..tight.x),
                rng.random_range(-tight.y..tight.y),
                rng.random_range(-tight.z..tight.z),
            );
            let Some(s) = project_to_surface(object, start) else {
                continue;
            };
            let a = -object.shape.normal(&s);
            let p = s + a * rng.random_range(config.inset.0..config.inset.1);
            let b = random_perpendicular(&a, rng);
            (p, assemble_rotation(&a, &b)?)
        } else {
            let p = Vec3::new(
                rng.random_range(-h.x..h.x),
                rng.random_range(-h.y..h.y),
                rng.random_range(-h.z..h.z),
            );
            let a = Vec3::from(UnitSphere.sample(rng));
            let b = random_perpendicular(&a, rng);
            (p, assemble_rotation(&a, &b)?)
        };
        if !volume.contains(&position, 0.0) {
            continue;
        }
        let score = score_grasp(
            object,
            &rotation,
            &position,
            gripper,
            config.perturbations,
            &config.bounds,
            oracle,
            rng,
        )?;
        out.push(GraspAnnotation {
            object_id,
            position,
            rotation,
            score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Top-down grasp closing across the bar (jaws along ±y).
    fn across_bar(x: f64) -> (Mat3, Vec3) {
        (
            assemble_rotation(&-Vec3::z(), &Vec3::y()).unwrap(),
            Vec3::new(x, 0.0, 0.0),
        )
    }

    struct Alternating(std::sync::atomic::AtomicUsize);

    impl StabilityOracle for Alternating {
        fn succeeds(&self, _: &AnalyticObject, _: &Mat3, _: &Vec3, _: &GripperModel) -> bool {
            self.0.fetch_add(1, std::sync::atomic::Ordering::Relaxed) % 2 == 0
        }
    }

    #[test]
    fn constant_oracles() {
        let o = AnalyticObject::waist_bar_fixture();
        let (r, p) = across_bar(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GripperModel::wide();
        let b = PerturbationBounds::default();
        assert_eq!(
            score_grasp(&o, &r, &p, &g, 50, &b, &ConstantOracle(true), &mut rng).unwrap(),
            1.0
        );
        assert_eq!(
            score_grasp(&o, &r, &p, &g, 50, &b, &ConstantOracle(false), &mut rng).unwrap(),
            0.0
        );
        let half = Alternating(Default::default());
        assert_eq!(
            score_grasp(&o, &r, &p, &g, 50, &b, &half, &mut rng).unwrap(),
            0.5
        );
        assert!(score_grasp(&o, &r, &p, &g, 0, &b, &half, &mut rng).is_err());
    }

    #[test]
    fn waist_grasp_is_stable_and_end_grasp_is_not() {
        let o = AnalyticObject::waist_bar_fixture();
        let g = GripperModel::wide();
        let oracle = AntipodalOracle::default();
        let b = PerturbationBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (r, p) = across_bar(0.0);
        assert!(score_grasp(&o, &r, &p, &g, 50, &b, &oracle, &mut rng).unwrap() >= 0.9);
        let (r, p) = across_bar(0.1);
        assert_eq!(
            score_grasp(&o, &r, &p, &g, 50, &b, &oracle, &mut rng).unwrap(),
            0.0
        );
    }

    #[test]
    fn boot_bulk_is_too_big() {
        let o = AnalyticObject::boot_fixture();
        let g = GripperModel::wide();
        let oracle = AntipodalOracle::default();
        let Shape::TwoLobe {
            big_radius,
            small_radius,
            separation,
        } = o.shape
        else {
            unreachable!()
        };
        let xb = (big_radius - separation - small_radius) / 2.0;
        for a in [-Vec3::z(), Vec3::y(), -Vec3::x()] {
            for lateral in [Vec3::x(), Vec3::y(), Vec3::z()] {
                if let Ok(r) = assemble_rotation(&a, &lateral) {
                    assert!(!oracle.succeeds(&o, &r, &Vec3::new(xb, 0.0, 0.0), &g));
                }
            }
        }
    }

    #[test]
    fn empty_space_fails() {
        let o = AnalyticObject::waist_bar_fixture();
        let (r, _) = across_bar(0.0);
        assert!(!AntipodalOracle::default().succeeds(
            &o,
            &r,
            &Vec3::new(0.0, 0.0, 0.3),
            &GripperModel::wide()
        ));
    }

    #[test]
    fn doubling_n_converges() {
        // Mean |S_2N - S_N| over seeds stays within 2/√N.
        let o = AnalyticObject::waist_bar_fixture();
        let g = GripperModel::wide();
        let oracle = AntipodalOracle::default();
        // A marginal grasp near the end of the waist where outcomes vary.
        let (r, _) = across_bar(0.0);
        let p = Vec3::new(0.03, 0.0, 0.0);
        let b = PerturbationBounds {
            translation: 0.01,
            rotation: 10f64.to_radians(),
        };
        let n = 20;
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s1 = score_grasp(&o, &r, &p, &g, n, &b, &oracle, &mut rng).unwrap();
            let s2 = score_grasp(&o, &r, &p, &g, 2 * n, &b, &oracle, &mut rng).unwrap();
            total += (s1 - s2).abs();
        }
        assert!(total / 100.0 <= 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn annotations_are_valid() {
        let o = AnalyticObject::waist_bar_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AnnotationConfig {
            count: 60,
            perturbations: 10,
            ..AnnotationConfig::default()
        };
        let ann = annotate(
            4,
            &o,
            &GripperModel::wide(),
            &AntipodalOracle::default(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert_eq!(ann.len(), 60);
        for a in &ann {
            assert_eq!(a.object_id, 4);
            assert!(o.volume().contains(&a.position, 0.0));
            let (orth, det) = crate::scene::rotation_defect(&a.rotation);
            assert!(orth < 1e-9 && (det - 1.0).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&a.score));
        }
        assert!(ann.iter().any(|a| a.score == 0.0));
    }

    #[test]
    fn stable_annotations_cluster_at_the_waist() {
        let o = AnalyticObject::waist_bar_fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = AnnotationConfig {
            count: 4000,
            perturbations: 10,
            ..AnnotationConfig::default()
        };
        let ann = annotate(
            0,
            &o,
            &GripperModel::wide(),
            &AntipodalOracle::default(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        let good: Vec<_> = ann.iter().filter(|a| a.score > 0.0).collect();
        assert!(!good.is_empty());
        assert!(good.iter().all(|a| a.position.x.abs() < 0.02));
    }

    use crate::dataset::analytic::Shape;
}
