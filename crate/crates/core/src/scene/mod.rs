//! Scenes, objects, cameras and rigid transforms.

mod file;

pub use file::{
    read_latent_file, write_latent_file, LatentSource, ObjectDescription, SceneDescription,
};

use nalgebra::{Rotation3, Unit};

use crate::error::{invalid, Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Tolerance on orthonormality and determinant of stored rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Returns `(‖RᵀR − I‖∞, det R)`.
pub fn rotation_defect(r: &Mat3) -> (f64, f64) {
    let e = r.transpose() * r - Mat3::identity();
    (e.amax(), r.determinant())
}

/// Rigid transform from object (or camera) frame to world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("pose".into()));
        }
        let (orth, det) = rotation_defect(&rotation);
        if orth > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(invalid(format!(
                "rotation is not proper orthonormal (orthogonality error {orth:.3e}, det {det})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12).ok_or_else(|| invalid("zero rotation axis"))?;
        let rotation = *Rotation3::from_axis_angle(&axis, angle).matrix();
        Self::new(rotation, translation)
    }

    /// Camera-style pose at `eye` whose +z axis looks at `target`, with +y
    /// pointing down in the image (x right, y down, z forward).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| invalid("look_at: eye coincides with target"))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-9)
            .ok_or_else(|| invalid("look_at: up vector parallel to viewing direction"))?;
        let down = forward.cross(&right);
        let rotation = Mat3::from_columns(&[right, down, forward]);
        Self::new(rotation, eye)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `Rᵀ (p − t)`.
    pub fn world_to_object(&self, point: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(point - self.translation))
    }

    pub fn object_to_world(&self, point: &Vec3) -> Vec3 {
        self.rotation * point + self.translation
    }

    /// Rotates a unit direction into the object frame. Zero vectors are rejected.
    pub fn direction_to_object(&self, dir: &Vec3) -> Result<Vec3> {
        if dir.norm_squared() == 0.0 || !dir.iter().all(|v| v.is_finite()) {
            return Err(invalid("direction must be finite and non-zero"));
        }
        Ok(self.rotation.tr_mul(dir))
    }

    pub fn direction_to_world(&self, dir: &Vec3) -> Vec3 {
        self.rotation * dir
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Oriented box centered at the object origin, axes aligned with the object frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingVolume {
    half_extents: Vec3,
}

impl BoundingVolume {
    pub fn new(half_extents: Vec3) -> Result<Self> {
        if !half_extents.iter().all(|h| h.is_finite() && *h > 0.0) {
            return Err(invalid(format!(
                "half extents must be positive, got {:?}",
                half_extents.as_slice()
            )));
        }
        Ok(Self { half_extents })
    }

    pub fn cube(half: f64) -> Result<Self> {
        Self::new(Vec3::repeat(half))
    }

    pub fn half_extents(&self) -> &Vec3 {
        &self.half_extents
    }

    /// Point-in-box test in the object frame, with a slack of `tol` meters.
    pub fn contains(&self, p_obj: &Vec3, tol: f64) -> bool {
        (0..3).all(|i| p_obj[i].abs() <= self.half_extents[i] + tol)
    }

    /// The eight corners in the object frame.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
        }
        out
    }
}

/// Per-object latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("latent code must not be empty"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("latent code".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInstance {
    /// Dense id; doubles as the row of the latent table during training.
    pub id: usize,
    pub pose: Pose,
    pub volume: BoundingVolume,
    pub latent: LatentCode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    objects: Vec<ObjectInstance>,
    background: [f64; 3],
}

impl Scene {
    pub fn new(objects: Vec<ObjectInstance>, background: [f64; 3]) -> Result<Self> {
        if !background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(invalid("background color must lie in [0, 1]"));
        }
        let mut ids: Vec<usize> = objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("object ids must be unique within a scene"));
        }
        Ok(Self {
            objects,
            background,
        })
    }

    pub fn empty(background: [f64; 3]) -> Self {
        Self {
            objects: Vec::new(),
            background,
        }
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn objects_mut(&mut self) -> &mut [ObjectInstance] {
        &mut self.objects
    }

    pub fn object(&self, id: usize) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn background(&self) -> [f64; 3] {
        self.background
    }

    pub fn set_background(&mut self, background: [f64; 3]) {
        self.background = background;
    }

    /// Objects whose volume contains the world point `p`.
    pub fn objects_containing<'a>(
        &'a self,
        p: &'a Vec3,
    ) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects
            .iter()
            .filter(move |o| o.volume.contains(&o.pose.world_to_object(p), 0.0))
    }
}

/// Pinhole camera. The pose maps camera coordinates (x right, y down, z
/// forward) to world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub pose: Pose,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        pose: Pose,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(invalid("focal lengths must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image size must be at least 1x1"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::NonFinite("principal point".into()));
        }
        Ok(Self {
            pose,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Symmetric camera: principal point at `(W/2, H/2)`, so with pixel
    /// centers at `u + 0.5` the optical axis passes through the image center.
    pub fn symmetric(pose: Pose, focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            pose,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    /// Symmetric camera on a sphere around `target` looking at it.
    pub fn orbit(eye: Vec3, target: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let dir = (target - eye).normalize();
        let up = if dir.z.abs() > 0.99 {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        Self::symmetric(Pose::look_at(eye, target, up)?, focal, width, height)
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}
