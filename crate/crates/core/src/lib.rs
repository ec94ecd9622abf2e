//! Object-centric latent scene representation.
//!
//! Every object in a scene is a pose, an oriented bounding box and a latent
//! code. Two decoders share a backbone and turn latent codes into fields:
//! a radiance field (density and color) and a grasp field (grasp score and
//! gripper orientation). The crate contains the whole pipeline around those
//! decoders:
//!
//! * [`raytrace`] and [`raymarch`] turn a camera and a scene into a fixed
//!   budget of depth-sorted samples confined to object volumes,
//! * [`render`] queries a [`field::RadianceField`] at those samples and
//!   composites them,
//! * [`nn`] is a small reverse-mode autodiff engine plus the decoders,
//! * [`train`] holds the losses, RMSprop, pre-training and latent inversion,
//! * [`grasp`] proposes grasps on a grid and filters them with density
//!   queries against every object in the scene,
//! * [`voxel`] extracts occupancy grids and answers point collision queries,
//! * [`dataset`] generates procedural analytic objects with ground-truth
//!   renders and grasp annotations, and provides PSNR/SSIM.

pub mod dataset;
pub mod error;
pub mod field;
pub mod grasp;
pub mod image_io;
pub mod nn;
pub mod raymarch;
pub mod raytrace;
pub mod render;
pub mod scene;
pub mod train;
pub mod voxel;

pub use error::{Error, Result};
pub use field::{GraspField, GraspOutput, RadianceField, RadianceOutput};
pub use scene::{BoundingVolume, Camera, LatentCode, Mat3, ObjectInstance, Pose, Scene, Vec3};
