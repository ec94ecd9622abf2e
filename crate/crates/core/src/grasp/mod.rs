//! Grasp proposal on a grid, rotation assembly and gripper-collision
//! filtering.

pub mod gripper;
pub mod rotation;

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::field::{scene_density, GraspField, RadianceField};
use crate::scene::{Mat3, ObjectInstance, Scene, Vec3};

pub use gripper::GripperModel;
pub use rotation::{assemble_rotation, assemble_rotation_lenient};

/// Default open-gripper density budget (sum over 1000 points, 1/m).
pub const DEFAULT_T_OPEN: f64 = 1.0;
/// Default closed-gripper density requirement (sum over 1000 points, 1/m).
pub const DEFAULT_T_CLOSED: f64 = 50.0;

/// A grasp in its object's frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspProposal {
    pub object_id: usize,
    /// Row-major index `(ix · res + iy) · res + iz` of the grid cell.
    pub grid_index: usize,
    pub position: Vec3,
    pub rotation: Mat3,
    pub score: f64,
}

/// Cell centers of a `res³` grid spanning an object's box, in grid-index order.
pub fn grid_points(object: &ObjectInstance, res: usize) -> Vec<Vec3> {
    let h = object.volume.half_extents();
    let coord = |i: usize, axis: usize| -h[axis] + (i as f64 + 0.5) * 2.0 * h[axis] / res as f64;
    let mut pts = Vec::with_capacity(res * res * res);
    for ix in 0..res {
        for iy in 0..res {
            for iz in 0..res {
                pts.push(Vec3::new(coord(ix, 0), coord(iy, 1), coord(iz, 2)));
            }
        }
    }
    pts
}

/// Queries the grasp field on the object's grid and keeps the `k` best
/// proposals, sorted by score descending with ties broken by grid index.
pub fn propose<G: GraspField + ?Sized>(
    field: &G,
    object: &ObjectInstance,
    res: usize,
    k: usize,
) -> Result<Vec<GraspProposal>> {
    if res < 2 || k < 1 {
        return Err(invalid("propose needs res >= 2 and k >= 1"));
    }
    let pts = grid_points(object, res);
    let out = field.grasp(object, &pts)?;
    let mut proposals: Vec<GraspProposal> = pts
        .iter()
        .zip(out)
        .enumerate()
        .map(|(i, (p, g))| GraspProposal {
            object_id: object.id,
            grid_index: i,
            position: *p,
            rotation: assemble_rotation_lenient(&g.approach, &g.lateral),
            score: g.score,
        })
        .collect();
    proposals.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.grid_index.cmp(&b.grid_index))
    });
    proposals.truncate(k);
    Ok(proposals)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub t_open: f64,
    pub t_closed: f64,
    /// Treat `z < 0` as solid.
    pub ground_plane: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            t_open: DEFAULT_T_OPEN,
            t_closed: DEFAULT_T_CLOSED,
            ground_plane: false,
        }
    }
}

/// A proposal with its gripper density sums and filter outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaluatedGrasp {
    pub proposal: GraspProposal,
    pub open_sum: f64,
    pub closed_sum: f64,
    pub passed: bool,
}

impl EvaluatedGrasp {
    pub fn open_ok(&self, t_open: f64) -> bool {
        self.open_sum < t_open
    }

    pub fn closed_ok(&self, t_closed: f64) -> bool {
        self.closed_sum > t_closed
    }
}

/// World-frame pose `(rotation, position)` of a proposal.
pub fn world_grasp(object: &ObjectInstance, p: &GraspProposal) -> (Mat3, Vec3) {
    (
        object.pose.rotation() * p.rotation,
        object.pose.object_to_world(&p.position),
    )
}

/// Sums scene density over each proposal's open and closed gripper clouds.
/// A grasp passes iff the open sum is below `t_open` and the closed sum is
/// above `t_closed`. Input order is preserved.
pub fn evaluate<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    proposals: &[GraspProposal],
    gripper: &GripperModel,
    config: &FilterConfig,
) -> Result<Vec<EvaluatedGrasp>> {
    if !(config.t_open > 0.0 && config.t_closed > 0.0) {
        return Err(invalid("filter thresholds must be positive"));
    }
    proposals
        .par_iter()
        .map(|p| {
            let object = scene.object(p.object_id).ok_or_else(|| {
                invalid(format!(
                    "proposal references unknown object {}",
                    p.object_id
                ))
            })?;
            let (rot, pos) = world_grasp(object, p);
            let (open, closed) = gripper.posed(&rot, &pos);
            let open_sum: f64 = scene_density(field, scene, &open, config.ground_plane)?
                .iter()
                .sum();
            let closed_sum: f64 = scene_density(field, scene, &closed, config.ground_plane)?
                .iter()
                .sum();
            Ok(EvaluatedGrasp {
                proposal: *p,
                open_sum,
                closed_sum,
                passed: open_sum < config.t_open && closed_sum > config.t_closed,
            })
        })
        .collect()
}

/// The proposals that pass [`evaluate`], in input order.
pub fn filter<F: RadianceField + ?Sized>(
    field: &F,
    scene: &Scene,
    proposals: &[GraspProposal],
    gripper: &GripperModel,
    config: &FilterConfig,
) -> Result<Vec<GraspProposal>> {
    Ok(evaluate(field, scene, proposals, gripper, config)?
        .into_iter()
        .filter(|e| e.passed)
        .map(|e| e.proposal)
        .collect())
}

/// One line per grasp:
/// `object grid x y z r00 r01 r02 r10 r11 r12 r20 r21 r22 score open_sum closed_sum pass`
/// with positions in meters in the object frame and `pass` as 0 or 1.
pub fn grasps_to_text(grasps: &[EvaluatedGrasp]) -> String {
    let mut s = String::from(
        "# object grid x y z r00 r01 r02 r10 r11 r12 r20 r21 r22 score open_sum closed_sum pass\n",
    );
    for g in grasps {
        let p = &g.proposal;
        let _ = write!(
            s,
            "{} {} {} {} {}",
            p.object_id, p.grid_index, p.position.x, p.position.y, p.position.z
        );
        for r in 0..3 {
            for c in 0..3 {
                let _ = write!(s, " {}", p.rotation[(r, c)]);
            }
        }
        let _ = writeln!(
            s,
            " {} {} {} {}",
            p.score, g.open_sum, g.closed_sum, g.passed as u8
        );
    }
    s
}
