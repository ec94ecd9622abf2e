//! Gripper orientation from the grasp decoder's raw vectors.
//!
//! The approach vector `a` becomes the third column. The lateral hint `b̂`
//! is projected onto the plane orthogonal to `a` via `b = (a × b̂) × a`, and
//! the frame is completed with `a × b`: `R = [b, a × b, a]`.

use crate::error::{Error, Result};
use crate::scene::{Mat3, Vec3};

/// Minimum norm of `a` and of `a × b̂` (after normalizing `a` and `b̂`).
pub const DEGENERACY_EPSILON: f64 = 1e-9;

pub fn assemble_rotation(a: &Vec3, b_hat: &Vec3) -> Result<Mat3> {
    let an = a.norm();
    let bn = b_hat.norm();
    if !(an > DEGENERACY_EPSILON && bn > DEGENERACY_EPSILON) || !an.is_finite() || !bn.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    let a = a / an;
    let c = a.cross(&(b_hat / bn));
    let cn = c.norm();
    if cn <= DEGENERACY_EPSILON {
        return Err(Error::DegenerateRotation);
    }
    let b = (c / cn).cross(&a).normalize();
    Ok(Mat3::from_columns(&[b, a.cross(&b), a]))
}

/// Like [`assemble_rotation`], but a lateral hint parallel to `a` is
/// replaced by the coordinate axis least aligned with `a`. A zero approach
/// vector falls back to `+z`.
pub fn assemble_rotation_lenient(a: &Vec3, b_hat: &Vec3) -> Mat3 {
    if let Ok(r) = assemble_rotation(a, b_hat) {
        return r;
    }
    let a = if a.norm() > DEGENERACY_EPSILON && a.iter().all(|v| v.is_finite()) {
        a.normalize()
    } else {
        Vec3::z()
    };
    let axis = (0..3)
        .min_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
        .unwrap();
    let mut hint = Vec3::zeros();
    hint[axis] = 1.0;
    assemble_rotation(&a, &hint).expect("least-aligned axis is never parallel to a unit vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::rotation_defect;
    use proptest::prelude::*;

    #[test]
    fn identity_case() {
        let r = assemble_rotation(&Vec3::z(), &Vec3::x()).unwrap();
        assert!((r - Mat3::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn quarter_turn_case() {
        let r = assemble_rotation(&Vec3::z(), &Vec3::y()).unwrap();
        let expect = Mat3::from_columns(&[Vec3::y(), -Vec3::x(), Vec3::z()]);
        assert!((r - expect).abs().max() < 1e-15);
    }

    #[test]
    fn parallel_inputs_are_degenerate() {
        assert!(matches!(
            assemble_rotation(&Vec3::z(), &(Vec3::z() * 3.0)),
            Err(Error::DegenerateRotation)
        ));
        assert!(matches!(
            assemble_rotation(&Vec3::zeros(), &Vec3::x()),
            Err(Error::DegenerateRotation)
        ));
        let r = assemble_rotation_lenient(&Vec3::z(), &Vec3::z());
        let (orth, det) = rotation_defect(&r);
        assert!(orth < 1e-12 && (det - 1.0).abs() < 1e-12);
        assert_eq!(r.column(2), Vec3::z());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn always_a_rotation(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0,
        ) {
            let (a, b) = (Vec3::new(ax, ay, az), Vec3::new(bx, by, bz));
            prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3);
            prop_assume!(a.normalize().cross(&b.normalize()).norm() > 1e-3);
            let r = assemble_rotation(&a, &b).unwrap();
            let (orth, det) = rotation_defect(&r);
            prop_assert!(orth <= 1e-5);
            prop_assert!((det - 1.0).abs() <= 1e-5);
            prop_assert!((r.column(2) - a.normalize()).norm() < 1e-12);
        }
    }
}
