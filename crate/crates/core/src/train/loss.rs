//! Training losses, as plain functions and as tape operations.
//!
//! Reductions: `L_rgb` is the mean over rays and channels, `L_gscore` the
//! mean over annotations, and `L_grot` the mean over annotations of the
//! label score times the mean of the nine squared element differences.

use crate::error::{Error, Result};
use crate::nn::{Matrix, NodeId, Tape};
use crate::scene::Mat3;

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Mean squared error over all values.
pub fn loss_rgb(rendered: &[f64], target: &[f64]) -> Result<f64> {
    if rendered.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "rendered has {} values, target {}",
            rendered.len(),
            target.len()
        )));
    }
    if rendered.is_empty() {
        return Ok(0.0);
    }
    Ok(rendered
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / rendered.len() as f64)
}

/// Asymmetric least squares: over-prediction is weighted by `lambda`.
pub fn loss_gscore(predicted: f64, label: f64, lambda: f64) -> f64 {
    let over = (predicted - label).max(0.0);
    let under = (label - predicted).max(0.0);
    lambda * (over * over) + under * under
}

/// Score-weighted mean squared rotation difference.
pub fn loss_grot(predicted: &Mat3, label: &Mat3, label_score: f64) -> f64 {
    label_score * (predicted - label).iter().map(|d| d * d).sum::<f64>() / 9.0
}

/// `mean((rendered - target)²)` for an `n×3` node.
pub fn tape_loss_rgb(tape: &mut Tape, rendered: NodeId, target: Matrix) -> NodeId {
    let t = tape.constant(target);
    let d = tape.sub(rendered, t);
    let sq = tape.square(d);
    tape.mean_all(sq)
}

/// Mean asymmetric loss for an `n×1` score node against labels.
pub fn tape_loss_gscore(tape: &mut Tape, score: NodeId, labels: &[f64], lambda: f64) -> NodeId {
    let l = tape.constant(Matrix::from_vec(labels.len(), 1, labels.to_vec()).unwrap());
    let d = tape.sub(score, l);
    let over = tape.relu(d);
    let over = tape.square(over);
    let over = tape.scale(over, lambda);
    let nd = tape.neg(d);
    let under = tape.relu(nd);
    let under = tape.square(under);
    let total = tape.add(over, under);
    tape.mean_all(total)
}

/// Assembles `[b | a×b | a]` rows (`n×9`, columns of `R` side by side) from
/// raw approach and lateral outputs.
pub fn tape_rotation(tape: &mut Tape, approach: NodeId, lateral: NodeId) -> NodeId {
    const EPS: f64 = 1e-12;
    let a = tape.normalize_rows(approach, EPS);
    let t = tape.cross(a, lateral);
    let b = tape.cross(t, a);
    let b = tape.normalize_rows(b, EPS);
    let ab = tape.cross(a, b);
    let c = tape.concat(b, ab);
    tape.concat(c, a)
}

/// Rotation in the `[b | a×b | a]` row layout used by [`tape_rotation`].
pub fn rotation_row(r: &Mat3) -> [f64; 9] {
    std::array::from_fn(|k| r[(k % 3, k / 3)])
}

/// Mean over annotations of `Ŝ · mean((R - R̂)²)`; `rotations` is `n×9` in
/// the [`rotation_row`] layout.
pub fn tape_loss_grot(
    tape: &mut Tape,
    rotations: NodeId,
    labels: &[Mat3],
    scores: &[f64],
) -> NodeId {
    let n = labels.len();
    let target: Vec<f64> = labels.iter().flat_map(rotation_row).collect();
    let t = tape.constant(Matrix::from_vec(n, 9, target).unwrap());
    let d = tape.sub(rotations, t);
    let sq = tape.square(d);
    let per = tape.sum_rows(sq);
    let w =
        tape.constant(Matrix::from_vec(n, 1, scores.iter().map(|s| s / 9.0).collect()).unwrap());
    let weighted = tape.mul(per, w);
    tape.mean_all(weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp::assemble_rotation;
    use crate::nn::ParameterStore;
    use crate::scene::Vec3;
    use proptest::prelude::*;

    #[test]
    fn rgb_examples() {
        assert_eq!(loss_rgb(&[0.3; 12], &[0.3; 12]).unwrap(), 0.0);
        assert_eq!(loss_rgb(&[0.0; 12], &[1.0; 12]).unwrap(), 1.0);
        let a = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let b = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5];
        assert!((loss_rgb(&a, &b).unwrap() - 0.125).abs() < 1e-15);
        assert!(loss_rgb(&a, &b[..3]).is_err());
    }

    #[test]
    fn gscore_examples() {
        assert_eq!(loss_gscore(0.4, 0.4, 0.1), 0.0);
        assert!((loss_gscore(1.0, 0.0, 0.1) - 0.1).abs() < 1e-15);
        for lambda in [0.0, 0.1, 0.5] {
            assert_eq!(loss_gscore(0.0, 1.0, lambda), 1.0);
        }
    }

    #[test]
    fn grot_examples() {
        let i = Mat3::identity();
        let rz = assemble_rotation(&Vec3::z(), &Vec3::y()).unwrap();
        assert_eq!(loss_grot(&i, &i, 1.0), 0.0);
        assert_eq!(loss_grot(&i, &rz, 0.0), 0.0);
        assert!((loss_grot(&i, &rz, 1.0) - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_of_conflicting_labels() {
        // Minimizing 0.1·S² + (1 - S)² over a grid lands on 1/1.1.
        let best = (0..=100_000)
            .map(|k| k as f64 / 100_000.0)
            .min_by(|&a, &b| {
                let f = |s: f64| loss_gscore(s, 0.0, 0.1) + loss_gscore(s, 1.0, 0.1);
                f(a).total_cmp(&f(b))
            })
            .unwrap();
        assert!((best - 1.0 / 1.1).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn asymmetry(label in 0u32..=1024, d in 0u32..=1024, lambda in 0.0..1.0f64) {
            // Dyadic values keep label ± d exact, so both errors have the same magnitude.
            let (label, d) = (label as f64 / 1024.0, d as f64 / 1024.0);
            let over = loss_gscore(label + d, label, lambda);
            let under = loss_gscore(label - d, label, lambda);
            prop_assert_eq!(over, lambda * under);
        }
    }

    #[test]
    fn tape_losses_match_plain_losses() {
        let store = ParameterStore::new();
        let mut tape = Tape::new();
        let rendered =
            tape.constant(Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, 0.9, 0.8, 0.7]).unwrap());
        let target = Matrix::from_vec(2, 3, vec![0.0, 0.2, 0.5, 1.0, 1.0, 0.0]).unwrap();
        let l = tape_loss_rgb(&mut tape, rendered, target.clone());
        let want = loss_rgb(&[0.1, 0.2, 0.3, 0.9, 0.8, 0.7], target.data()).unwrap();
        assert!((tape.value(l).get(0, 0) - want).abs() < 1e-15);

        let s = tape.constant(Matrix::from_vec(3, 1, vec![0.9, 0.2, 0.5]).unwrap());
        let l = tape_loss_gscore(&mut tape, s, &[0.1, 0.6, 0.5], 0.1);
        let want = (loss_gscore(0.9, 0.1, 0.1) + loss_gscore(0.2, 0.6, 0.1)) / 3.0;
        assert!((tape.value(l).get(0, 0) - want).abs() < 1e-15);

        let a = Vec3::new(0.3, -0.2, 0.9);
        let b = Vec3::new(1.0, 0.4, 0.1);
        let an = tape.constant(Matrix::row(a.as_slice()));
        let bn = tape.constant(Matrix::row(b.as_slice()));
        let r = tape_rotation(&mut tape, an, bn);
        let expect = assemble_rotation(&a, &b).unwrap();
        for (x, y) in tape.value(r).data().iter().zip(rotation_row(&expect)) {
            assert!((x - y).abs() < 1e-12);
        }
        let label = assemble_rotation(&Vec3::z(), &Vec3::x()).unwrap();
        let l = tape_loss_grot(&mut tape, r, &[label], &[0.7]);
        assert!((tape.value(l).get(0, 0) - loss_grot(&expect, &label, 0.7)).abs() < 1e-12);
        let _ = tape.backward(l, &store).unwrap();
    }
}
