//! Grasp poses as se(3) twists: exp/log round trip, distances and the
//! box-shaped gripper proxy against a small point cloud.
//!
//! cargo run --example geometry

use negrasp::scene::SceneCloud;
use negrasp::se3::{collides, exp_map, gripper_boxes, log_map, pose_distance, GraspPose, GripperModel};

fn main() -> negrasp::Result<()> {
    let pose = GraspPose::new([0.1, -0.4, 0.9], [0.02, 0.05, 0.7], 0.08);
    let xform = exp_map(&pose)?;
    println!("rotation rows: {:.4?}", xform.to_row_major().chunks(4).take(3).map(|r| r[..3].to_vec()).collect::<Vec<_>>());
    println!("translation:   {:.4?}", xform.translation.as_slice());

    // log recovers the twist; the width rides along separately.
    let back = log_map(&xform)?;
    let err = pose.to_vector()[..6].iter().zip(&back.to_vector()[..6]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("exp/log round trip error {err:.2e}");

    let shifted = GraspPose { tau: [pose.tau[0] + 0.01, pose.tau[1], pose.tau[2]], ..pose };
    println!("distance to a nudged copy {:.4}", pose_distance(&pose, &shifted)?);

    // A gripper pointing straight down at the origin, closing along x.
    let model = GripperModel::default();
    let grasp = GraspPose::new([0.0; 3], [0.0; 3], 0.06);
    let boxes = gripper_boxes(&grasp, &model)?;
    let finger = boxes.fingers[0].center;
    let gap = boxes.closing.center;
    println!("finger centre {:.3?}, closing volume centre {:.3?}", finger.as_slice(), gap.as_slice());

    let between = SceneCloud::single_object(vec![[gap.x, gap.y, gap.z]], "object");
    let in_finger = SceneCloud::single_object(vec![[finger.x, finger.y, finger.z]], "object");
    println!("point between the fingers collides: {}", collides(&grasp, &model, &between)?);
    println!("point inside a finger collides:     {}", collides(&grasp, &model, &in_finger)?);
    Ok(())
}
