//! Scoring detected grasps against ground truth: coverage rate, earth
//! mover's distance and collision-free rate.
//!
//! cargo run --release --example scoring

use negrasp::data::{gen_toy_scene, DatasetSpec};
use negrasp::metrics::{collision_free_rate, coverage_rate, emd, DEFAULT_DELTA};
use negrasp::se3::{GraspPose, GripperModel};

fn main() -> negrasp::Result<()> {
    let scene = gen_toy_scene(&DatasetSpec::two_object_toy(), 11)?;
    let truth: Vec<GraspPose> = scene.objects.iter().flat_map(|o| o.grasps.iter().copied()).collect();
    let model = GripperModel::default();

    // Perturb half of the ground truth slightly and push the rest far away.
    let detected: Vec<GraspPose> = truth
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let dz = if i % 2 == 0 { 0.005 } else { 0.3 };
            GraspPose { tau: [g.tau[0], g.tau[1], g.tau[2] - dz], ..*g }
        })
        .collect();

    for (label, set) in [("ground truth", &truth), ("perturbed", &detected)] {
        println!(
            "{label:>12}: CR {:.3}  EMD {:.4}  CFR {:.3}",
            coverage_rate(set, &truth, DEFAULT_DELTA)?,
            emd(set, &truth)?,
            collision_free_rate(set, &scene.cloud, &model)?
        );
    }
    let half = &detected[..detected.len() / 3];
    println!("unequal sizes ({} vs {}): EMD {:.4}", half.len(), truth.len(), emd(half, &truth)?);
    Ok(())
}
