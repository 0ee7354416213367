//! From a depth image to a scene: back-projection, lifting an image-space
//! grasp rectangle, and filtering generated grasps with the gripper proxy.
//!
//! cargo run --example depth_lifting

use negrasp::data::{
    bilinear_depth, depth_to_cloud, filter_grasps, gen_toy_scene, lift_grasp, CameraModel, DatasetSpec, DepthMap,
    Rect2DGrasp,
};
use negrasp::se3::GripperModel;

fn main() -> negrasp::Result<()> {
    let cam = CameraModel::new(55.0, 64, 48)?;
    // A tilted plane with a missing patch.
    let mut data = Vec::new();
    for y in 0..48 {
        for x in 0..64 {
            let hole = (20..24).contains(&x) && (10..14).contains(&y);
            data.push(if hole { 0.0 } else { 0.6 + 0.002 * x as f64 });
        }
    }
    let depth = DepthMap::new(64, 48, data)?;
    let cloud = depth_to_cloud(&depth, &cam)?;
    println!("focal {:.2} px, {} valid points", cam.focal(), cloud.len());
    println!("depth at (30.5, 30.25) = {:.4}", bilinear_depth(&depth, 30.5, 30.25)?);
    match bilinear_depth(&depth, 20.5, 10.5) {
        Ok(d) => println!("hole sampled as {d}"),
        Err(e) => println!("hole rejected: {e}"),
    }

    let rect = Rect2DGrasp { center: [32.0, 24.0], angle: 0.3, width_px: 5.0, height_px: 2.0 };
    let grasp = lift_grasp(&rect, &depth, &cam)?;
    println!("lifted grasp: width {:.4} m, origin {:?}", grasp.width, grasp.translation()?.as_slice());

    let spec = DatasetSpec::two_object_toy();
    let scene = gen_toy_scene(&spec, 3)?;
    for obj in &scene.objects {
        println!("{:>4}: {} points, {} grasps", obj.name, obj.mask.len(), obj.grasps.len());
    }
    let (kept, report) = filter_grasps(&scene, &GripperModel::default())?;
    println!("filter kept {} grasps, rejected {:?}", kept.grasp_count(), report);
    Ok(())
}
