//! Grasp poses on se(3) plus gripper width.
//!
//! A grasp is stored as the twist `(omega, tau)` followed by the opening
//! width, giving the 7-vector the diffusion model operates on. The gripper
//! frame uses `x` as the closing axis, `z` as the approach axis and places
//! its origin at the centre of the closing volume.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::SceneCloud;

/// Largest opening of the default two-finger gripper, in metres.
pub const MAX_GRIPPER_WIDTH: f64 = 0.2021;

/// Length of the grasp vector: rotation (3), translation (3), width (1).
pub const GRASP_DIM: usize = 7;

pub type GraspVector = [f64; GRASP_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub omega: [f64; 3],
    pub tau: [f64; 3],
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_depth: f64,
    pub finger_thickness: f64,
    pub palm_clearance: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_width: MAX_GRIPPER_WIDTH,
            finger_depth: 0.04,
            finger_thickness: 0.01,
            palm_clearance: 0.02,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.max_width, self.finger_depth, self.finger_thickness, self.palm_clearance];
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::invalid("gripper dimensions must be positive"))
        }
    }
}

/// Weights of the grasp-space distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMetric {
    /// Metres per radian of geodesic rotation difference.
    pub rot_weight: f64,
    pub width_weight: f64,
}

impl Default for PoseMetric {
    fn default() -> Self {
        Self { rot_weight: 0.1, width_weight: 1.0 }
    }
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

impl GraspPose {
    pub fn new(omega: [f64; 3], tau: [f64; 3], width: f64) -> Self {
        Self { omega, tau, width }
    }

    pub fn to_vector(&self) -> GraspVector {
        let [a, b, c] = self.omega;
        let [d, e, f] = self.tau;
        [a, b, c, d, e, f, self.width]
    }

    pub fn from_vector(v: &GraspVector) -> Self {
        Self { omega: [v[0], v[1], v[2]], tau: [v[3], v[4], v[5]], width: v[6] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Pose whose exponential is `xform`, with the given width.
    pub fn from_transform(xform: &RigidTransform, width: f64) -> Result<Self> {
        let mut pose = log_map(xform)?;
        pose.width = width;
        Ok(pose)
    }

    pub fn transform(&self) -> Result<RigidTransform> {
        exp_map(self)
    }

    pub fn translation(&self) -> Result<Vector3<f64>> {
        Ok(exp_map(self)?.translation)
    }

    /// Re-expresses the pose on the principal branch `|omega| <= pi`,
    /// keeping the rigid transform and the width unchanged.
    pub fn canonicalize(&self) -> Result<Self> {
        let xform = exp_map(self)?;
        Self::from_transform(&xform, self.width)
    }
}

/// Coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / (theta * theta), (theta - s) / (theta * theta * theta))
    }
}

pub fn exp_map(pose: &GraspPose) -> Result<RigidTransform> {
    if !pose.is_finite() {
        return Err(Error::invalid("grasp pose has non-finite components"));
    }
    let omega = Vector3::from(pose.omega);
    let tau = Vector3::from(pose.tau);
    let theta = omega.norm();
    let w = hat(&omega);
    let w2 = w * w;
    let (a, b, c) = exp_coefficients(theta);
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    Ok(RigidTransform { rotation, translation: v * tau })
}

/// Rotation vector of `r`, principal branch.
///
/// Angles past pi/2 take the axis from the symmetric part of `r`, which stays
/// well conditioned up to and including a half turn.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = vee(&(r - r.transpose())) * 0.5;
    let sin_theta = skew.norm();
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta < 1e-8 {
        // first order: R ~ I + hat(omega)
        return skew;
    }
    if cos_theta >= 0.0 {
        return skew * (theta / sin_theta);
    }
    // (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let k = (0..3).max_by(|&i, &j| sym[(i, i)].total_cmp(&sym[(j, j)])).unwrap_or(0);
    let mut axis = sym.column(k).into_owned();
    axis /= axis.norm();
    let along = axis.dot(&skew);
    if along < 0.0 || (along == 0.0 && first_nonzero_negative(&axis)) {
        axis = -axis;
    }
    axis * theta
}

fn first_nonzero_negative(v: &Vector3<f64>) -> bool {
    v.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0)
}

/// Inverse of the left Jacobian `V(omega)`.
fn v_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let w = hat(omega);
    let coeff = if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    Matrix3::identity() - w * 0.5 + w * w * coeff
}

pub fn log_map(xform: &RigidTransform) -> Result<GraspPose> {
    xform.check()?;
    let omega = rotation_log(&xform.rotation);
    let tau = v_inverse(&omega) * xform.translation;
    Ok(GraspPose { omega: omega.into(), tau: tau.into(), width: 0.0 })
}

/// Angle of the relative rotation `a^T b`.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let rel = a.transpose() * b;
    let s = vee(&(rel - rel.transpose())).norm() * 0.5;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    s.atan2(c)
}

pub fn pose_distance(a: &GraspPose, b: &GraspPose) -> Result<f64> {
    pose_distance_with(a, b, &PoseMetric::default())
}

pub fn pose_distance_with(a: &GraspPose, b: &GraspPose, metric: &PoseMetric) -> Result<f64> {
    let xa = exp_map(a)?;
    let xb = exp_map(b)?;
    Ok(transform_distance(&xa, a.width, &xb, b.width, metric))
}

/// Distance between already-exponentiated poses; used by the metrics to
/// avoid repeating the exponential inside all-pairs loops.
pub fn transform_distance(
    xa: &RigidTransform,
    wa: f64,
    xb: &RigidTransform,
    wb: f64,
    metric: &PoseMetric,
) -> f64 {
    (xa.translation - xb.translation).norm()
        + metric.rot_weight * geodesic_angle(&xa.rotation, &xb.rotation)
        + metric.width_weight * (wa - wb).abs()
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let x = Self { rotation, translation };
        x.check()?;
        Ok(x)
    }

    fn check(&self) -> Result<()> {
        let finite = self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite());
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if !finite || ortho > 1e-6 || self.rotation.determinant() <= 0.0 {
            return Err(Error::invalid("rotation is not a proper orthonormal matrix"));
        }
        Ok(())
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4x4 layout used when transforms are exported.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }
}

/// Box with arbitrary orientation; `axes` holds the box axes as columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    pub axes: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl OrientedBox {
    pub fn contains_strict(&self, p: &Vector3<f64>) -> bool {
        let local = self.axes.transpose() * (p - self.center);
        (0..3).all(|i| local[i].abs() < self.half_extents[i])
    }

    pub fn corners(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let local = Vector3::new(
                        sx * self.half_extents.x,
                        sy * self.half_extents.y,
                        sz * self.half_extents.z,
                    );
                    out.push(self.center + self.axes * local);
                }
            }
        }
        out
    }
}

/// Solid gripper parts plus the closing volume between the fingers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBoxes {
    pub fingers: [OrientedBox; 2],
    pub palm: OrientedBox,
    pub closing: OrientedBox,
}

impl GripperBoxes {
    pub fn solids(&self) -> [OrientedBox; 3] {
        [self.fingers[0], self.fingers[1], self.palm]
    }
}

/// Axis-aligned boxes `(center, half_extents)` in the gripper frame:
/// left finger, right finger, palm, closing volume.
fn local_boxes(width: f64, model: &GripperModel) -> [(Vector3<f64>, Vector3<f64>); 4] {
    let hw = 0.5 * width;
    let t = model.finger_thickness;
    let d = model.finger_depth;
    let c = model.palm_clearance;
    let finger_half = Vector3::new(0.5 * t, t, 0.5 * (d + c));
    let finger_z = -0.5 * c;
    let palm_z = -0.5 * d - c - 0.5 * t;
    [
        (Vector3::new(-(hw + 0.5 * t), 0.0, finger_z), finger_half),
        (Vector3::new(hw + 0.5 * t, 0.0, finger_z), finger_half),
        (Vector3::new(0.0, 0.0, palm_z), Vector3::new(hw + t, t, 0.5 * t)),
        (Vector3::zeros(), Vector3::new(hw, t, 0.5 * d)),
    ]
}

fn check_width(pose: &GraspPose, model: &GripperModel) -> Result<()> {
    if !(pose.width >= 0.0 && pose.width <= model.max_width) {
        return Err(Error::invalid(format!(
            "grasp width {} outside [0, {}]",
            pose.width, model.max_width
        )));
    }
    Ok(())
}

pub fn gripper_boxes(pose: &GraspPose, model: &GripperModel) -> Result<GripperBoxes> {
    check_width(pose, model)?;
    let x = exp_map(pose)?;
    let boxes = local_boxes(pose.width, model).map(|(c, h)| OrientedBox {
        center: x.apply(&c),
        axes: x.rotation,
        half_extents: h,
    });
    Ok(GripperBoxes { fingers: [boxes[0], boxes[1]], palm: boxes[2], closing: boxes[3] })
}

fn inside_local(p: &Vector3<f64>, (c, h): &(Vector3<f64>, Vector3<f64>)) -> bool {
    (p.x - c.x).abs() < h.x && (p.y - c.y).abs() < h.y && (p.z - c.z).abs() < h.z
}

/// Points expressed in the gripper frame of `pose`.
struct GripperFrame {
    inverse_rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    boxes: [(Vector3<f64>, Vector3<f64>); 4],
}

impl GripperFrame {
    fn new(pose: &GraspPose, model: &GripperModel) -> Result<Self> {
        let x = exp_map(pose)?;
        Ok(Self {
            inverse_rotation: x.rotation.transpose(),
            translation: x.translation,
            boxes: local_boxes(pose.width.clamp(0.0, model.max_width), model),
        })
    }

    fn local(&self, p: &[f64; 3]) -> Vector3<f64> {
        self.inverse_rotation * (Vector3::from(*p) - self.translation)
    }

    fn hits_solid(&self, p: &[f64; 3]) -> bool {
        let l = self.local(p);
        self.boxes[..3].iter().any(|b| inside_local(&l, b))
    }

    fn hits_closing(&self, p: &[f64; 3]) -> bool {
        inside_local(&self.local(p), &self.boxes[3])
    }
}

/// True iff some scene point lies strictly inside a finger or the palm.
///
/// Widths beyond the gripper range are clamped so the metrics can score raw
/// sampler output.
pub fn collides(pose: &GraspPose, model: &GripperModel, cloud: &SceneCloud) -> Result<bool> {
    let frame = GripperFrame::new(pose, model)?;
    Ok(cloud.points.iter().any(|p| frame.hits_solid(p)))
}

pub fn closing_volume_hits(
    pose: &GraspPose,
    model: &GripperModel,
    cloud: &SceneCloud,
    object_mask: &[usize],
) -> Result<usize> {
    if let Some(&bad) = object_mask.iter().find(|&&i| i >= cloud.points.len()) {
        return Err(Error::invalid(format!(
            "mask index {bad} out of range for {} points",
            cloud.points.len()
        )));
    }
    let frame = GripperFrame::new(pose, model)?;
    Ok(object_mask.iter().filter(|&&i| frame.hits_closing(&cloud.points[i])).count())
}

/// On-disk grasp record, SI units.
pub fn write_grasps(path: &std::path::Path, grasps: &[GraspPose]) -> Result<()> {
    let text = serde_json::to_string_pretty(grasps).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_grasps(path: &std::path::Path) -> Result<Vec<GraspPose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
