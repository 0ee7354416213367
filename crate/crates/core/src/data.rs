//! Depth-map lifting of planar grasps, grasp filtering, scene files and the
//! synthetic toy-scene generator.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scene::SceneCloud;
use crate::se3::{closing_volume_hits, collides, GraspPose, GripperModel};

/// Pinhole camera with a square-pixel focal length derived from the
/// vertical field of view and the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid(format!("field of view {fov_deg} outside (0, 180)")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        Ok(Self { fov_deg, width, height })
    }

    pub fn focal(&self) -> f64 {
        self.height as f64 / (2.0 * (0.5 * self.fov_deg.to_radians()).tan())
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Camera-frame point of pixel `(u, v)` at depth `d`.
    pub fn back_project(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        [(u - cx) / f * d, (v - cy) / f * d, d]
    }
}

/// Row-major depth image in metres. Non-finite or non-positive entries are
/// invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DepthHeader {
    width: usize,
    height: usize,
    #[serde(default = "default_encoding")]
    encoding: String,
}

fn default_encoding() -> String {
    "f32le".into()
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::invalid(format!(
                "depth map of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Rows of equal length, `rows[y][x]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::invalid("depth rows differ in length"));
        }
        Self::new(w, h, rows.concat())
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        let d = self.at(x, y);
        d.is_finite() && d > 0.0
    }

    /// Header line `{"width":W,"height":H,"encoding":"f32le"}` followed by
    /// row-major little-endian 32-bit floats.
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = DepthHeader { width: self.width, height: self.height, encoding: default_encoding() };
        let mut out = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = std::io::BufReader::new(file);
        let mut line = String::new();
        reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: DepthHeader = serde_json::from_str(line.trim_end()).map_err(|e| Error::json(path, e))?;
        if header.encoding != "f32le" {
            return Err(Error::Schema(format!("unsupported depth encoding {}", header.encoding)));
        }
        let mut raw = Vec::new();
        reader.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
        if raw.len() != 4 * header.width * header.height {
            return Err(Error::Schema(format!(
                "{}: expected {} depth bytes, found {}",
                path.display(),
                4 * header.width * header.height,
                raw.len()
            )));
        }
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        Self::new(header.width, header.height, data)
    }
}

/// Back-projects every valid pixel; all points get label 0.
pub fn depth_to_cloud(depth: &DepthMap, cam: &CameraModel) -> Result<SceneCloud> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(Error::invalid("depth map and camera disagree on image size"));
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if depth.is_valid(u, v) {
                points.push(cam.back_project(u as f64, v as f64, depth.at(u, v)));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(SceneCloud::single_object(points, "scene"))
}

/// Bilinear depth at subpixel `(x, y)`, `x` along columns and `y` along rows.
pub fn bilinear_depth(depth: &DepthMap, x: f64, y: f64) -> Result<f64> {
    let max_x = (depth.width - 1) as f64;
    let max_y = (depth.height - 1) as f64;
    if !(x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
        return Err(Error::invalid(format!("({x}, {y}) outside the image interior")));
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(depth.width - 1);
    let y1 = (y0 + 1).min(depth.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    for (px, py) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        if !depth.is_valid(px, py) {
            return Err(Error::NeighborInvalid { x: px as f64, y: py as f64 });
        }
    }
    let top = (1.0 - fx) * depth.at(x0, y0) + fx * depth.at(x1, y0);
    let bottom = (1.0 - fx) * depth.at(x0, y1) + fx * depth.at(x1, y1);
    Ok((1.0 - fy) * top + fy * bottom)
}

/// Oriented grasp rectangle in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect2DGrasp {
    pub center: [f64; 2],
    /// Closing direction in the image plane, radians from the +u axis.
    pub angle: f64,
    pub width_px: f64,
    pub height_px: f64,
}

/// Wraps a closing-axis angle into `(-pi/2, pi/2]`; the two fingers are
/// interchangeable so `a` and `a + pi` describe one grasp.
pub fn wrap_half_turn(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(PI);
    if r > 0.5 * PI {
        r -= PI;
    }
    r
}

/// Grasp approaching along camera +z with its closing axis at `yaw` in the
/// image plane.
pub fn top_down_grasp(center: [f64; 3], yaw: f64, width: f64) -> GraspPose {
    GraspPose::new([0.0, 0.0, wrap_half_turn(yaw)], [0.0; 3], width).with_origin(center)
}

impl GraspPose {
    /// Same rotation and width, with the translation part chosen so the
    /// transform maps the gripper origin to `p`.
    pub fn with_origin(self, p: [f64; 3]) -> GraspPose {
        let r = nalgebra::Vector3::from(self.omega);
        let x = crate::se3::RigidTransform {
            rotation: nalgebra::Rotation3::new(r).into_inner(),
            translation: nalgebra::Vector3::from(p),
        };
        GraspPose::from_transform(&x, self.width).expect("rotation from axis-angle is orthonormal")
    }
}

pub fn lift_grasp(rect: &Rect2DGrasp, depth: &DepthMap, cam: &CameraModel) -> Result<GraspPose> {
    if !(rect.width_px > 0.0) {
        return Err(Error::invalid("rectangle width must be positive"));
    }
    let [u, v] = rect.center;
    let d = bilinear_depth(depth, u, v)?;
    let center = cam.back_project(u, v, d);
    Ok(top_down_grasp(center, rect.angle, rect.width_px * d / cam.focal()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub label: u32,
    pub grasps: Vec<GraspPose>,
    /// Indices into the scene cloud.
    pub mask: Vec<usize>,
}

impl SceneObject {
    pub fn prompt(&self) -> String {
        crate::net::prompt_for(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspScene {
    pub cloud: SceneCloud,
    /// Sorted by name.
    pub objects: Vec<SceneObject>,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    points: Vec<[f64; 3]>,
    labels: Vec<u32>,
    names: BTreeMap<u32, String>,
    grasps: BTreeMap<String, Vec<GraspPose>>,
    masks: BTreeMap<String, Vec<usize>>,
}

impl GraspScene {
    pub fn new(cloud: SceneCloud, mut objects: Vec<SceneObject>) -> Result<Self> {
        cloud.validate()?;
        objects.sort_by(|a, b| a.name.cmp(&b.name));
        if objects.windows(2).any(|w| w[0].name == w[1].name) {
            return Err(Error::invalid("duplicate object name in scene"));
        }
        for o in &objects {
            if o.mask.iter().any(|&i| i >= cloud.len()) {
                return Err(Error::invalid(format!("mask of {} indexes past the cloud", o.name)));
            }
        }
        Ok(Self { cloud, objects })
    }

    pub fn object(&self, name: &str) -> Option<&SceneObject> {
        let key = name.to_lowercase();
        self.objects.iter().find(|o| o.name == key)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.objects.iter().map(SceneObject::prompt).collect()
    }

    pub fn grasp_count(&self) -> usize {
        self.objects.iter().map(|o| o.grasps.len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SceneFile {
            points: self.cloud.points.clone(),
            labels: self.cloud.labels.clone(),
            names: self.cloud.names.clone(),
            grasps: self.objects.iter().map(|o| (o.name.clone(), o.grasps.clone())).collect(),
            masks: self.objects.iter().map(|o| (o.name.clone(), o.mask.clone())).collect(),
        };
        serde_json::to_string(&file).map_err(|e| Error::json("<scene>", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::json("<scene>", e))?;
        Self::from_file(file)
    }

    fn from_file(file: SceneFile) -> Result<Self> {
        let label_of: BTreeMap<&String, u32> = file.names.iter().map(|(l, n)| (n, *l)).collect();
        let mut objects = Vec::new();
        for (name, grasps) in &file.grasps {
            let mask = file
                .masks
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Schema(format!("object {name} has grasps but no mask")))?;
            let label = *label_of.get(name).ok_or_else(|| Error::Schema(format!("object {name} has no label")))?;
            objects.push(SceneObject { name: name.clone(), label, grasps: grasps.clone(), mask });
        }
        let cloud = SceneCloud { points: file.points, labels: file.labels, names: file.names };
        Self::new(cloud, objects).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SceneFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_file(file).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub width: usize,
    pub collision: usize,
    pub closing_miss: usize,
}

impl RejectionReport {
    pub fn total(&self) -> usize {
        self.width + self.collision + self.closing_miss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Width,
    Collision,
    ClosingMiss,
}

/// First failing check for one grasp of `object`, in the order width,
/// collision, closing volume.
pub fn check_grasp(
    grasp: &GraspPose,
    object: &SceneObject,
    cloud: &SceneCloud,
    model: &GripperModel,
) -> Result<Option<Rejection>> {
    if !(grasp.width <= model.max_width) {
        return Ok(Some(Rejection::Width));
    }
    if collides(grasp, model, cloud)? {
        return Ok(Some(Rejection::Collision));
    }
    if closing_volume_hits(grasp, model, cloud, &object.mask)? == 0 {
        return Ok(Some(Rejection::ClosingMiss));
    }
    Ok(None)
}

pub fn filter_grasps(scene: &GraspScene, model: &GripperModel) -> Result<(GraspScene, RejectionReport)> {
    let mut report = RejectionReport::default();
    let mut objects = Vec::with_capacity(scene.objects.len());
    for obj in &scene.objects {
        let mut kept = Vec::with_capacity(obj.grasps.len());
        for g in &obj.grasps {
            match check_grasp(g, obj, &scene.cloud, model)? {
                None => kept.push(*g),
                Some(Rejection::Width) => report.width += 1,
                Some(Rejection::Collision) => report.collision += 1,
                Some(Rejection::ClosingMiss) => report.closing_miss += 1,
            }
        }
        objects.push(SceneObject { grasps: kept, ..obj.clone() });
    }
    Ok((GraspScene { cloud: scene.cloud.clone(), objects }, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { radius: f64 },
    /// Upright box, `size = [sx, sy, height]`, rotated by `yaw` about the
    /// viewing axis.
    Box { size: [f64; 3], #[serde(default)] yaw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: Primitive,
    /// Lateral camera-frame position `[x, y]` of the footprint center.
    pub position: [f64; 2],
}

/// Toy scenes: primitives resting on a plane seen top-down by the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Camera-to-plane distance.
    pub ground_depth: f64,
    pub ground_extent: f64,
    pub ground_points: usize,
    pub points_per_object: usize,
    pub grasps_per_object: usize,
    /// Uniform lateral jitter applied per scene to each object.
    pub position_jitter: f64,
    /// Randomly permute object positions per scene.
    pub shuffle_positions: bool,
    pub gripper: GripperModel,
    pub objects: Vec<ObjectSpec>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            ground_depth: 0.8,
            ground_extent: 0.3,
            ground_points: 64,
            points_per_object: 64,
            grasps_per_object: 16,
            position_jitter: 0.0,
            shuffle_positions: false,
            gripper: GripperModel::default(),
            objects: Vec::new(),
        }
    }
}

impl DatasetSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// The two-object ball/box layout used by the examples and tests.
    pub fn two_object_toy() -> Self {
        Self {
            position_jitter: 0.02,
            shuffle_positions: true,
            objects: vec![
                ObjectSpec { name: "ball".into(), shape: Primitive::Sphere { radius: 0.03 }, position: [-0.1, 0.0] },
                ObjectSpec {
                    name: "box".into(),
                    shape: Primitive::Box { size: [0.05, 0.1, 0.06], yaw: 0.0 },
                    position: [0.1, 0.0],
                },
            ],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        self.gripper.validate()?;
        if self.objects.is_empty() {
            return Err(Error::invalid("dataset spec lists no objects"));
        }
        if !(self.ground_depth > 0.0) {
            return Err(Error::invalid("ground_depth must be positive"));
        }
        let mut names: Vec<String> = self.objects.iter().map(|o| o.name.to_lowercase()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("object names must be distinct"));
        }
        let reach = 0.5 * self.gripper.finger_depth;
        for o in &self.objects {
            let name = o.name.clone();
            match o.shape {
                Primitive::Sphere { radius } => {
                    if !(radius > 0.0) {
                        return Err(Error::invalid(format!("{name}: radius must be positive")));
                    }
                    if 2.0 * radius > self.gripper.max_width {
                        return Err(Error::Ungraspable { name });
                    }
                    if radius <= reach || radius > reach + self.gripper.palm_clearance {
                        return Err(Error::invalid(format!(
                            "{name}: sphere radius must lie in ({reach}, {}] for the gripper to clear it",
                            reach + self.gripper.palm_clearance
                        )));
                    }
                }
                Primitive::Box { size, .. } => {
                    if size.iter().any(|s| !(*s > 0.0)) {
                        return Err(Error::invalid(format!("{name}: box size must be positive")));
                    }
                    if size[0].min(size[1]) > self.gripper.max_width {
                        return Err(Error::Ungraspable { name });
                    }
                    if size[2] <= self.gripper.finger_depth {
                        return Err(Error::invalid(format!(
                            "{name}: box height must exceed the finger depth {}",
                            self.gripper.finger_depth
                        )));
                    }
                }
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                let gap = dist2(a.position, b.position)
                    - footprint_radius(&a.shape, &self.gripper)
                    - footprint_radius(&b.shape, &self.gripper)
                    - 2.0 * self.position_jitter * std::f64::consts::SQRT_2;
                if gap <= 0.0 {
                    return Err(Error::invalid(format!("{} and {} overlap", a.name, b.name)));
                }
            }
        }
        Ok(())
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Radius of a disc containing the object and any gripper grasping it.
fn footprint_radius(shape: &Primitive, g: &GripperModel) -> f64 {
    let t = g.finger_thickness;
    match *shape {
        Primitive::Sphere { radius } => (radius + t).hypot(t),
        Primitive::Box { size, .. } => {
            let hx = 0.5 * size[0] + t;
            let hy = 0.5 * size[1] + t;
            hx.hypot(hy)
        }
    }
}

fn rot2(yaw: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn surface_points(shape: &Primitive, pos: [f64; 2], ground: f64, n: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    match *shape {
        Primitive::Sphere { radius } => {
            let cz = ground - radius;
            (0..n)
                .map(|_| {
                    let u: [f64; 3] = UnitSphere.sample(rng);
                    [pos[0] + radius * u[0], pos[1] + radius * u[1], cz + radius * u[2]]
                })
                .collect()
        }
        Primitive::Box { size, yaw } => {
            let [sx, sy, sz] = size;
            // Top face and four sides, area weighted; the bottom rests on the
            // plane. Side points sit a hair inside their face so rounding in
            // the gripper frame cannot push them into a finger.
            let inset = 0.5 * (1.0 - 1e-7);
            let faces = [sx * sy, sx * sz, sx * sz, sy * sz, sy * sz];
            let total: f64 = faces.iter().sum();
            (0..n)
                .map(|_| {
                    let mut pick = rng.random::<f64>() * total;
                    let mut face = 0;
                    while face < 4 && pick >= faces[face] {
                        pick -= faces[face];
                        face += 1;
                    }
                    let a = rng.random::<f64>() - 0.5;
                    let b = rng.random::<f64>() - 0.5;
                    let (lx, ly, lz) = match face {
                        0 => (a * sx, b * sy, -0.5 * sz),
                        1 => (a * sx, -inset * sy, b * sz),
                        2 => (a * sx, inset * sy, b * sz),
                        3 => (-inset * sx, a * sy, b * sz),
                        _ => (inset * sx, a * sy, b * sz),
                    };
                    let [x, y] = rot2(yaw, [lx, ly]);
                    [pos[0] + x, pos[1] + y, ground - 0.5 * sz + lz]
                })
                .collect()
        }
    }
}

/// Antipodal top-down grasps. Spheres: diametral pairs through the center
/// at a random closing angle. Boxes: opposing side faces, centered a quarter
/// finger depth below the top and slid along the face to a sampled top-face
/// point so the closing volume always holds part of the object.
fn analytic_grasps(
    shape: &Primitive,
    pos: [f64; 2],
    ground: f64,
    n: usize,
    g: &GripperModel,
    surface: &[[f64; 3]],
    rng: &mut impl Rng,
) -> Vec<GraspPose> {
    use std::f64::consts::PI;
    match *shape {
        Primitive::Sphere { radius } => (0..n)
            .map(|_| {
                let yaw = rng.random_range(-0.5 * PI..0.5 * PI);
                top_down_grasp([pos[0], pos[1], ground - radius], yaw, 2.0 * radius)
            })
            .collect(),
        Primitive::Box { size, yaw } => {
            let [sx, sy, sz] = size;
            let top = ground - sz;
            let z = top + 0.25 * g.finger_depth;
            let t = g.finger_thickness;
            let top_local: Vec<[f64; 2]> = surface
                .iter()
                .filter(|p| (p[2] - top).abs() < 1e-12)
                .map(|p| rot2(-yaw, [p[0] - pos[0], p[1] - pos[1]]))
                .collect();
            // (closing angle, width, half length of the face, slide coordinate of a top point)
            let mut axes: Vec<(f64, f64, f64, fn([f64; 2]) -> f64)> = Vec::new();
            if sx <= g.max_width {
                axes.push((0.0, sx, 0.5 * sy, |l| l[1]));
            }
            if sy <= g.max_width {
                axes.push((0.5 * PI, sy, 0.5 * sx, |l| -l[0]));
            }
            (0..n)
                .map(|i| {
                    let (angle, width, half_face, coord) = axes[i % axes.len()];
                    let limit = (half_face - t).max(0.0);
                    let s = if top_local.is_empty() {
                        rng.random_range(-limit..=limit)
                    } else {
                        coord(top_local[rng.random_range(0..top_local.len())]).clamp(-limit, limit)
                    };
                    let [ox, oy] = rot2(yaw + angle, [0.0, s]);
                    top_down_grasp([pos[0] + ox, pos[1] + oy, z], yaw + angle, width)
                })
                .collect()
        }
    }
}

/// Generates one toy scene. Labels: 0 is the supporting plane, objects
/// follow in spec order.
pub fn gen_toy_scene(spec: &DatasetSpec, seed: u64) -> Result<GraspScene> {
    spec.validate()?;
    let mut rng = stream(seed, &[3]);
    let mut positions: Vec<[f64; 2]> = spec.objects.iter().map(|o| o.position).collect();
    if spec.shuffle_positions {
        use rand::seq::SliceRandom;
        positions.shuffle(&mut rng);
    }
    for p in &mut positions {
        if spec.position_jitter > 0.0 {
            p[0] += rng.random_range(-spec.position_jitter..=spec.position_jitter);
            p[1] += rng.random_range(-spec.position_jitter..=spec.position_jitter);
        }
    }
    // Re-check separation with the realised layout.
    let placed = DatasetSpec {
        position_jitter: 0.0,
        shuffle_positions: false,
        objects: spec
            .objects
            .iter()
            .zip(&positions)
            .map(|(o, p)| ObjectSpec { position: *p, ..o.clone() })
            .collect(),
        ..spec.clone()
    };
    placed.validate()?;

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut names = BTreeMap::from([(0u32, "background".to_string())]);
    let e = spec.ground_extent;
    for _ in 0..spec.ground_points {
        points.push([rng.random_range(-e..=e), rng.random_range(-e..=e), spec.ground_depth]);
        labels.push(0);
    }
    let mut objects = Vec::new();
    for (k, (o, p)) in placed.objects.iter().zip(&positions).enumerate() {
        let label = k as u32 + 1;
        let name = o.name.to_lowercase();
        names.insert(label, name.clone());
        let start = points.len();
        points.extend(surface_points(&o.shape, *p, spec.ground_depth, spec.points_per_object, &mut rng));
        labels.extend(std::iter::repeat_n(label, spec.points_per_object));
        let grasps = analytic_grasps(
            &o.shape,
            *p,
            spec.ground_depth,
            spec.grasps_per_object,
            &spec.gripper,
            &points[start..],
            &mut rng,
        );
        objects.push(SceneObject { name, label, grasps, mask: (start..points.len()).collect() });
    }
    let scene = GraspScene::new(SceneCloud::new(points, labels, names)?, objects)?;
    let (filtered, report) = filter_grasps(&scene, &spec.gripper)?;
    if report.total() != 0 {
        return Err(Error::Degenerate(format!("toy generator produced {} invalid grasps", report.total())));
    }
    Ok(filtered)
}
