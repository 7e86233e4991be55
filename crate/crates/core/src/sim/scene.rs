use crate::geom::{CameraIntrinsics, DepthFrame, FrameLabel, Mat3, Point3, Pose6DoF, Vec3};
use crate::numeric::rot_z;
use crate::snake::{SnakeModel, SnakeState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Closest range the simulated depth sensor reports, meters.
pub const MIN_RANGE: f64 = 0.1;

/// Box extents: `length` along the box x axis (the module sits on the +x
/// face), `width` along y, `height` along z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for BoxDims {
    fn default() -> Self {
        Self {
            length: 0.4,
            width: 0.3,
            height: 0.25,
        }
    }
}

/// Docking plate extents: in-face `width` and `height`, `thickness` off the face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDims {
    pub width: f64,
    pub height: f64,
    pub thickness: f64,
}

impl Default for ModuleDims {
    fn default() -> Self {
        Self {
            width: 0.12,
            height: 0.08,
            thickness: 0.02,
        }
    }
}

/// An oriented cuboid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    pub center: Point3,
    pub rotation: Mat3,
    pub half: Vec3,
}

impl Cuboid {
    pub fn corners(&self) -> [Point3; 8] {
        let mut out = [Point3::origin(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            *c = self.center + self.rotation * self.half.component_mul(&s);
        }
        out
    }

    /// Entry parameter of the ray `o + t·d`, if it enters the cuboid at `t > 0`.
    pub fn intersect(&self, origin: &Point3, dir: &Vec3) -> Option<f64> {
        let o = self.rotation.transpose() * (origin - self.center);
        let d = self.rotation.transpose() * dir;
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            if d[k] == 0.0 {
                if o[k].abs() > self.half[k] {
                    return None;
                }
                continue;
            }
            let a = (-self.half[k] - o[k]) / d[k];
            let b = (self.half[k] - o[k]) / d[k];
            t_near = t_near.max(a.min(b));
            t_far = t_far.min(a.max(b));
        }
        (t_near <= t_far && t_near > 0.0).then_some(t_near)
    }
}

/// Box pose relative to the robot's heading frame at the head, fixed at latch time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatchGrip {
    pub offset: Vec3,
    pub rotation: Mat3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub box_pose: Pose6DoF,
    pub module_pose: Pose6DoF,
    pub box_dims: BoxDims,
    pub module_dims: ModuleDims,
    pub robot: SnakeState,
    pub latched: Option<LatchGrip>,
    pub goal: Point3,
    pub ground: bool,
}

impl SceneState {
    pub fn new(
        box_pose: Pose6DoF,
        box_dims: BoxDims,
        module_dims: ModuleDims,
        robot: SnakeState,
        goal: Point3,
        ground: bool,
    ) -> Self {
        let module_pose = module_pose_for(&box_pose, &box_dims, &module_dims);
        Self {
            box_pose,
            module_pose,
            box_dims,
            module_dims,
            robot,
            latched: None,
            goal,
            ground,
        }
    }

    pub fn is_latched(&self) -> bool {
        self.latched.is_some()
    }

    pub fn set_box_pose(&mut self, pose: Pose6DoF) {
        self.module_pose = module_pose_for(&pose, &self.box_dims, &self.module_dims);
        self.box_pose = pose;
    }

    pub fn box_cuboid(&self) -> Cuboid {
        Cuboid {
            center: self.box_pose.position,
            rotation: self.box_pose.rotation,
            half: Vec3::new(
                self.box_dims.length / 2.0,
                self.box_dims.width / 2.0,
                self.box_dims.height / 2.0,
            ),
        }
    }

    pub fn module_cuboid(&self) -> Cuboid {
        let r = self.box_pose.rotation;
        let t = self.module_dims.thickness;
        Cuboid {
            center: self.box_pose.position + r.column(0) * (self.box_dims.length / 2.0 + t / 2.0),
            rotation: r,
            half: Vec3::new(t / 2.0, self.module_dims.width / 2.0, self.module_dims.height / 2.0),
        }
    }

    /// Attaches the box to the head in the heading frame.
    pub fn latch(&mut self) {
        let frame = rot_z(self.robot.heading);
        let head = self.robot.head_position();
        self.latched = Some(LatchGrip {
            offset: frame.transpose() * (self.box_pose.position - head),
            rotation: frame.transpose() * self.box_pose.rotation,
        });
    }

    pub fn unlatch(&mut self) {
        self.latched = None;
    }

    /// Replaces the robot state and carries a latched box along.
    pub fn set_robot(&mut self, robot: SnakeState) {
        self.robot = robot;
        if let Some(grip) = self.latched {
            let frame = rot_z(self.robot.heading);
            // The box slides on the ground, so its height never changes.
            let mut position = self.robot.head_position() + frame * grip.offset;
            position.z = self.box_pose.position.z;
            let pose = Pose6DoF {
                rotation: frame * grip.rotation,
                position,
                frame: FrameLabel::World,
                timestamp: self.robot.time,
            };
            self.set_box_pose(pose);
        }
    }

    /// Distance from the box center to the goal.
    pub fn box_error(&self) -> f64 {
        (self.box_pose.position - self.goal).norm()
    }
}

/// Docking-module face pose: centered on the outer plate face, `z` the
/// outward normal (box `x`), `x` along box `y`, `y` along box `z`.
pub fn module_pose_for(box_pose: &Pose6DoF, dims: &BoxDims, module: &ModuleDims) -> Pose6DoF {
    let r = box_pose.rotation;
    let (xb, yb, zb) = (r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned());
    Pose6DoF {
        rotation: Mat3::from_columns(&[yb, zb, xb]),
        position: box_pose.position + xb * (dims.length / 2.0 + module.thickness),
        frame: FrameLabel::World,
        timestamp: box_pose.timestamp,
    }
}

/// Box pose that puts the docking-module face at `face` with outward normal
/// yawed by `normal_yaw`, resting on the ground.
pub fn box_pose_for_face(face: &Point3, normal_yaw: f64, dims: &BoxDims, module: &ModuleDims) -> Pose6DoF {
    let r = rot_z(normal_yaw);
    let center = face - r.column(0) * (dims.length / 2.0 + module.thickness);
    Pose6DoF {
        rotation: r,
        position: Point3::new(center.x, center.y, dims.height / 2.0),
        frame: FrameLabel::World,
        timestamp: 0.0,
    }
}

/// World pose of the camera rigidly mounted on the head link.
pub fn head_camera_pose(model: &SnakeModel, robot: &SnakeState) -> Pose6DoF {
    let head_rot = model.head_rotation(robot);
    Pose6DoF {
        rotation: head_rot * model.mount.rotation,
        position: robot.head_position() + head_rot * model.mount.translation,
        frame: FrameLabel::World,
        timestamp: robot.time,
    }
}

/// Per-frame generator keyed on the run seed, the frame timestamp and a stream tag.
pub(crate) fn frame_rng(seed: u64, timestamp: f64, stream: u64) -> ChaCha8Rng {
    let mut s = seed ^ timestamp.to_bits().rotate_left(17) ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    s = s.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    ChaCha8Rng::seed_from_u64(s)
}

/// Ray-casts z-depth for every pixel against the box, the docking plate and
/// (optionally) the ground plane `z = 0`.
pub fn render_depth(
    scene: &SceneState,
    camera: &Pose6DoF,
    k: &CameraIntrinsics,
    noise_sigma: f64,
    seed: u64,
) -> DepthFrame {
    let cuboids = [scene.box_cuboid(), scene.module_cuboid()];
    let origin = camera.position;
    let mut data = vec![0.0; k.width * k.height];
    for v in 0..k.height {
        for u in 0..k.width {
            let d_cam = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let dir = camera.rotation * d_cam;
            let mut best = f64::INFINITY;
            for c in &cuboids {
                if let Some(t) = c.intersect(&origin, &dir) {
                    best = best.min(t);
                }
            }
            if scene.ground && dir.z < 0.0 {
                let t = -origin.z / dir.z;
                if t > 0.0 {
                    best = best.min(t);
                }
            }
            if best.is_finite() && best >= MIN_RANGE {
                data[v * k.width + u] = best;
            }
        }
    }
    if noise_sigma > 0.0 {
        let mut rng = frame_rng(seed, camera.timestamp, 1);
        let normal = Normal::new(0.0, noise_sigma).expect("finite sigma");
        for d in data.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + normal.sample(&mut rng)).max(MIN_RANGE);
        }
    }
    DepthFrame::from_depths(data, camera.timestamp, *k).expect("buffer sized from intrinsics")
}
