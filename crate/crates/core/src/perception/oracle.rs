use super::{BoundingBox, ClassId, Detection, Detector, RgbFrame};
use crate::geom::{CameraIntrinsics, Point3, Pose6DoF};
use crate::sim::{frame_rng, Cuboid, SceneState};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Corners closer than this to the image plane make a target undetectable.
const NEAR_PLANE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Additive Gaussian depth noise, meters.
    pub depth_sigma: f64,
    /// Gaussian jitter on each box coordinate, pixels.
    pub bbox_jitter: f64,
    pub miss_probability: f64,
    /// Chance per frame of one spurious box.
    pub false_positive_rate: f64,
    /// Camera-pose noise standing in for odometry drift, meters.
    pub pose_position_sigma: f64,
    /// Camera-pose rotation noise, radians.
    pub pose_rotation_sigma: f64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("miss_probability", self.miss_probability),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1]"));
            }
        }
        for (name, s) in [
            ("depth_sigma", self.depth_sigma),
            ("bbox_jitter", self.bbox_jitter),
            ("pose_position_sigma", self.pose_position_sigma),
            ("pose_rotation_sigma", self.pose_rotation_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(format!("{name} must be a nonnegative number"));
            }
        }
        Ok(())
    }
}

/// Tight image box of a cuboid, or `None` when any corner is behind the
/// near plane or the box misses the image.
fn project_cuboid(c: &Cuboid, camera: &Pose6DoF, k: &CameraIntrinsics) -> Option<[f64; 4]> {
    let rt = camera.rotation.transpose();
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in c.corners() {
        let pc = Point3::from(rt * (p - camera.position));
        if pc.z <= NEAR_PLANE {
            return None;
        }
        let (u, v, _) = k.project(&pc);
        b[0] = b[0].min(u);
        b[1] = b[1].min(v);
        b[2] = b[2].max(u);
        b[3] = b[3].max(v);
    }
    (b[0] < k.width as f64 && b[1] < k.height as f64 && b[2] > 0.0 && b[3] > 0.0).then_some(b)
}

/// Geometric stand-in for a trained detector: projects the box and the
/// docking plate into the image and reports their tight boxes, perturbed per
/// `noise`. The plate is only reported while its face points at the camera.
pub fn oracle_detect<R: Rng>(
    scene: &SceneState,
    camera: &Pose6DoF,
    k: &CameraIntrinsics,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Detection {
    let facing = {
        let m = &scene.module_pose;
        m.z_axis().dot(&(camera.position - m.position)) > 0.0
    };
    let targets = [
        (ClassId::Box, scene.box_cuboid(), true),
        (ClassId::DockingModule, scene.module_cuboid(), facing),
    ];
    let jitter = (noise.bbox_jitter > 0.0)
        .then(|| Normal::new(0.0, noise.bbox_jitter).expect("finite jitter"));
    let mut boxes = Vec::new();
    for (class_id, cuboid, visible) in targets {
        let missed = rng.random::<f64>() < noise.miss_probability;
        let confidence = 0.85 + 0.1 * rng.random::<f64>();
        let mut coords = match project_cuboid(&cuboid, camera, k) {
            Some(c) if visible && !missed => c,
            _ => continue,
        };
        if let Some(n) = &jitter {
            for c in coords.iter_mut() {
                *c += n.sample(rng);
            }
        }
        if let Some(b) = BoundingBox::new(coords, class_id, confidence)
            .ok()
            .and_then(|b| b.clipped(k.width, k.height))
        {
            boxes.push(b);
        }
    }
    if rng.random::<f64>() < noise.false_positive_rate {
        let (w, h) = (k.width as f64, k.height as f64);
        let size = rng.random_range(10.0..60.0);
        let u = rng.random_range(0.0..w);
        let v = rng.random_range(0.0..h);
        let class_id = if rng.random::<bool>() { ClassId::Box } else { ClassId::DockingModule };
        let confidence = rng.random_range(0.3..0.8);
        if let Some(b) = BoundingBox::new([u, v, u + size, v + size * 0.75], class_id, confidence)
            .ok()
            .and_then(|b| b.clipped(k.width, k.height))
        {
            boxes.push(b);
        }
    }
    Detection {
        boxes,
        timestamp: camera.timestamp,
    }
}

/// [`oracle_detect`] behind the [`Detector`] interface, reseeded per frame
/// from the run seed and the frame timestamp.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Detector for OracleDetector {
    fn detect(&mut self, rgb: &RgbFrame) -> Detection {
        match &rgb.view {
            Some(view) => {
                let mut rng = frame_rng(self.seed, rgb.timestamp, 2);
                let mut det = oracle_detect(&view.scene, &view.camera, &rgb.intrinsics, &self.noise, &mut rng);
                det.timestamp = rgb.timestamp;
                det
            }
            None => Detection {
                boxes: Vec::new(),
                timestamp: rgb.timestamp,
            },
        }
    }
}
