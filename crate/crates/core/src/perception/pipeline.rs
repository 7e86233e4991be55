use super::{BoundingBox, ClassId, Detection, Detector, PerceptionConfig, RgbFrame};
use crate::geom::{
    align_orientation, compose_pose, compute_normals, estimate_frame, unproject_cloud, DepthFrame,
    DepthRoi, FrameLabel, GeomError, Point3, Pose6DoF,
};
use std::fmt;

/// Why the pipeline produced no pose for a frame pair.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseRejection {
    NoDetection,
    Unsynchronized { rgb: f64, depth: f64 },
    Geometry(GeomError),
}

impl PoseRejection {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NoDetection => "no_detection",
            Self::Unsynchronized { .. } => "unsynchronized",
            Self::Geometry(GeomError::EmptyRoi) => "empty_roi",
            Self::Geometry(GeomError::DegenerateCloud(_)) => "degenerate_cloud",
            Self::Geometry(GeomError::RankDeficient(_)) => "rank_deficient",
            Self::Geometry(_) => "geometry",
        }
    }
}

impl fmt::Display for PoseRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Geometry(e) => write!(f, "{}: {e}", self.code()),
            Self::Unsynchronized { rgb, depth } => {
                write!(f, "{}: rgb {rgb} vs depth {depth}", self.code())
            }
            Self::NoDetection => f.write_str(self.code()),
        }
    }
}

/// Highest-confidence docking-module box at or above `min_confidence`; ties
/// go to the larger box.
pub fn select_candidate(det: &Detection, min_confidence: f64) -> Option<BoundingBox> {
    det.boxes
        .iter()
        .filter(|b| b.class_id == ClassId::DockingModule && b.confidence >= min_confidence)
        .copied()
        .reduce(|best, b| {
            let better = b.confidence > best.confidence
                || (b.confidence == best.confidence && b.area() > best.area());
            if better { b } else { best }
        })
}

/// Depth pixels inside `bbox` after shrinking each side by `roi_shrink`.
pub fn extract_roi_depth(
    depth: &DepthFrame,
    bbox: &BoundingBox,
    roi_shrink: f64,
) -> Result<DepthRoi, GeomError> {
    if !bbox.within(depth.width(), depth.height()) {
        return Err(GeomError::OutOfBounds {
            u: bbox.u_max,
            v: bbox.v_max,
            width: depth.width(),
            height: depth.height(),
        });
    }
    let roi = depth.crop(bbox.pixel_rect(roi_shrink));
    if roi.valid_count() == 0 {
        return Err(GeomError::EmptyRoi);
    }
    Ok(roi)
}

/// Detection, ROI depth, point and normal clouds, plane frame, sign
/// alignment against `previous` (world frame) and the world transform.
pub fn estimate_module_pose(
    rgb: &RgbFrame,
    depth: &DepthFrame,
    detector: &mut dyn Detector,
    previous: Option<&Pose6DoF>,
    camera_in_world: &Pose6DoF,
    cfg: &PerceptionConfig,
) -> Result<Pose6DoF, PoseRejection> {
    if (rgb.timestamp - depth.timestamp).abs() >= 1.0 / cfg.depth_rate {
        return Err(PoseRejection::Unsynchronized {
            rgb: rgb.timestamp,
            depth: depth.timestamp,
        });
    }
    let det = detector.detect(rgb);
    let bbox = select_candidate(&det, cfg.min_confidence).ok_or(PoseRejection::NoDetection)?;
    let geometry = || -> Result<Pose6DoF, GeomError> {
        let roi = extract_roi_depth(depth, &bbox, cfg.roi_shrink)?;
        let cloud = unproject_cloud(&roi, &depth.intrinsics)?;
        let normals = compute_normals(&cloud)?;
        let candidate = estimate_frame(&cloud, &normals, cfg.orientation)?;
        let prev_in_camera = previous.map(|p| Pose6DoF {
            rotation: camera_in_world.rotation.transpose() * p.rotation,
            position: Point3::from(
                camera_in_world.rotation.transpose() * (p.position - camera_in_world.position),
            ),
            frame: FrameLabel::Camera,
            timestamp: p.timestamp,
        });
        let aligned = align_orientation(&candidate, prev_in_camera.as_ref());
        let mut world = compose_pose(camera_in_world, &aligned)?;
        world.timestamp = rgb.timestamp;
        Ok(world)
    };
    geometry().map_err(PoseRejection::Geometry)
}
