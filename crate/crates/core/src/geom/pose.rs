use super::{GeomError, Mat3, Point3, Vec3};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Frame a pose is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameLabel {
    Camera,
    World,
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameLabel::Camera => f.write_str("camera"),
            FrameLabel::World => f.write_str("world"),
        }
    }
}

/// Rigid pose: `rotation` columns are the body axes `[x y z]` expressed in `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6DoF {
    pub rotation: Mat3,
    pub position: Point3,
    pub frame: FrameLabel,
    pub timestamp: f64,
}

impl Pose6DoF {
    pub fn new(
        rotation: Mat3,
        position: Point3,
        frame: FrameLabel,
        timestamp: f64,
    ) -> Result<Self, GeomError> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            position,
            frame,
            timestamp,
        })
    }

    pub fn identity(frame: FrameLabel) -> Self {
        Self {
            rotation: Mat3::identity(),
            position: Point3::origin(),
            frame,
            timestamp: 0.0,
        }
    }

    pub fn x_axis(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Maps a point from the body frame into `frame`.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.position.coords
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }

    pub fn is_proper_rotation(&self) -> bool {
        check_rotation(&self.rotation).is_ok()
    }
}

pub(crate) fn check_rotation(r: &Mat3) -> Result<(), GeomError> {
    let orthonormality = (r.transpose() * r - Mat3::identity()).amax();
    let det = r.determinant();
    if !(orthonormality <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE) {
        return Err(GeomError::InvalidRotation {
            orthonormality,
            det,
        });
    }
    Ok(())
}

/// World pose of a module seen from a camera whose world pose is known.
pub fn compose_pose(
    camera_in_world: &Pose6DoF,
    module_in_camera: &Pose6DoF,
) -> Result<Pose6DoF, GeomError> {
    if camera_in_world.frame != FrameLabel::World {
        return Err(GeomError::FrameMismatch {
            expected: FrameLabel::World,
            actual: camera_in_world.frame,
        });
    }
    if module_in_camera.frame != FrameLabel::Camera {
        return Err(GeomError::FrameMismatch {
            expected: FrameLabel::Camera,
            actual: module_in_camera.frame,
        });
    }
    Ok(Pose6DoF {
        rotation: camera_in_world.rotation * module_in_camera.rotation,
        position: camera_in_world.rotation * module_in_camera.position
            + camera_in_world.position.coords,
        frame: FrameLabel::World,
        timestamp: module_in_camera.timestamp,
    })
}
