//! Pinhole projection, ordered point clouds, normal clouds and SVD-based
//! plane-frame extraction.
//!
//! Everything here is a pure function of its inputs. Depth is z-depth in
//! meters; a depth of `0` marks a pixel with no return.

mod camera;
mod cloud;
pub(crate) mod frame;
mod pose;

pub use camera::{project_pixel, CameraIntrinsics, DepthFrame, DepthRoi, PixelRect};
pub use cloud::{compute_normals, unproject_cloud, NormalCloud, OrderedPointCloud};
pub use frame::{align_orientation, estimate_frame, OrientationMode, RANK_TOLERANCE};
pub use pose::{compose_pose, FrameLabel, Pose6DoF, ROTATION_TOLERANCE};

use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("region of interest has no valid depth pixel")]
    EmptyRoi,
    #[error("cloud too sparse: only {0} normals could be formed")]
    DegenerateCloud(usize),
    #[error("points are rank deficient (singular value ratio {0:e})")]
    RankDeficient(f64),
    #[error("frame mismatch: expected {expected}, got {actual}")]
    FrameMismatch {
        expected: FrameLabel,
        actual: FrameLabel,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rotation: orthonormality error {orthonormality:e}, det {det}")]
    InvalidRotation { orthonormality: f64, det: f64 },
    #[error("invalid depth frame: {0}")]
    InvalidFrame(String),
}
