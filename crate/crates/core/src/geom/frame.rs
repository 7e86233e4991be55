use super::{FrameLabel, GeomError, Mat3, NormalCloud, OrderedPointCloud, Pose6DoF, Vec3};
use crate::numeric::compensated_mean;
use nalgebra::{Matrix3xX, Point3};
use serde::{Deserialize, Serialize};

/// Points whose second singular value falls below this fraction of the first
/// are treated as collinear.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Which matrix the orientation SVD is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationMode {
    /// Mean-centered point matrix; the smallest singular direction is the normal.
    #[default]
    PointPca,
    /// Normal matrix; the dominant singular direction is the normal.
    NormalSvd,
}

/// Left singular vectors of the 3×n matrix with the given columns, ordered by
/// descending singular value.
pub(crate) fn sorted_left_singular(columns: &[Vec3]) -> (Mat3, [f64; 3]) {
    let mut cols: Vec<Vec3> = columns.to_vec();
    while cols.len() < 3 {
        cols.push(Vec3::zeros());
    }
    let m = Matrix3xX::from_columns(&cols);
    let svd = m.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut sorted = Mat3::zeros();
    let mut sigma = [0.0; 3];
    for (k, &src) in order.iter().enumerate() {
        sorted.set_column(k, &u.column(src));
        sigma[k] = s[src];
    }
    (sorted, sigma)
}

/// Orthonormal right-handed frame from a primary in-plane axis and a normal:
/// `x` is re-orthogonalized against `z` and `y = z × x`.
pub(crate) fn frame_from_axes(x: &Vec3, z: &Vec3) -> Mat3 {
    let z = z.normalize();
    let x = (x - z * x.dot(&z)).normalize();
    let y = z.cross(&x);
    Mat3::from_columns(&[x, y, z])
}

/// Plane frame of a docking-module surface: position is the point centroid,
/// `z` the surface normal pointing toward the camera.
pub fn estimate_frame(
    cloud: &OrderedPointCloud,
    normals: &NormalCloud,
    mode: OrientationMode,
) -> Result<Pose6DoF, GeomError> {
    let points: Vec<Vec3> = cloud.present().map(|p| p.coords).collect();
    if points.len() < 3 {
        return Err(GeomError::DegenerateCloud(points.len()));
    }
    let centroid = compensated_mean(&points).expect("nonempty");
    let centered: Vec<Vec3> = points.iter().map(|p| p - centroid).collect();
    let (u, sigma) = sorted_left_singular(&centered);
    let ratio = if sigma[0] > 0.0 { sigma[1] / sigma[0] } else { 0.0 };
    if ratio < RANK_TOLERANCE {
        return Err(GeomError::RankDeficient(ratio));
    }

    let (x, mut z) = match mode {
        OrientationMode::PointPca => (u.column(0).into_owned(), u.column(2).into_owned()),
        OrientationMode::NormalSvd => {
            if normals.is_empty() {
                return Err(GeomError::DegenerateCloud(0));
            }
            let (un, _) = sorted_left_singular(&normals.normals);
            (un.column(1).into_owned(), un.column(0).into_owned())
        }
    };
    if z.dot(&-centroid) < 0.0 {
        z = -z;
    }
    Ok(Pose6DoF {
        rotation: frame_from_axes(&x, &z),
        position: Point3::from(centroid),
        frame: FrameLabel::Camera,
        timestamp: cloud.timestamp,
    })
}

/// Resolves the sign ambiguity of an SVD frame.
///
/// With a previous pose, `x` and `z` are each negated when they point away
/// from the previous frame's axes. Without one, `z` faces the camera (camera
/// frame only) and `x` has a nonnegative component along `+x`.
pub fn align_orientation(candidate: &Pose6DoF, previous: Option<&Pose6DoF>) -> Pose6DoF {
    let mut x = candidate.x_axis();
    let mut z = candidate.z_axis();
    match previous {
        Some(prev) => {
            if x.dot(&prev.x_axis()) < 0.0 {
                x = -x;
            }
            if z.dot(&prev.z_axis()) < 0.0 {
                z = -z;
            }
        }
        None => {
            if candidate.frame == FrameLabel::Camera && z.dot(&-candidate.position.coords) < 0.0 {
                z = -z;
            }
            if x.x < 0.0 {
                x = -x;
            }
        }
    }
    let y = z.cross(&x);
    Pose6DoF {
        rotation: Mat3::from_columns(&[x, y, z]),
        ..*candidate
    }
}
