//! Small numeric helpers shared across modules.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated mean of a set of 3-vectors. Returns `None` for an empty input.
pub fn compensated_mean<'a, I>(vectors: I) -> Option<Vector3<f64>>
where
    I: IntoIterator<Item = &'a Vector3<f64>>,
{
    let mut acc = [CompensatedSum::default(); 3];
    let mut count = 0usize;
    for v in vectors {
        for (k, s) in acc.iter_mut().enumerate() {
            s.add(v[k]);
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    Some(Vector3::new(
        acc[0].total() / n,
        acc[1].total() / n,
        acc[2].total() / n,
    ))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Rotation about the world z axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation from axis-angle (Rodrigues). `axis` need not be normalized.
pub fn rot_axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let norm = axis.norm();
    if norm == 0.0 || angle == 0.0 {
        return Matrix3::identity();
    }
    let k = axis / norm;
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Angle between two vectors in radians.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let cross = a.cross(b).norm();
    let dot = a.dot(b);
    cross.atan2(dot)
}
