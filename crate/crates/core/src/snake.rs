//! Snake kinematics: link chain, center-of-mass frame, sidewinding gait and
//! the flat-ground displacement model.
//!
//! The chain has [`LINK_COUNT`] links joined by [`JOINT_COUNT`] joints. Even
//! joints yaw (horizontal wave), odd joints pitch (vertical wave). World
//! link positions are laid out about the COM with the body yaw set by
//! `heading`, where heading is the direction of the head-to-tail chord.

use crate::geom::frame::{frame_from_axes, sorted_left_singular};
use crate::geom::{Mat3, Point3, Vec3};
use crate::numeric::{compensated_mean, rot_y, rot_z, CompensatedSum};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

pub const LINK_COUNT: usize = 12;
pub const JOINT_COUNT: usize = LINK_COUNT - 1;
/// 500 Hz control loop.
pub const CONTROL_PERIOD: f64 = 1.0 / 500.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnakeError {
    #[error("joint {joint} commanded to {angle} rad, limit is {limit} rad")]
    JointLimit { joint: usize, angle: f64, limit: f64 },
    #[error("links are coincident; COM frame undefined")]
    RankDeficient,
    #[error("invalid robot description: {0}")]
    InvalidDescription(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("time step {0} s must be in (0, {CONTROL_PERIOD}]")]
    InvalidTimestep(f64),
}

/// Serpenoid gait parameters: amplitude `a` (rad), temporal frequency `ω`
/// (rad/s) and per-joint phase offset `φ` (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase_offset: f64,
}

impl GaitParams {
    pub fn new(amplitude: f64, frequency: f64, phase_offset: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase_offset,
        }
    }

    /// Same wave with zero amplitude: the body holds straight and the COM stays put.
    pub fn still(frequency: f64) -> Self {
        Self::new(0.0, frequency, 0.0)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.frequency
    }
}

/// Sidewinding joint angles at time `t`. Even joints carry the horizontal
/// wave `a sin(ωt + iφ)`; odd joints carry the vertical wave, scaled by
/// `vertical_ratio` and shifted a quarter period in time.
pub fn gait_joint_angles(params: &GaitParams, vertical_ratio: f64, t: f64) -> [f64; JOINT_COUNT] {
    let mut out = [0.0; JOINT_COUNT];
    for (i, theta) in out.iter_mut().enumerate() {
        let phase = params.frequency * t + i as f64 * params.phase_offset;
        *theta = if i % 2 == 0 {
            params.amplitude * phase.sin()
        } else {
            params.amplitude * vertical_ratio * (phase + FRAC_PI_2).sin()
        };
    }
    out
}

/// Flat-ground COM displacement `k·a·ω·dt·[cos(h+β), sin(h+β), 0]`.
pub fn predict_com_displacement(
    params: &GaitParams,
    heading: f64,
    dt: f64,
    gain: f64,
    drift_angle: f64,
) -> Vec3 {
    let speed = gain * params.amplitude * params.frequency;
    let dir = heading + drift_angle;
    Vec3::new(dir.cos(), dir.sin(), 0.0) * (speed * dt)
}

/// Rigid camera mount on the head link, `rotation` columns are the camera
/// axes in head-link coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraMount {
    pub translation: Vec3,
    pub rotation: Mat3,
}

impl CameraMount {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: Mat3::identity(),
        }
    }

    /// Optical frame (x right, y down, z forward) looking along head-frame
    /// direction `yaw` with the given pitch (positive looks up).
    pub fn looking(translation: Vec3, yaw: f64, pitch: f64) -> Self {
        let forward = Vec3::new(
            yaw.cos() * pitch.cos(),
            yaw.sin() * pitch.cos(),
            pitch.sin(),
        );
        let up = Vec3::z();
        let right = forward.cross(&up);
        let right = if right.norm() > 1e-12 {
            right.normalize()
        } else {
            Vec3::x()
        };
        Self {
            translation,
            rotation: frame_from_axes(&right, &forward),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountConfig {
    pub translation: [f64; 3],
    /// Optical axis direction in the head frame, radians from the body axis.
    pub yaw: f64,
    #[serde(default)]
    pub pitch: f64,
}

fn default_link_count() -> usize {
    LINK_COUNT
}
fn default_link_length() -> f64 {
    0.1
}
fn default_masses() -> Vec<f64> {
    vec![0.6; LINK_COUNT]
}
fn default_joint_limit() -> f64 {
    FRAC_PI_2
}
fn default_gain() -> f64 {
    0.02
}
fn default_drift() -> f64 {
    FRAC_PI_2
}
fn default_vertical_ratio() -> f64 {
    0.5
}
fn default_mount() -> MountConfig {
    MountConfig {
        translation: [0.0, 0.0, 0.1],
        yaw: FRAC_PI_2,
        pitch: 0.0,
    }
}

/// Robot description: geometry, masses, limits and the calibrated
/// displacement model constants `k` (gain) and `β` (drift angle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDescription {
    #[serde(default = "default_link_count")]
    pub link_count: usize,
    #[serde(default = "default_link_length")]
    pub link_length: f64,
    #[serde(default = "default_masses")]
    pub link_masses: Vec<f64>,
    #[serde(default = "default_joint_limit")]
    pub joint_limit: f64,
    #[serde(default = "default_gain")]
    pub displacement_gain: f64,
    #[serde(default = "default_drift")]
    pub drift_angle: f64,
    #[serde(default = "default_vertical_ratio")]
    pub vertical_ratio: f64,
    #[serde(default = "default_mount")]
    pub camera_mount: MountConfig,
}

impl Default for RobotDescription {
    fn default() -> Self {
        Self {
            link_count: default_link_count(),
            link_length: default_link_length(),
            link_masses: default_masses(),
            joint_limit: default_joint_limit(),
            displacement_gain: default_gain(),
            drift_angle: default_drift(),
            vertical_ratio: default_vertical_ratio(),
            camera_mount: default_mount(),
        }
    }
}

/// State of the chain. Link 0 is the head.
#[derive(Debug, Clone, PartialEq)]
pub struct SnakeState {
    pub link_masses: Vec<f64>,
    pub link_positions: Vec<Point3>,
    pub joint_angles: Vec<f64>,
    pub heading: f64,
    pub time: f64,
}

impl SnakeState {
    pub fn validate(&self, joint_limit: f64) -> Result<(), SnakeError> {
        if self.link_masses.len() != LINK_COUNT || self.link_positions.len() != LINK_COUNT {
            return Err(SnakeError::InvalidState(format!(
                "expected {LINK_COUNT} links, got {} masses and {} positions",
                self.link_masses.len(),
                self.link_positions.len()
            )));
        }
        if self.joint_angles.len() != JOINT_COUNT {
            return Err(SnakeError::InvalidState(format!(
                "expected {JOINT_COUNT} joint angles, got {}",
                self.joint_angles.len()
            )));
        }
        if let Some(m) = self.link_masses.iter().find(|m| !(**m > 0.0)) {
            return Err(SnakeError::InvalidState(format!("link mass {m} must be positive")));
        }
        for (joint, &angle) in self.joint_angles.iter().enumerate() {
            if angle.abs() > joint_limit {
                return Err(SnakeError::JointLimit {
                    joint,
                    angle,
                    limit: joint_limit,
                });
            }
        }
        Ok(())
    }

    pub fn head_position(&self) -> Point3 {
        self.link_positions[0]
    }

    pub fn total_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }

    pub fn translated(&self, offset: &Vec3) -> SnakeState {
        SnakeState {
            link_positions: self.link_positions.iter().map(|p| p + offset).collect(),
            ..self.clone()
        }
    }
}

/// Mass-weighted mean of positions.
pub fn weighted_com(masses: &[f64], positions: &[Point3]) -> Point3 {
    let mut acc = [CompensatedSum::default(); 3];
    let mut total = CompensatedSum::default();
    for (m, p) in masses.iter().zip(positions) {
        for (k, s) in acc.iter_mut().enumerate() {
            s.add(m * p[k]);
        }
        total.add(*m);
    }
    let total = total.total();
    Point3::new(
        acc[0].total() / total,
        acc[1].total() / total,
        acc[2].total() / total,
    )
}

pub fn compute_com(state: &SnakeState) -> Point3 {
    weighted_com(&state.link_masses, &state.link_positions)
}

/// Floating body frame at the COM with axes from the SVD of the
/// mean-centered link positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComFrame {
    pub origin: Point3,
    pub axes: Mat3,
    pub singular_values: [f64; 3],
}

impl ComFrame {
    pub fn x_axis(&self) -> Vec3 {
        self.axes.column(0).into_owned()
    }
    pub fn z_axis(&self) -> Vec3 {
        self.axes.column(2).into_owned()
    }
}

/// COM frame; axis signs follow `previous` when given, otherwise `x` leans
/// toward world `+x` and `z` points up.
pub fn com_frame(state: &SnakeState, previous: Option<&ComFrame>) -> Result<ComFrame, SnakeError> {
    let origin = compute_com(state);
    let centered: Vec<Vec3> = state.link_positions.iter().map(|p| p - origin).collect();
    let (u, sigma) = sorted_left_singular(&centered);
    let scale = state
        .link_positions
        .iter()
        .map(|p| p.coords.amax())
        .fold(1.0, f64::max);
    if sigma[0] <= 1e-12 * scale {
        return Err(SnakeError::RankDeficient);
    }
    let mut x = u.column(0).into_owned();
    let mut z = u.column(2).into_owned();
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
            if x.x < 0.0 || (x.x == 0.0 && x.y < 0.0) {
                x = -x;
            }
            if z.z < 0.0 {
                z = -z;
            }
        }
    }
    let y = z.cross(&x);
    Ok(ComFrame {
        origin,
        axes: Mat3::from_columns(&[x, y, z]),
        singular_values: sigma,
    })
}

/// Kinematic snake model built from a [`RobotDescription`].
#[derive(Debug, Clone)]
pub struct SnakeModel {
    pub desc: RobotDescription,
    pub mount: CameraMount,
}

impl SnakeModel {
    pub fn new(desc: RobotDescription) -> Result<Self, SnakeError> {
        let bad = |m: String| Err(SnakeError::InvalidDescription(m));
        if desc.link_count != LINK_COUNT {
            return bad(format!("link_count must be {LINK_COUNT}, got {}", desc.link_count));
        }
        if desc.link_masses.len() != LINK_COUNT {
            return bad(format!(
                "link_masses must have {LINK_COUNT} entries, got {}",
                desc.link_masses.len()
            ));
        }
        if desc.link_masses.iter().any(|m| !(*m > 0.0)) {
            return bad("link_masses must be positive".into());
        }
        if !(desc.link_length > 0.0) {
            return bad("link_length must be positive".into());
        }
        if !(desc.joint_limit > 0.0 && desc.joint_limit <= PI) {
            return bad("joint_limit must be in (0, pi]".into());
        }
        if !(desc.displacement_gain >= 0.0) {
            return bad("displacement_gain must be nonnegative".into());
        }
        let m = desc.camera_mount;
        let mount = CameraMount::looking(Vec3::from(m.translation), m.yaw, m.pitch);
        Ok(Self { desc, mount })
    }

    pub fn joint_angles(&self, params: &GaitParams, t: f64) -> [f64; JOINT_COUNT] {
        gait_joint_angles(params, self.desc.vertical_ratio, t)
    }

    pub fn predict_com_displacement(&self, params: &GaitParams, heading: f64, dt: f64) -> Vec3 {
        predict_com_displacement(
            params,
            heading,
            dt,
            self.desc.displacement_gain,
            self.desc.drift_angle,
        )
    }

    /// COM speed for a gait, m/s.
    pub fn speed(&self, params: &GaitParams) -> f64 {
        self.desc.displacement_gain * params.amplitude * params.frequency
    }

    fn check_limits(&self, joints: &[f64]) -> Result<(), SnakeError> {
        for (joint, &angle) in joints.iter().enumerate() {
            if angle.abs() > self.desc.joint_limit {
                return Err(SnakeError::JointLimit {
                    joint,
                    angle,
                    limit: self.desc.joint_limit,
                });
            }
        }
        Ok(())
    }

    /// Link centers in a chain-local frame with the head at the origin and
    /// the unbent body along `-x`.
    fn local_chain(&self, joints: &[f64]) -> Vec<Vec3> {
        let half = Vec3::new(-self.desc.link_length / 2.0, 0.0, 0.0);
        let mut r = Mat3::identity();
        let mut p = Vec3::zeros();
        let mut out = Vec::with_capacity(LINK_COUNT);
        out.push(p);
        for (i, &theta) in joints.iter().enumerate() {
            let first = r * half;
            r *= if i % 2 == 0 { rot_z(theta) } else { rot_y(theta) };
            p += first + r * half;
            out.push(p);
        }
        out
    }

    /// Body yaw offset of the head-to-tail chord in the chain-local frame.
    fn chord_yaw(local: &[Vec3]) -> f64 {
        let chord = local[0] - local[LINK_COUNT - 1];
        chord.y.atan2(chord.x)
    }

    /// World link positions and head-link rotation for a COM, heading and shape.
    pub fn place_links(&self, com: &Point3, heading: f64, joints: &[f64]) -> (Vec<Point3>, Mat3) {
        let local = self.local_chain(joints);
        let local_com = {
            let pts: Vec<Point3> = local.iter().map(|v| Point3::from(*v)).collect();
            weighted_com(&self.desc.link_masses, &pts).coords
        };
        let r = rot_z(heading - Self::chord_yaw(&local));
        let positions = local.iter().map(|q| com + r * (q - local_com)).collect();
        (positions, r)
    }

    /// Head offset from the COM for a shape, expressed in the heading frame.
    pub fn head_offset(&self, joints: &[f64]) -> Vec3 {
        let (links, _) = self.place_links(&Point3::origin(), 0.0, joints);
        links[0].coords
    }

    pub fn head_rotation(&self, state: &SnakeState) -> Mat3 {
        let local = self.local_chain(&state.joint_angles);
        rot_z(state.heading - Self::chord_yaw(&local))
    }

    /// A state at rest: gait shape at `time`, COM at `com`.
    pub fn state_at(
        &self,
        com: &Point3,
        heading: f64,
        joints: &[f64],
        time: f64,
    ) -> Result<SnakeState, SnakeError> {
        if joints.len() != JOINT_COUNT {
            return Err(SnakeError::InvalidState(format!(
                "expected {JOINT_COUNT} joint angles, got {}",
                joints.len()
            )));
        }
        self.check_limits(joints)?;
        let (link_positions, _) = self.place_links(com, heading, joints);
        Ok(SnakeState {
            link_masses: self.desc.link_masses.clone(),
            link_positions,
            joint_angles: joints.to_vec(),
            heading,
            time,
        })
    }

    /// One integration step: joint angles from the gait at the new time, COM
    /// advanced by the displacement model at the current heading, heading
    /// advanced by `turn_rate`.
    pub fn step_state(
        &self,
        state: &SnakeState,
        params: &GaitParams,
        turn_rate: f64,
        dt: f64,
    ) -> Result<SnakeState, SnakeError> {
        if !(dt > 0.0 && dt <= CONTROL_PERIOD * (1.0 + 1e-9)) {
            return Err(SnakeError::InvalidTimestep(dt));
        }
        let time = state.time + dt;
        let joints = self.joint_angles(params, time);
        self.check_limits(&joints)?;
        let com = compute_com(state) + self.predict_com_displacement(params, state.heading, dt);
        let heading = state.heading + turn_rate * dt;
        let (link_positions, _) = self.place_links(&com, heading, &joints);
        Ok(SnakeState {
            link_masses: state.link_masses.clone(),
            link_positions,
            joint_angles: joints.to_vec(),
            heading,
            time,
        })
    }
}

/// Mean of link positions without weights, for diagnostics.
pub fn geometric_center(state: &SnakeState) -> Option<Vec3> {
    let v: Vec<Vec3> = state.link_positions.iter().map(|p| p.coords).collect();
    compensated_mean(&v)
}
