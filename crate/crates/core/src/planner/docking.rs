use crate::geom::{FrameLabel, Pose6DoF, Vec3};
use crate::numeric::{angle_between, wrap_angle};
use crate::snake::{compute_com, GaitParams, SnakeModel, SnakeState, CONTROL_PERIOD};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Heading errors below this are treated as already aligned.
const ALIGN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeQuantity {
    Distance,
    ApproachAngle,
}

impl fmt::Display for EnvelopeQuantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Distance => "distance",
            Self::ApproachAngle => "approach angle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DockingError {
    #[error("outside docking envelope: {quantity} {value:.4} exceeds {limit:.4}")]
    OutOfEnvelope {
        quantity: EnvelopeQuantity,
        value: f64,
        limit: f64,
    },
    #[error("module pose must be in the world frame, got {0}")]
    WrongFrame(FrameLabel),
    #[error("final approach needs amplitude {0:.4} beyond the joint limit")]
    AmplitudeLimit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DockingConfig {
    /// Maximum horizontal head-to-module distance, meters.
    pub envelope_distance: f64,
    /// Maximum angle between the module normal and the module-to-head bearing.
    pub envelope_angle: f64,
    pub max_turn_rate: f64,
    /// Control steps per final-approach gait period.
    pub final_period_steps: usize,
    pub final_amplitude_max: f64,
    pub final_phase_offset: f64,
    pub latch_duration: f64,
    pub latch_distance: f64,
    pub latch_angle: f64,
    pub reposition_distance: f64,
    pub reposition_amplitude_max: f64,
    pub unlatch_duration: f64,
}

impl Default for DockingConfig {
    fn default() -> Self {
        Self {
            envelope_distance: 0.5,
            envelope_angle: 30f64.to_radians(),
            max_turn_rate: 0.5,
            final_period_steps: 500,
            final_amplitude_max: 0.4,
            final_phase_offset: 0.8,
            latch_duration: 1.0,
            latch_distance: 0.02,
            latch_angle: 10f64.to_radians(),
            reposition_distance: 0.25,
            reposition_amplitude_max: 0.5,
            unlatch_duration: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseKind {
    Align,
    FinalApproach,
    Latch,
    Reposition,
    Unlatch,
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Align => "ALIGN",
            Self::FinalApproach => "FINAL_APPROACH",
            Self::Latch => "LATCH",
            Self::Reposition => "REPOSITION",
            Self::Unlatch => "UNLATCH",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseAction {
    Gait { params: GaitParams, turn_rate: f64 },
    LatchClose,
    LatchOpen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptPhase {
    pub kind: PhaseKind,
    pub action: PhaseAction,
    /// Control steps spent in the phase.
    pub steps: usize,
    pub duration: f64,
}

impl ScriptPhase {
    fn new(kind: PhaseKind, action: PhaseAction, steps: usize) -> Self {
        Self {
            kind,
            action,
            steps,
            duration: steps as f64 * CONTROL_PERIOD,
        }
    }

    /// Gait command for a control step of this phase; latch phases hold still.
    pub fn command(&self) -> Option<(GaitParams, f64)> {
        match self.action {
            PhaseAction::Gait { params, turn_rate } => Some((params, turn_rate)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DockingScript {
    pub phases: Vec<ScriptPhase>,
    /// Heading after ALIGN.
    pub approach_heading: f64,
    /// COM travel planned for FINAL_APPROACH, meters.
    pub approach_distance: f64,
}

impl DockingScript {
    pub fn phase(&self, kind: PhaseKind) -> Option<&ScriptPhase> {
        self.phases.iter().find(|p| p.kind == kind)
    }

    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    /// Runs the gait phases of the script up to and including `last`.
    pub fn execute(
        &self,
        model: &SnakeModel,
        state: &SnakeState,
        last: PhaseKind,
    ) -> Result<SnakeState, crate::snake::SnakeError> {
        let mut s = state.clone();
        for phase in &self.phases {
            if let Some((params, turn)) = phase.command() {
                for _ in 0..phase.steps {
                    s = model.step_state(&s, &params, turn, CONTROL_PERIOD)?;
                }
            }
            if phase.kind == last {
                break;
            }
        }
        Ok(s)
    }
}

/// Horizontal head-to-module distance and the angle between the module's
/// outward normal and the module-to-head bearing, both in the ground plane.
pub(crate) fn envelope_measures(module: &Pose6DoF, head: &crate::geom::Point3) -> (f64, f64) {
    let to_head = head - module.position;
    let to_head = Vec3::new(to_head.x, to_head.y, 0.0);
    let n = module.z_axis();
    let n = Vec3::new(n.x, n.y, 0.0);
    let angle = if n.norm() < 1e-9 || to_head.norm() < 1e-12 {
        if to_head.norm() < 1e-12 { 0.0 } else { PI }
    } else {
        angle_between(&n, &to_head)
    };
    (to_head.norm(), angle)
}

/// Builds the fixed-duration docking sequence ALIGN, FINAL_APPROACH, LATCH,
/// REPOSITION, UNLATCH from the current module estimate.
///
/// ALIGN turns in place to the heading from which an integer number of
/// final-approach gait periods carries the head exactly onto the module.
pub fn make_docking_script(
    module_pose: &Pose6DoF,
    robot: &SnakeState,
    model: &SnakeModel,
    cfg: &DockingConfig,
) -> Result<DockingScript, DockingError> {
    if module_pose.frame != FrameLabel::World {
        return Err(DockingError::WrongFrame(module_pose.frame));
    }
    let head = robot.head_position();
    let (distance, angle) = envelope_measures(module_pose, &head);
    if distance >= cfg.envelope_distance {
        return Err(DockingError::OutOfEnvelope {
            quantity: EnvelopeQuantity::Distance,
            value: distance,
            limit: cfg.envelope_distance,
        });
    }
    if angle >= cfg.envelope_angle {
        return Err(DockingError::OutOfEnvelope {
            quantity: EnvelopeQuantity::ApproachAngle,
            value: angle,
            limit: cfg.envelope_angle,
        });
    }

    let dt = CONTROL_PERIOD;
    let k = model.desc.displacement_gain;
    let beta = model.desc.drift_angle;
    let e = Vec3::new(beta.cos(), beta.sin(), 0.0);
    let period_steps = cfg.final_period_steps.max(1);
    let omega = 2.0 * PI / (period_steps as f64 * dt);
    let per_cycle = |a: f64| 2.0 * PI * k * a;

    let com = compute_com(robot);
    let rel = module_pose.position - com;
    let rel = Vec3::new(rel.x, rel.y, 0.0);
    let theta_m = rel.y.atan2(rel.x);

    // Closed-form heading for a shape offset q: Rz(-h)·rel = q + D·e.
    let solve_heading = |q: &Vec3| -> (f64, f64) {
        let q = Vec3::new(q.x, q.y, 0.0);
        let qe = q.dot(&e);
        let disc = (qe * qe - q.norm_squared() + rel.norm_squared()).max(0.0);
        let d = -qe + disc.sqrt();
        let w = q + e * d;
        (wrap_angle(theta_m - w.y.atan2(w.x)), d)
    };

    let straight = model.head_offset(&[0.0; crate::snake::JOINT_COUNT]);
    let (_, d_guess) = solve_heading(&straight);
    let cycles = ((d_guess.max(0.0) / per_cycle(cfg.final_amplitude_max)).ceil() as usize).max(1);
    let mut amplitude = d_guess.max(0.0) / (per_cycle(1.0) * cycles as f64);
    let mut heading = robot.heading;
    let mut distance_d = d_guess;
    let mut align_steps = 0usize;
    // Outer loop on the ALIGN step count, inner fixed point on the amplitude.
    for _ in 0..20 {
        let t0 = robot.time + align_steps as f64 * dt;
        for _ in 0..100 {
            let gait = GaitParams::new(amplitude, omega, cfg.final_phase_offset);
            let q = model.head_offset(&model.joint_angles(&gait, t0));
            let (h, d) = solve_heading(&q);
            let next = d.max(0.0) / (per_cycle(1.0) * cycles as f64);
            let settled = (next - amplitude).abs() < 1e-15;
            amplitude = next;
            heading = h;
            distance_d = d;
            if settled {
                break;
            }
        }
        let dh = wrap_angle(heading - robot.heading);
        let steps = if dh.abs() <= ALIGN_TOLERANCE {
            0
        } else {
            (dh.abs() / (cfg.max_turn_rate * dt)).ceil() as usize
        };
        if steps == align_steps {
            break;
        }
        align_steps = steps;
    }
    if amplitude > model.desc.joint_limit {
        return Err(DockingError::AmplitudeLimit(amplitude));
    }
    let dh = wrap_angle(heading - robot.heading);
    let align_steps_final = if dh.abs() <= ALIGN_TOLERANCE { 0 } else { align_steps.max(1) };
    let align_turn = if align_steps_final == 0 {
        0.0
    } else {
        dh / (align_steps_final as f64 * dt)
    };

    let still = GaitParams::still(omega);
    let approach = GaitParams::new(amplitude, omega, cfg.final_phase_offset);
    let rep_cycles = ((cfg.reposition_distance / per_cycle(cfg.reposition_amplitude_max)).ceil()
        as usize)
        .max(1);
    let rep_amplitude = cfg.reposition_distance / (per_cycle(1.0) * rep_cycles as f64);
    let reposition = GaitParams::new(rep_amplitude, omega, cfg.final_phase_offset);
    let to_steps = |secs: f64| (secs / dt).round() as usize;

    let phases = vec![
        ScriptPhase::new(
            PhaseKind::Align,
            PhaseAction::Gait {
                params: still,
                turn_rate: align_turn,
            },
            align_steps_final,
        ),
        ScriptPhase::new(
            PhaseKind::FinalApproach,
            PhaseAction::Gait {
                params: approach,
                turn_rate: 0.0,
            },
            cycles * period_steps,
        ),
        ScriptPhase::new(PhaseKind::Latch, PhaseAction::LatchClose, to_steps(cfg.latch_duration)),
        ScriptPhase::new(
            PhaseKind::Reposition,
            PhaseAction::Gait {
                params: reposition,
                turn_rate: 0.0,
            },
            rep_cycles * period_steps,
        ),
        ScriptPhase::new(PhaseKind::Unlatch, PhaseAction::LatchOpen, to_steps(cfg.unlatch_duration)),
    ];
    log::debug!(
        "docking script: align {align_steps_final} steps to heading {heading:.4}, \
         approach {distance_d:.4} m over {cycles} cycles at amplitude {amplitude:.4}"
    );
    Ok(DockingScript {
        phases,
        approach_heading: robot.heading + dh,
        approach_distance: distance_d,
    })
}
