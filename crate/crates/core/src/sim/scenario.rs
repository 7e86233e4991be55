use super::{BoxDims, ModuleDims, ScheduleConfig};
use crate::geom::{CameraIntrinsics, OrientationMode};
use crate::perception::{NoiseSpec, PerceptionConfig};
use crate::planner::{DockingConfig, PlanBounds, SolverOptions};
use crate::snake::{RobotDescription, SnakeModel};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    pub com: [f64; 3],
    pub heading: f64,
    /// Start with the box already latched to the head.
    pub latched: bool,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            com: [0.0; 3],
            heading: -FRAC_PI_2,
            latched: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Ground-plane position of the docking face center.
    pub module_face: [f64; 2],
    /// Yaw of the face's outward normal.
    pub normal_yaw: f64,
    #[serde(rename = "box")]
    pub box_dims: BoxDims,
    pub module: ModuleDims,
    pub ground: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            module_face: [4.5, -0.55],
            normal_yaw: PI,
            box_dims: BoxDims::default(),
            module: ModuleDims::default(),
            ground: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionSection {
    pub min_confidence: f64,
    pub roi_shrink: f64,
    pub orientation: OrientationMode,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        let d = PerceptionConfig::default();
        Self {
            min_confidence: d.min_confidence,
            roi_shrink: d.roi_shrink,
            orientation: d.orientation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSection {
    pub solver: SolverOptions,
    pub bounds: PlanBounds,
    pub waypoints: usize,
    /// Desired COM advance per waypoint, meters.
    pub step: f64,
    /// Initial gait guess; its period sets the waypoint spacing.
    pub guess: [f64; 3],
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            bounds: PlanBounds::default(),
            waypoints: 3,
            step: 0.12,
            guess: [0.5, 2.0 * PI, 0.8],
        }
    }
}

/// Guidance gains and thresholds for the mission state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionTuning {
    pub search_turn_rate: f64,
    /// Seconds without a pose estimate before APPROACH gives up the target.
    pub lost_timeout: f64,
    /// Closest aim point in front of the module face, meters.
    pub standoff: f64,
    /// Beyond this range the aim point sits on the line of sight instead of
    /// the estimated face normal.
    pub far_field: f64,
    /// Cut-in per meter of offset from the face normal line, rad/m.
    pub cross_track_gain: f64,
    pub max_cut: f64,
    pub heading_gain: f64,
    pub max_turn_rate: f64,
    /// Heading errors above this turn in place, radians.
    pub turn_in_place: f64,
    pub dock_distance: f64,
    pub dock_angle: f64,
    /// Largest travel-direction error that still allows docking to start.
    pub dock_heading: f64,
    /// Still time before the docking estimate is taken, seconds.
    pub settle_time: f64,
    pub transport_amplitude: f64,
    pub transport_frequency: f64,
    pub phase_offset: f64,
}

impl Default for MissionTuning {
    fn default() -> Self {
        Self {
            search_turn_rate: 0.3,
            lost_timeout: 3.0,
            standoff: 0.35,
            far_field: 1.5,
            cross_track_gain: 4.0,
            max_cut: 35f64.to_radians(),
            heading_gain: 2.0,
            max_turn_rate: 0.5,
            turn_in_place: 25f64.to_radians(),
            dock_distance: 0.45,
            dock_angle: 6f64.to_radians(),
            dock_heading: 10f64.to_radians(),
            settle_time: 0.25,
            transport_amplitude: 0.5,
            transport_frequency: 2.0 * PI,
            phase_offset: 0.8,
        }
    }
}

fn default_name() -> String {
    "scenario".into()
}

fn default_budget() -> f64 {
    240.0
}

fn default_goal_tolerance() -> f64 {
    0.1
}

/// Head camera used by scenarios that do not set one.
pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 300.0,
        fy: 300.0,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds before the mission is declared failed.
    #[serde(default = "default_budget")]
    pub time_budget: f64,
    /// Target position of the box center.
    pub goal: [f64; 3],
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default)]
    pub robot: RobotDescription,
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default = "default_camera")]
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub perception: PerceptionSection,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub docking: DockingConfig,
    #[serde(default)]
    pub mission: MissionTuning,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads TOML, or JSON when the file extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn perception_config(&self) -> PerceptionConfig {
        PerceptionConfig {
            rgb_rate: self.schedule.rgb,
            depth_rate: self.schedule.depth,
            detect_rate: self.schedule.detect,
            min_confidence: self.perception.min_confidence,
            roi_shrink: self.perception.roi_shrink,
            orientation: self.perception.orientation,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.goal.iter().any(|g| !g.is_finite()) {
            return Err(invalid("goal", "coordinates must be finite"));
        }
        if !(self.time_budget > 0.0) {
            return Err(invalid("time_budget", "must be positive"));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(invalid("goal_tolerance", "must be positive"));
        }
        SnakeModel::new(self.robot.clone()).map_err(|e| invalid("robot", e.to_string()))?;
        self.camera.validate().map_err(|e| invalid("camera", e.to_string()))?;
        self.schedule.validate().map_err(|e| invalid("schedule", e))?;
        self.noise.validate().map_err(|e| invalid("noise", e))?;
        self.perception_config()
            .validate()
            .map_err(|e| invalid("perception", e))?;
        let b = &self.scene.box_dims;
        let m = &self.scene.module;
        if [b.length, b.width, b.height, m.width, m.height, m.thickness]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(invalid("scene", "box and module dimensions must be positive"));
        }
        if self.planner.waypoints == 0 {
            return Err(invalid("planner.waypoints", "must be at least 1"));
        }
        Ok(())
    }
}
