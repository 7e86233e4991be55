//! Synthetic world, multi-rate scheduler and the closed-loop mission.

mod mission;
mod scenario;
mod scene;
mod schedule;

pub use mission::{run_scenario, MissionLog, MissionPhase, MissionSummary, Outcome, ScenarioError};
pub use scenario::{
    default_camera, ConfigError, MissionTuning, PerceptionSection, PlannerSection, ScenarioConfig, SceneConfig,
    StartConfig,
};
pub(crate) use scene::frame_rng;
pub use scene::{
    box_pose_for_face, head_camera_pose, module_pose_for, render_depth, BoxDims, Cuboid,
    LatchGrip, ModuleDims, SceneState, MIN_RANGE,
};
pub use schedule::{ScheduleConfig, Scheduler, Stream, Tick};
