use super::{PlanBounds, PlanError, PlanProblem, SolverOptions};
use crate::geom::Point3;
use crate::snake::{GaitParams, RobotDescription};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Straight-line tracking task as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTask {
    #[serde(default)]
    pub start: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    pub target: [f64; 2],
    #[serde(default = "default_waypoints")]
    pub waypoints: usize,
    /// Desired COM advance per waypoint, meters.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Initial `[amplitude, frequency, phase_offset]`.
    #[serde(default = "default_guess")]
    pub guess: [f64; 3],
    #[serde(default)]
    pub bounds: PlanBounds,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub robot: RobotDescription,
}

fn default_waypoints() -> usize {
    3
}

fn default_step() -> f64 {
    0.12
}

fn default_guess() -> [f64; 3] {
    [0.5, 2.0 * PI, 0.8]
}

impl PlanTask {
    pub fn from_toml_str(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }

    pub fn problem(&self) -> Result<PlanProblem, PlanError> {
        let g = self.guess;
        PlanProblem::straight_line(
            Point3::new(self.start[0], self.start[1], 0.0),
            self.heading,
            Point3::new(self.target[0], self.target[1], 0.0),
            self.waypoints,
            self.step,
            &GaitParams::new(g[0], g[1], g[2]),
            &self.bounds,
            self.robot.displacement_gain,
            self.robot.drift_angle,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::solve;

    #[test]
    fn minimal_task_solves() {
        let task = PlanTask::from_toml_str("target = [0.3, 0.0]\nheading = -1.5707963267948966\n").unwrap();
        let problem = task.problem().unwrap();
        let sol = solve(&problem, &task.solver).unwrap();
        assert!(sol.constraint_residual < 1e-3);
    }

    #[test]
    fn missing_target_is_named() {
        let err = PlanTask::from_toml_str("heading = 0.0\n").unwrap_err();
        assert!(err.contains("target"), "{err}");
    }
}
