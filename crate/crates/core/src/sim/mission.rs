use super::scenario::{ConfigError, ScenarioConfig};
use super::{box_pose_for_face, frame_rng, head_camera_pose, render_depth, SceneState, Scheduler, Stream};
use crate::geom::{DepthFrame, Point3, Pose6DoF, Vec3};
use crate::numeric::{angle_between, rot_axis_angle, wrap_angle};
use crate::perception::{
    estimate_module_pose, OracleDetector, PerceptionConfig, RgbFrame, SceneView,
};
use crate::planner::{
    make_docking_script, solve, DockingScript, PhaseAction, PhaseKind, PlanError, PlanProblem,
};
use crate::snake::{compute_com, GaitParams, SnakeModel, SnakeState};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::fmt::{self, Write as _};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MissionPhase {
    Search,
    Approach,
    Docking,
    Reposition,
    Transport,
    Done,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 6] = [
        Self::Search,
        Self::Approach,
        Self::Docking,
        Self::Reposition,
        Self::Transport,
        Self::Done,
    ];

    pub fn can_transition_to(self, next: MissionPhase) -> bool {
        use MissionPhase::*;
        matches!(
            (self, next),
            (Search, Approach)
                | (Approach, Docking)
                | (Approach, Search)
                | (Docking, Reposition)
                | (Reposition, Transport)
                | (Transport, Done)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Search => "SEARCH",
            Self::Approach => "APPROACH",
            Self::Docking => "DOCKING",
            Self::Reposition => "REPOSITION",
            Self::Transport => "TRANSPORT",
            Self::Done => "DONE",
        }
    }
}

impl fmt::Display for MissionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Done,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    pub scenario: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub final_phase: MissionPhase,
    pub mission_time: f64,
    pub final_box_error: f64,
    pub final_box_position: [f64; 3],
    pub goal: [f64; 3],
    pub phase_durations: BTreeMap<String, f64>,
    pub phase_ticks: BTreeMap<String, u64>,
    pub pose_estimates: u64,
    pub rejections: BTreeMap<String, u64>,
    pub replans: u64,
    pub latch_attempts: u64,
}

/// Everything a mission run records: per-tick CSV streams and a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MissionLog {
    pub robot_csv: String,
    pub poses_csv: String,
    pub phases_csv: String,
    pub planner_csv: String,
    pub summary: MissionSummary,
}

impl MissionLog {
    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        s.push('\n');
        s
    }

    pub fn files(&self) -> [(&'static str, String); 5] {
        [
            ("robot.csv", self.robot_csv.clone()),
            ("poses.csv", self.poses_csv.clone()),
            ("phases.csv", self.phases_csv.clone()),
            ("planner.csv", self.planner_csv.clone()),
            ("summary.json", self.summary_json()),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.files() {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mission not done within {budget} s (stopped in {phase})")]
    Timeout {
        budget: f64,
        phase: MissionPhase,
        log: Box<MissionLog>,
    },
}

#[derive(Debug, Clone, Copy)]
enum Command {
    Gait(GaitParams, f64),
    Hold,
}

#[derive(Debug, Clone)]
enum DockStage {
    /// Holding straight and still until an estimate newer than `since` plus
    /// the settle time arrives.
    Settle { since: f64, attempted: f64 },
    Script {
        script: DockingScript,
        index: usize,
        issued: usize,
    },
}

struct Mission<'a> {
    cfg: &'a ScenarioConfig,
    model: SnakeModel,
    pcfg: PerceptionConfig,
    detector: OracleDetector,
    scene: SceneState,
    phase: MissionPhase,
    phase_since: f64,
    command: Command,
    /// Recent RGB frames, oldest first, for pairing with the latest depth.
    rgb: VecDeque<RgbFrame>,
    depth: Option<(DepthFrame, Pose6DoF)>,
    estimate: Option<Pose6DoF>,
    estimate_time: f64,
    gait: GaitParams,
    replan_due: bool,
    dock: Option<DockStage>,
    ticks: BTreeMap<MissionPhase, u64>,
    rejections: BTreeMap<String, u64>,
    pose_estimates: u64,
    replans: u64,
    latch_attempts: u64,
    robot_csv: String,
    poses_csv: String,
    phases_csv: String,
    planner_csv: String,
}

const RGB_BUFFER: usize = 4;

fn horizontal(v: &Vec3) -> Vec3 {
    Vec3::new(v.x, v.y, 0.0)
}

impl<'a> Mission<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self, ConfigError> {
        let model = SnakeModel::new(cfg.robot.clone()).map_err(|e| ConfigError::Invalid {
            field: "robot".into(),
            reason: e.to_string(),
        })?;
        let start = &cfg.start;
        let robot = model
            .state_at(&Point3::from(start.com), start.heading, &[0.0; crate::snake::JOINT_COUNT], 0.0)
            .map_err(|e| ConfigError::Invalid {
                field: "start".into(),
                reason: e.to_string(),
            })?;
        let sc = &cfg.scene;
        let (face, normal_yaw) = if start.latched {
            let head = robot.head_position();
            (head, start.heading + model.desc.drift_angle + std::f64::consts::PI)
        } else {
            (Point3::new(sc.module_face[0], sc.module_face[1], 0.0), sc.normal_yaw)
        };
        let box_pose = box_pose_for_face(&face, normal_yaw, &sc.box_dims, &sc.module);
        let mut scene = SceneState::new(box_pose, sc.box_dims, sc.module, robot, Point3::from(cfg.goal), sc.ground);
        if start.latched {
            // Put the face exactly on the head before gripping.
            let offset = scene.robot.head_position() - scene.module_pose.position;
            let mut pose = scene.box_pose;
            pose.position += offset;
            scene.set_box_pose(pose);
            scene.latch();
        }
        let g = cfg.planner.guess;
        let mut m = Self {
            cfg,
            pcfg: cfg.perception_config(),
            detector: OracleDetector {
                noise: cfg.noise,
                seed: cfg.seed,
            },
            scene,
            phase: if start.latched {
                MissionPhase::Transport
            } else {
                MissionPhase::Search
            },
            phase_since: 0.0,
            command: Command::Hold,
            rgb: VecDeque::new(),
            depth: None,
            estimate: None,
            estimate_time: f64::NEG_INFINITY,
            gait: GaitParams::new(g[0], g[1], g[2]),
            replan_due: true,
            dock: None,
            ticks: BTreeMap::new(),
            rejections: BTreeMap::new(),
            pose_estimates: 0,
            replans: 0,
            latch_attempts: 0,
            robot_csv: String::from(
                "time,phase,com_x,com_y,com_z,heading,head_x,head_y,head_z,box_x,box_y,box_z,latched\n",
            ),
            poses_csv: String::from(
                "time,est_x,est_y,est_z,true_x,true_y,true_z,est_nx,est_ny,est_nz,true_nx,true_ny,true_nz,position_error,normal_error_deg\n",
            ),
            phases_csv: String::from("time,from,to,reason\n"),
            planner_csv: String::from(
                "time,amplitude,frequency,phase_offset,cost,residual,iterations,converged,feasible\n",
            ),
            model,
        };
        let _ = writeln!(m.phases_csv, "0,,{},start", m.phase);
        Ok(m)
    }

    fn dt(&self) -> f64 {
        1.0 / self.cfg.schedule.control
    }

    fn still(&self) -> GaitParams {
        GaitParams::still(self.gait.frequency)
    }

    fn set_phase(&mut self, next: MissionPhase, t: f64, reason: &str) {
        assert!(
            self.phase.can_transition_to(next),
            "illegal transition {} -> {next}",
            self.phase
        );
        log::info!("t={t:.3} {} -> {next} ({reason})", self.phase);
        let _ = writeln!(self.phases_csv, "{t},{},{next},{reason}", self.phase);
        self.phase = next;
        self.phase_since = t;
    }

    fn on_control(&mut self, k: u64, t: f64) {
        if k > 0 {
            let robot = &self.scene.robot;
            let next = match self.command {
                Command::Gait(params, turn) => self.model.step_state(robot, &params, turn, self.dt()),
                Command::Hold => Ok(SnakeState {
                    time: robot.time + self.dt(),
                    ..robot.clone()
                }),
            };
            match next {
                Ok(s) => self.scene.set_robot(s),
                Err(e) => {
                    log::warn!("t={t:.3} step rejected: {e}");
                    let mut s = self.scene.robot.clone();
                    s.time += self.dt();
                    self.scene.set_robot(s);
                }
            }
        }
        *self.ticks.entry(self.phase).or_default() += 1;
        self.decide(t);
        self.log_robot(t);
    }

    fn log_robot(&mut self, t: f64) {
        let r = &self.scene.robot;
        let com = compute_com(r);
        let head = r.head_position();
        let b = self.scene.box_pose.position;
        let _ = writeln!(
            self.robot_csv,
            "{t},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.phase,
            com.x,
            com.y,
            com.z,
            r.heading,
            head.x,
            head.y,
            head.z,
            b.x,
            b.y,
            b.z,
            u8::from(self.scene.is_latched())
        );
    }

    fn decide(&mut self, t: f64) {
        for _ in 0..MissionPhase::ALL.len() {
            let before = self.phase;
            match self.phase {
                MissionPhase::Search => self.search(t),
                MissionPhase::Approach => self.approach(t),
                MissionPhase::Docking | MissionPhase::Reposition => self.docking(t),
                MissionPhase::Transport => self.transport(t),
                MissionPhase::Done => {
                    if self.scene.is_latched() {
                        self.scene.unlatch();
                        let _ = writeln!(self.phases_csv, "{t},DONE,DONE,{}", PhaseKind::Unlatch);
                    }
                    self.command = Command::Hold;
                }
            }
            if self.phase == before {
                break;
            }
        }
    }

    fn search(&mut self, t: f64) {
        if self.estimate_time >= self.phase_since {
            self.replan_due = true;
            self.set_phase(MissionPhase::Approach, t, "target detected");
            return;
        }
        self.command = Command::Gait(self.still(), self.cfg.mission.search_turn_rate);
    }

    /// Heading servo toward a travel direction; turns in place on large errors.
    fn steer(&self, travel: f64, gait: GaitParams) -> (Command, f64) {
        let tune = &self.cfg.mission;
        let target_heading = travel - self.model.desc.drift_angle;
        let err = wrap_angle(target_heading - self.scene.robot.heading);
        let turn = (tune.heading_gain * err).clamp(-tune.max_turn_rate, tune.max_turn_rate);
        let cmd = if err.abs() > tune.turn_in_place {
            Command::Gait(self.still(), turn)
        } else {
            Command::Gait(gait, turn)
        };
        (cmd, target_heading)
    }

    fn approach(&mut self, t: f64) {
        let tune = self.cfg.mission;
        let est = match self.estimate {
            Some(e) if t - self.estimate_time <= tune.lost_timeout => e,
            _ => {
                // A stale estimate must not seed the sign of the next one.
                self.estimate = None;
                self.set_phase(MissionPhase::Search, t, "target lost");
                return;
            }
        };
        let robot = &self.scene.robot;
        let head = robot.head_position();
        let to_head = horizontal(&(head - est.position));
        let dist = to_head.norm();
        let normal = horizontal(&est.z_axis());
        let bearing = if dist > 0.0 { angle_between(&normal, &to_head) } else { 0.0 };
        let travel_now = robot.heading + self.model.desc.drift_angle;
        let travel_now = Vec3::new(travel_now.cos(), travel_now.sin(), 0.0);
        let aligned = angle_between(&travel_now, &-normal) < tune.dock_heading;
        if dist < tune.dock_distance && bearing < tune.dock_angle && aligned {
            self.dock = Some(DockStage::Settle {
                since: t,
                attempted: f64::NEG_INFINITY,
            });
            self.set_phase(MissionPhase::Docking, t, "inside docking envelope");
            return;
        }
        let (travel, aim) = if dist > tune.far_field || normal.norm() < 1e-6 {
            let aim = est.position + to_head / dist.max(1e-12) * tune.standoff;
            let to_aim = horizontal(&(aim - head));
            (to_aim.y.atan2(to_aim.x), aim)
        } else {
            // Follow the face normal line, cutting in by the cross-track error.
            let n = normal.normalize();
            let along = to_head.dot(&n);
            let cross = n.x * to_head.y - n.y * to_head.x;
            let inward = (-n.y).atan2(-n.x);
            let cut = (tune.cross_track_gain * cross).atan().clamp(-tune.max_cut, tune.max_cut);
            let aim = est.position + n * tune.standoff.max(along - 0.3);
            (wrap_angle(inward + cut), aim)
        };
        let (cmd, target_heading) = self.steer(travel, self.gait);
        if self.replan_due {
            self.replan_due = false;
            let com = compute_com(robot);
            let com_target = aim - (head - com);
            self.replan(t, com, target_heading, com_target);
        }
        self.command = match cmd {
            Command::Gait(g, turn) if g.amplitude > 0.0 => Command::Gait(self.gait, turn),
            c => c,
        };
    }

    fn replan(&mut self, t: f64, com: Point3, heading: f64, target: Point3) {
        let p = &self.cfg.planner;
        let guess = GaitParams::new(p.guess[0], p.guess[1], p.guess[2]);
        let problem = PlanProblem::straight_line(
            Point3::new(com.x, com.y, 0.0),
            heading,
            Point3::new(target.x, target.y, 0.0),
            p.waypoints,
            p.step,
            &guess,
            &p.bounds,
            self.model.desc.displacement_gain,
            self.model.desc.drift_angle,
        );
        let problem = match problem {
            Ok(pr) => pr,
            Err(e) => {
                log::warn!("t={t:.3} plan problem rejected: {e}");
                return;
            }
        };
        let (solution, feasible) = match solve(&problem, &p.solver) {
            Ok(s) => (s, true),
            Err(PlanError::Infeasible { solution, .. }) => (*solution, false),
            Err(e) => {
                log::warn!("t={t:.3} planner failed: {e}");
                return;
            }
        };
        self.replans += 1;
        let planned = problem.gait(&solution.x_star);
        // A target behind the head plans a standstill; keep crawling instead.
        self.gait = if planned.amplitude < 0.1 * guess.amplitude {
            guess
        } else {
            planned
        };
        let _ = writeln!(
            self.planner_csv,
            "{t},{},{},{},{},{},{},{},{}",
            planned.amplitude,
            planned.frequency,
            planned.phase_offset,
            solution.cost,
            solution.constraint_residual,
            solution.iterations,
            u8::from(solution.converged),
            u8::from(feasible)
        );
    }

    fn docking(&mut self, t: f64) {
        let Some(stage) = self.dock.take() else {
            self.dock = Some(DockStage::Settle {
                since: t,
                attempted: f64::NEG_INFINITY,
            });
            return self.docking(t);
        };
        match stage {
            DockStage::Settle { since, attempted } => {
                self.command = Command::Gait(self.still(), 0.0);
                let fresh = self.estimate_time >= since + self.cfg.mission.settle_time
                    && self.estimate_time > attempted;
                if let (true, Some(est)) = (fresh, self.estimate) {
                    match make_docking_script(&est, &self.scene.robot, &self.model, &self.cfg.docking) {
                        Ok(script) => {
                            self.dock = Some(DockStage::Script {
                                script,
                                index: 0,
                                issued: 0,
                            });
                            return self.docking(t);
                        }
                        Err(e) => log::info!("t={t:.3} docking script refused: {e}"),
                    }
                }
                self.dock = Some(DockStage::Settle {
                    since,
                    attempted: if fresh { self.estimate_time } else { attempted },
                });
            }
            DockStage::Script {
                script,
                mut index,
                mut issued,
            } => {
                while index < script.phases.len() {
                    let phase = script.phases[index];
                    if issued == 0 && phase.kind == PhaseKind::Latch && !self.try_latch(t) {
                        self.dock = Some(DockStage::Settle {
                            since: t,
                            attempted: f64::NEG_INFINITY,
                        });
                        self.command = Command::Gait(self.still(), 0.0);
                        return;
                    }
                    if phase.kind == PhaseKind::Unlatch {
                        // The box stays gripped through transport.
                        break;
                    }
                    if issued < phase.steps {
                        issued += 1;
                        self.command = match phase.action {
                            PhaseAction::Gait { params, turn_rate } => Command::Gait(params, turn_rate),
                            _ => Command::Hold,
                        };
                        self.dock = Some(DockStage::Script {
                            script,
                            index,
                            issued,
                        });
                        return;
                    }
                    index += 1;
                    issued = 0;
                    match phase.kind {
                        PhaseKind::Latch => self.set_phase(MissionPhase::Reposition, t, "latched"),
                        PhaseKind::Reposition => {
                            self.dock = None;
                            self.set_phase(MissionPhase::Transport, t, "box placed");
                            return;
                        }
                        _ => {}
                    }
                }
                self.dock = None;
                if self.phase == MissionPhase::Reposition {
                    self.set_phase(MissionPhase::Transport, t, "box placed");
                }
            }
        }
    }

    /// Engages the latch against the true module pose.
    fn try_latch(&mut self, t: f64) -> bool {
        self.latch_attempts += 1;
        let d = &self.cfg.docking;
        let module = self.scene.module_pose;
        let head = self.scene.robot.head_position();
        let offset = horizontal(&(head - module.position)).norm();
        let travel = self.scene.robot.heading + self.model.desc.drift_angle;
        let travel = Vec3::new(travel.cos(), travel.sin(), 0.0);
        let angle = angle_between(&travel, &-horizontal(&module.z_axis()));
        let ok = offset < d.latch_distance && angle < d.latch_angle;
        log::info!(
            "t={t:.3} latch {}: offset {offset:.4} m, approach angle {:.2} deg",
            if ok { "engaged" } else { "missed" },
            angle.to_degrees()
        );
        if ok {
            self.scene.latch();
        }
        ok
    }

    fn transport(&mut self, t: f64) {
        let tune = self.cfg.mission;
        let error = self.scene.box_error();
        if error < self.cfg.goal_tolerance {
            self.set_phase(MissionPhase::Done, t, "box at goal");
            self.command = Command::Hold;
            return;
        }
        let to_goal = horizontal(&(self.scene.goal - self.scene.box_pose.position));
        let scale = (to_goal.norm() / 0.3).clamp(0.3, 1.0);
        let gait = GaitParams::new(
            tune.transport_amplitude * scale,
            tune.transport_frequency,
            tune.phase_offset,
        );
        let (cmd, _) = self.steer(to_goal.y.atan2(to_goal.x), gait);
        self.command = cmd;
    }

    fn on_depth(&mut self, t: f64) {
        let mut camera = head_camera_pose(&self.model, &self.scene.robot);
        camera.timestamp = t;
        let depth = render_depth(&self.scene, &camera, &self.cfg.camera, self.cfg.noise.depth_sigma, self.cfg.seed);
        let believed = self.odometry_pose(&camera);
        self.depth = Some((depth, believed));
    }

    /// Ground-truth camera pose with the configured odometry noise.
    fn odometry_pose(&self, truth: &Pose6DoF) -> Pose6DoF {
        let n = &self.cfg.noise;
        if n.pose_position_sigma == 0.0 && n.pose_rotation_sigma == 0.0 {
            return *truth;
        }
        let mut rng = frame_rng(self.cfg.seed, truth.timestamp, 3);
        let mut draw = |s: f64| {
            let d = Normal::new(0.0, s.max(f64::MIN_POSITIVE)).expect("finite sigma");
            Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng))
        };
        let dp = draw(n.pose_position_sigma);
        let dr = draw(n.pose_rotation_sigma);
        let rotation = if dr.norm() > 0.0 {
            rot_axis_angle(&dr.normalize(), dr.norm()) * truth.rotation
        } else {
            truth.rotation
        };
        Pose6DoF {
            rotation,
            position: truth.position + dp,
            ..*truth
        }
    }

    fn on_rgb(&mut self, t: f64) {
        let mut camera = head_camera_pose(&self.model, &self.scene.robot);
        camera.timestamp = t;
        if self.rgb.len() == RGB_BUFFER {
            self.rgb.pop_front();
        }
        self.rgb.push_back(RgbFrame {
            timestamp: t,
            intrinsics: self.cfg.camera,
            view: Some(SceneView {
                scene: self.scene.clone(),
                camera,
            }),
        });
    }

    fn on_detect(&mut self, t: f64) {
        let Some((depth, camera)) = &self.depth else {
            return;
        };
        // Closest capture time to the depth frame; ties go to the newer frame.
        let Some(rgb) = self
            .rgb
            .iter()
            .rev()
            .min_by(|a, b| {
                (a.timestamp - depth.timestamp)
                    .abs()
                    .total_cmp(&(b.timestamp - depth.timestamp).abs())
            })
        else {
            return;
        };
        match estimate_module_pose(rgb, depth, &mut self.detector, self.estimate.as_ref(), camera, &self.pcfg) {
            Ok(pose) => {
                self.pose_estimates += 1;
                self.estimate = Some(pose);
                self.estimate_time = pose.timestamp;
                let truth = self.scene.module_pose;
                let (e, g) = (pose.position, truth.position);
                let (en, gn) = (pose.z_axis(), truth.z_axis());
                let _ = writeln!(
                    self.poses_csv,
                    "{t},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    e.x,
                    e.y,
                    e.z,
                    g.x,
                    g.y,
                    g.z,
                    en.x,
                    en.y,
                    en.z,
                    gn.x,
                    gn.y,
                    gn.z,
                    (e - g).norm(),
                    angle_between(&en, &gn).to_degrees()
                );
            }
            Err(r) => {
                log::debug!("t={t:.3} no pose: {r}");
                *self.rejections.entry(r.code().to_string()).or_default() += 1;
            }
        }
    }

    fn finish(self, t: f64, outcome: Outcome) -> MissionLog {
        let rate = self.cfg.schedule.control;
        let mut phase_ticks = BTreeMap::new();
        let mut phase_durations = BTreeMap::new();
        for p in MissionPhase::ALL {
            let n = self.ticks.get(&p).copied().unwrap_or(0);
            phase_ticks.insert(p.name().to_string(), n);
            phase_durations.insert(p.name().to_string(), n as f64 / rate);
        }
        let b = self.scene.box_pose.position;
        MissionLog {
            summary: MissionSummary {
                scenario: self.cfg.name.clone(),
                seed: self.cfg.seed,
                outcome,
                final_phase: self.phase,
                mission_time: t,
                final_box_error: self.scene.box_error(),
                final_box_position: [b.x, b.y, b.z],
                goal: self.cfg.goal,
                phase_durations,
                phase_ticks,
                pose_estimates: self.pose_estimates,
                rejections: self.rejections,
                replans: self.replans,
                latch_attempts: self.latch_attempts,
            },
            robot_csv: self.robot_csv,
            poses_csv: self.poses_csv,
            phases_csv: self.phases_csv,
            planner_csv: self.planner_csv,
        }
    }
}

/// Runs the closed-loop mission: sensors and detection at their stream
/// rates, planning at the replan rate, the snake stepped every control tick.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MissionLog, ScenarioError> {
    cfg.validate()?;
    let mut mission = Mission::new(cfg)?;
    let mut now = 0.0;
    for tick in Scheduler::new(&cfg.schedule) {
        if tick.time > cfg.time_budget {
            break;
        }
        now = tick.time;
        match tick.stream {
            Stream::Control => mission.on_control(tick.index, tick.time),
            Stream::Depth => mission.on_depth(tick.time),
            Stream::Rgb => mission.on_rgb(tick.time),
            Stream::Detect => mission.on_detect(tick.time),
            Stream::Replan => mission.replan_due = true,
        }
        if mission.phase == MissionPhase::Done {
            return Ok(mission.finish(now, Outcome::Done));
        }
    }
    let phase = mission.phase;
    Err(ScenarioError::Timeout {
        budget: cfg.time_budget,
        phase,
        log: Box::new(mission.finish(now, Outcome::Timeout)),
    })
}
