use clap::{Parser, Subcommand};
use snakedock::geom::{FrameLabel, Point3};
use snakedock::metrics::{compute_metrics, load_detections, LabeledBox, DEFAULT_IOU_THRESHOLD};
use snakedock::perception::replay::{
    replay_csv, replay_directory, write_depth_bin, write_depth_png, CameraExtrinsics, ReplayFrame,
    ReplayManifest, MANIFEST_NAME,
};
use snakedock::perception::{Detector, OracleDetector, PerceptionConfig, RgbFrame, SceneView};
use snakedock::planner::{solve, PlanError, PlanTask};
use snakedock::sim::{
    box_pose_for_face, default_camera, head_camera_pose, render_depth, run_scenario, BoxDims, ModuleDims,
    ScenarioConfig, ScenarioError, SceneState,
};
use snakedock::snake::{RobotDescription, SnakeModel, JOINT_COUNT};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "snakedock", version, about = "Simulated snake-robot docking and transport")]
struct Cli {
    /// Override the random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for logs and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Depth noise standard deviation in meters.
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full mission and write its logs.
    Run { scenario: PathBuf },
    /// Run the pose pipeline over a recorded frame directory.
    PoseReplay { dir: PathBuf },
    /// Score predictions against ground truth.
    Eval {
        gt: PathBuf,
        pred: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou_threshold: f64,
    },
    /// Solve a straight-line tracking problem and print the solver trace.
    Plan { problem: PathBuf },
    /// Render a fixed scene and dump it as a replay directory.
    RenderTest,
}

enum Failure {
    /// The task ran but did not succeed.
    Run(String),
    /// Bad input or configuration.
    Config(String),
}

fn config(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| config(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    let result = match &cli.command {
        Command::Run { scenario } => run(&cli, scenario),
        Command::PoseReplay { dir } => pose_replay(&cli, dir),
        Command::Eval { gt, pred, iou_threshold } => eval(gt, pred, *iou_threshold),
        Command::Plan { problem } => plan(&cli, problem),
        Command::RenderTest => render_test(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli, scenario: &Path) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(scenario).map_err(config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(sigma) = cli.noise {
        cfg.noise.depth_sigma = sigma;
    }
    cfg.validate().map_err(config)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let (log, failure) = match run_scenario(&cfg) {
        Ok(log) => (log, None),
        Err(ScenarioError::Config(e)) => return Err(config(e)),
        Err(ScenarioError::Timeout { budget, phase, log }) => {
            (*log, Some(format!("time budget of {budget} s exhausted in {phase}")))
        }
    };
    log.write_to(&out).map_err(|e| config(format!("{}: {e}", out.display())))?;
    println!("{}", log.summary_json());
    match failure {
        Some(msg) => Err(Failure::Run(msg)),
        None => Ok(()),
    }
}

fn pose_replay(cli: &Cli, dir: &Path) -> Result<(), Failure> {
    let records = replay_directory(dir, &PerceptionConfig::default()).map_err(config)?;
    let csv = replay_csv(&records);
    match &cli.out {
        Some(out) => write_file(&out.join("poses.csv"), &csv)?,
        None => print!("{csv}"),
    }
    let found = records.iter().filter(|r| r.pose.is_ok()).count();
    log::info!("{found} of {} frames produced a pose", records.len());
    Ok(())
}

fn eval(gt: &Path, pred: &Path, iou_threshold: f64) -> Result<(), Failure> {
    let gt = load_detections(gt).map_err(config)?;
    let pred = load_detections(pred).map_err(config)?;
    let report = compute_metrics(&gt, &pred, iou_threshold).map_err(config)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn plan(cli: &Cli, problem: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(problem).map_err(|e| config(format!("{}: {e}", problem.display())))?;
    let mut task = PlanTask::from_toml_str(&text).map_err(config)?;
    task.solver.record_trace = true;
    let p = task.problem().map_err(config)?;
    let (solution, failure) = match solve(&p, &task.solver) {
        Ok(s) => (s, None),
        Err(PlanError::Infeasible { residual, solution }) => {
            (*solution, Some(format!("constraint residual {residual:e} above tolerance")))
        }
        Err(e) => return Err(config(e)),
    };
    let csv = solution.trace_csv();
    let gait = p.gait(&solution.x_star);
    let waypoints: Vec<[f64; 2]> = (0..task.waypoints)
        .map(|i| {
            let w = p.waypoint(&solution.x_star, i);
            [w.x, w.y]
        })
        .collect();
    let summary = serde_json::json!({
        "amplitude": gait.amplitude,
        "frequency": gait.frequency,
        "phase_offset": gait.phase_offset,
        "waypoints": waypoints,
        "cost": solution.cost,
        "constraint_residual": solution.constraint_residual,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "feasible": failure.is_none(),
    });
    match &cli.out {
        Some(out) => {
            write_file(&out.join("trace.csv"), &csv)?;
            write_file(&out.join("plan.json"), &serde_json::to_string_pretty(&summary).expect("json"))?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
        }
        None => print!("{csv}"),
    }
    match failure {
        Some(msg) => Err(Failure::Run(msg)),
        None => Ok(()),
    }
}

fn render_test(cli: &Cli) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    let sigma = cli.noise.unwrap_or(0.0);
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(config("noise must be a finite, nonnegative sigma"));
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out").join("render-test"));
    std::fs::create_dir_all(&out).map_err(|e| config(format!("{}: {e}", out.display())))?;

    let model = SnakeModel::new(RobotDescription::default()).expect("default robot is valid");
    let robot = model
        .state_at(&Point3::origin(), -std::f64::consts::FRAC_PI_2, &[0.0; JOINT_COUNT], 0.0)
        .expect("straight pose is valid");
    let dims = BoxDims::default();
    let md = ModuleDims::default();
    let head = robot.head_position();
    let face = Point3::new(head.x + 1.5, head.y + 0.1, dims.height / 2.0);
    let box_pose = box_pose_for_face(&face, std::f64::consts::PI - 0.2, &dims, &md);
    let scene = SceneState::new(box_pose, dims, md, robot, Point3::origin(), true);
    let intrinsics = default_camera();
    let mut detector = OracleDetector {
        noise: snakedock::perception::NoiseSpec {
            depth_sigma: sigma,
            ..Default::default()
        },
        seed,
    };

    let mut frames = Vec::new();
    let mut labeled: Vec<LabeledBox> = Vec::new();
    let mut stats = Vec::new();
    for (i, ext) in ["png", "bin"].into_iter().enumerate() {
        let t = i as f64 / 15.0;
        let mut camera = head_camera_pose(&model, &scene.robot);
        camera.timestamp = t;
        debug_assert_eq!(camera.frame, FrameLabel::World);
        let depth = render_depth(&scene, &camera, &intrinsics, sigma, seed);
        let name = format!("depth_{i:04}.{ext}");
        let path = out.join(&name);
        if ext == "png" {
            write_depth_png(&path, &depth).map_err(config)?;
        } else {
            write_depth_bin(&path, &depth).map_err(config)?;
        }
        let rgb = RgbFrame {
            timestamp: t,
            intrinsics,
            view: Some(SceneView {
                scene: scene.clone(),
                camera,
            }),
        };
        for b in detector.detect(&rgb).boxes {
            labeled.push(LabeledBox {
                image_id: i as u64,
                class: b.class_id,
                bbox: b.coords(),
                confidence: b.confidence,
            });
        }
        let valid: Vec<f64> = depth.data.iter().zip(&depth.valid).filter(|(_, v)| **v).map(|(d, _)| *d).collect();
        stats.push(serde_json::json!({
            "file": name,
            "valid_pixels": valid.len(),
            "min_depth": valid.iter().copied().fold(f64::INFINITY, f64::min),
            "max_depth": valid.iter().copied().fold(0.0, f64::max),
            "center_depth": depth.depth(intrinsics.width / 2, intrinsics.height / 2),
        }));
        frames.push(ReplayFrame {
            image_id: i as u64,
            timestamp: t,
            rgb_timestamp: None,
            depth: name,
            camera: Some(CameraExtrinsics::from_pose(&camera)),
        });
    }
    let manifest = ReplayManifest {
        intrinsics,
        detections: "detections.json".into(),
        frames,
    };
    write_file(&out.join(MANIFEST_NAME), &serde_json::to_string_pretty(&manifest).expect("json"))?;
    write_file(&out.join("detections.json"), &serde_json::to_string_pretty(&labeled).expect("json"))?;
    let m = scene.module_pose;
    let n = m.z_axis();
    let summary = serde_json::json!({
        "seed": seed,
        "depth_sigma": sigma,
        "module_position": [m.position.x, m.position.y, m.position.z],
        "module_normal": [n.x, n.y, n.z],
        "frames": stats,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}
