//! Recorded-frame input: depth images plus a JSON sidecar and detections.
//!
//! A replay directory holds `frames.json`, one depth file per frame and a
//! detections file in the interchange format. Depth files are either 16-bit
//! grayscale PNG in millimeters (`.png`, 0 = no return) or raw row-major
//! little-endian `f32` meters (`.bin`, values ≤ 0 or non-finite = no return).

use super::{estimate_module_pose, Detection, PerceptionConfig, PoseRejection, ReplayDetector, RgbFrame};
use crate::geom::{CameraIntrinsics, DepthFrame, FrameLabel, Mat3, Point3, Pose6DoF};
use crate::metrics::LabeledBox;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_NAME: &str = "frames.json";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReplayError + '_ {
    move |source| ReplayError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl ToString) -> ReplayError {
    ReplayError::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// World pose of the camera for one frame. `rotation` is given row by row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraExtrinsics {
    pub position: [f64; 3],
    pub rotation: [[f64; 3]; 3],
}

impl CameraExtrinsics {
    pub fn from_pose(pose: &Pose6DoF) -> Self {
        let r = &pose.rotation;
        Self {
            position: pose.position.coords.into(),
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
        }
    }

    pub fn to_pose(&self, timestamp: f64) -> Result<Pose6DoF, crate::geom::GeomError> {
        let r = self.rotation;
        Pose6DoF::new(
            Mat3::from_fn(|i, j| r[i][j]),
            Point3::from(self.position),
            FrameLabel::World,
            timestamp,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayFrame {
    pub image_id: u64,
    /// Depth capture time, seconds.
    pub timestamp: f64,
    /// RGB capture time when it differs from the depth time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb_timestamp: Option<f64>,
    /// Depth file name relative to the replay directory.
    pub depth: String,
    /// Camera pose in the world; without it poses come out in the camera's
    /// own coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraExtrinsics>,
}

fn default_detections() -> String {
    "detections.json".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayManifest {
    pub intrinsics: CameraIntrinsics,
    #[serde(default = "default_detections")]
    pub detections: String,
    pub frames: Vec<ReplayFrame>,
}

impl ReplayManifest {
    pub fn load(dir: &Path) -> Result<Self, ReplayError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| format_err(&path, e))?;
        m.intrinsics.validate().map_err(|e| format_err(&path, format!("intrinsics: {e}")))?;
        Ok(m)
    }
}

pub fn write_depth_png(path: &Path, frame: &DepthFrame) -> Result<(), ReplayError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frame.width() as u32, frame.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut bytes = Vec::with_capacity(frame.data.len() * 2);
    for (d, ok) in frame.data.iter().zip(&frame.valid) {
        let mm = if *ok { (d * 1000.0).round().clamp(1.0, f64::from(u16::MAX)) as u16 } else { 0 };
        bytes.extend_from_slice(&mm.to_be_bytes());
    }
    let mut w = enc.write_header().map_err(|e| format_err(path, e))?;
    w.write_image_data(&bytes).map_err(|e| format_err(path, e))?;
    w.finish().map_err(|e| format_err(path, e))
}

pub fn read_depth_png(path: &Path, intrinsics: CameraIntrinsics, timestamp: f64) -> Result<DepthFrame, ReplayError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = png::Decoder::new(BufReader::new(file))
        .read_info()
        .map_err(|e| format_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| format_err(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| format_err(path, e))?;
    if (info.color_type, info.bit_depth) != (png::ColorType::Grayscale, png::BitDepth::Sixteen) {
        return Err(format_err(path, "expected 16-bit grayscale"));
    }
    if (info.width as usize, info.height as usize) != (intrinsics.width, intrinsics.height) {
        return Err(format_err(
            path,
            format!("image is {}x{}, intrinsics say {}x{}", info.width, info.height, intrinsics.width, intrinsics.height),
        ));
    }
    let data = buf[..info.line_size * info.height as usize]
        .chunks_exact(2)
        .map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / 1000.0)
        .collect();
    DepthFrame::from_depths(data, timestamp, intrinsics).map_err(|e| format_err(path, e))
}

pub fn write_depth_bin(path: &Path, frame: &DepthFrame) -> Result<(), ReplayError> {
    let bytes: Vec<u8> = frame
        .data
        .iter()
        .zip(&frame.valid)
        .flat_map(|(d, ok)| (if *ok { *d as f32 } else { 0.0 }).to_le_bytes())
        .collect();
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_depth_bin(path: &Path, intrinsics: CameraIntrinsics, timestamp: f64) -> Result<DepthFrame, ReplayError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 4 * intrinsics.width * intrinsics.height {
        return Err(format_err(
            path,
            format!("expected {} bytes, found {}", 4 * intrinsics.width * intrinsics.height, bytes.len()),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    DepthFrame::from_depths(data, timestamp, intrinsics).map_err(|e| format_err(path, e))
}

/// Reads a depth file, choosing the format by extension.
pub fn read_depth(path: &Path, intrinsics: CameraIntrinsics, timestamp: f64) -> Result<DepthFrame, ReplayError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_depth_png(path, intrinsics, timestamp),
        Some("bin") => read_depth_bin(path, intrinsics, timestamp),
        _ => Err(format_err(path, "depth files must end in .png or .bin")),
    }
}

/// Pose estimate, or the reason there is none, for one replayed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub image_id: u64,
    pub timestamp: f64,
    pub pose: Result<Pose6DoF, PoseRejection>,
}

/// Runs the pose pipeline over every frame of a replay directory in order.
pub fn replay_directory(dir: &Path, cfg: &PerceptionConfig) -> Result<Vec<ReplayRecord>, ReplayError> {
    let manifest = ReplayManifest::load(dir)?;
    let det_path = dir.join(&manifest.detections);
    let text = std::fs::read_to_string(&det_path).map_err(io_err(&det_path))?;
    let labeled: Vec<LabeledBox> = serde_json::from_str(&text).map_err(|e| format_err(&det_path, e))?;

    let mut detections = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let rgb_time = f.rgb_timestamp.unwrap_or(f.timestamp);
        let mut boxes = Vec::new();
        for (i, l) in labeled.iter().enumerate().filter(|(_, l)| l.image_id == f.image_id) {
            boxes.push(l.to_box().map_err(|e| format_err(&det_path, format!("record {i}: {e}")))?);
        }
        detections.push(Detection {
            boxes,
            timestamp: rgb_time,
        });
    }
    let mut detector = ReplayDetector { detections };

    let mut previous: Option<Pose6DoF> = None;
    let mut out = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let depth = read_depth(&dir.join(&f.depth), manifest.intrinsics, f.timestamp)?;
        let camera = match &f.camera {
            Some(c) => c
                .to_pose(f.timestamp)
                .map_err(|e| format_err(&dir.join(MANIFEST_NAME), format!("frame {}: camera: {e}", f.image_id)))?,
            None => Pose6DoF {
                timestamp: f.timestamp,
                ..Pose6DoF::identity(FrameLabel::World)
            },
        };
        let rgb = RgbFrame {
            timestamp: f.rgb_timestamp.unwrap_or(f.timestamp),
            intrinsics: manifest.intrinsics,
            view: None,
        };
        let pose = estimate_module_pose(&rgb, &depth, &mut detector, previous.as_ref(), &camera, cfg);
        if let Ok(p) = &pose {
            previous = Some(*p);
        }
        out.push(ReplayRecord {
            image_id: f.image_id,
            timestamp: f.timestamp,
            pose,
        });
    }
    Ok(out)
}

/// One CSV row per frame; rejected frames carry the rejection code.
pub fn replay_csv(records: &[ReplayRecord]) -> String {
    let mut s = String::from("image_id,timestamp,status,x,y,z,nx,ny,nz\n");
    for r in records {
        let _ = match &r.pose {
            Ok(p) => {
                let n = p.z_axis();
                writeln!(
                    s,
                    "{},{},ok,{},{},{},{},{},{}",
                    r.image_id, r.timestamp, p.position.x, p.position.y, p.position.z, n.x, n.y, n.z
                )
            }
            Err(e) => writeln!(s, "{},{},{},,,,,,", r.image_id, r.timestamp, e.code()),
        };
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{oracle_detect, ClassId, NoiseSpec};
    use crate::sim::{box_pose_for_face, render_depth, BoxDims, ModuleDims, SceneState};
    use crate::snake::{RobotDescription, SnakeModel};
    use rand::SeedableRng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn sample_frame() -> DepthFrame {
        let n = 320 * 240;
        let data = (0..n).map(|i| if i % 7 == 0 { 0.0 } else { 0.5 + (i % 300) as f64 * 0.01 }).collect();
        DepthFrame::from_depths(data, 0.25, k()).unwrap()
    }

    #[test]
    fn png_round_trip_to_millimeters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let f = sample_frame();
        write_depth_png(&path, &f).unwrap();
        let g = read_depth(&path, k(), 0.25).unwrap();
        assert_eq!(g.valid, f.valid);
        assert!(f.data.iter().zip(&g.data).all(|(a, b)| (a - b).abs() <= 0.0005 + 1e-12));
    }

    #[test]
    fn bin_round_trip_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let f = sample_frame();
        write_depth_bin(&path, &f).unwrap();
        let g = read_depth(&path, k(), 0.25).unwrap();
        assert_eq!(g.valid, f.valid);
        assert!(f.data.iter().zip(&g.data).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        std::fs::write(&path, [0u8; 12]).unwrap();
        let err = read_depth(&path, k(), 0.0).unwrap_err();
        assert!(err.to_string().contains("bytes"), "{err}");
        assert!(read_depth(&dir.path().join("d.exr"), k(), 0.0).is_err());
    }

    #[test]
    fn replay_recovers_module_pose() {
        let model = SnakeModel::new(RobotDescription::default()).unwrap();
        let robot = model.state_at(&Point3::origin(), 0.0, &[0.0; 11], 0.0).unwrap();
        let dims = BoxDims::default();
        let md = ModuleDims::default();
        let face = Point3::new(1.0, 0.05, 0.125);
        let scene = SceneState::new(box_pose_for_face(&face, std::f64::consts::PI, &dims, &md), dims, md, robot, Point3::origin(), false);
        // Camera at the origin looking along world +x.
        let cam_rot = Mat3::from_columns(&[
            crate::geom::Vec3::new(0.0, -1.0, 0.0),
            crate::geom::Vec3::new(0.0, 0.0, -1.0),
            crate::geom::Vec3::new(1.0, 0.0, 0.0),
        ]);
        let camera = Pose6DoF::new(cam_rot, Point3::new(0.0, 0.0, 0.12), FrameLabel::World, 0.0).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let mut frames = Vec::new();
        let mut labeled = Vec::new();
        for (i, ext) in ["png", "bin"].iter().enumerate() {
            let t = i as f64 / 15.0;
            let cam = Pose6DoF { timestamp: t, ..camera };
            let depth = render_depth(&scene, &cam, &k(), 0.0, 0);
            let name = format!("depth_{i}.{ext}");
            if *ext == "png" {
                write_depth_png(&dir.path().join(&name), &depth).unwrap();
            } else {
                write_depth_bin(&dir.path().join(&name), &depth).unwrap();
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
            for b in oracle_detect(&scene, &cam, &k(), &NoiseSpec::default(), &mut rng).boxes {
                labeled.push(LabeledBox {
                    image_id: i as u64,
                    class: b.class_id,
                    bbox: b.coords(),
                    confidence: b.confidence,
                });
            }
            frames.push(ReplayFrame {
                image_id: i as u64,
                timestamp: t,
                rgb_timestamp: None,
                depth: name,
                camera: Some(CameraExtrinsics::from_pose(&cam)),
            });
        }
        assert!(labeled.iter().any(|l| l.class == ClassId::DockingModule));
        frames.push(ReplayFrame {
            image_id: 9,
            timestamp: 1.0,
            rgb_timestamp: Some(0.5),
            depth: "depth_0.png".into(),
            camera: None,
        });
        let manifest = ReplayManifest {
            intrinsics: k(),
            detections: default_detections(),
            frames,
        };
        std::fs::write(dir.path().join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        std::fs::write(dir.path().join("detections.json"), serde_json::to_string(&labeled).unwrap()).unwrap();

        let records = replay_directory(dir.path(), &PerceptionConfig::default()).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records[..2] {
            let p = r.pose.as_ref().unwrap();
            assert!((p.position - face).norm() < 0.01, "{:?}", p.position);
            assert!(p.z_axis().x < -0.999);
        }
        assert_eq!(records[2].pose.as_ref().unwrap_err().code(), "unsynchronized");
        let csv = replay_csv(&records);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().starts_with("9,1,unsynchronized"));
    }
}
