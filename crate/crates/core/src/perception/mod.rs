//! Detection interface, ROI depth extraction and the module pose pipeline.

mod oracle;
mod pipeline;
pub mod replay;

pub use oracle::{oracle_detect, NoiseSpec, OracleDetector};
pub use pipeline::{estimate_module_pose, extract_roi_depth, select_candidate, PoseRejection};

use crate::geom::{CameraIntrinsics, OrientationMode, PixelRect, Pose6DoF};
use crate::sim::SceneState;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassId {
    Box,
    DockingModule,
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Box => "box",
            Self::DockingModule => "docking_module",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoxError {
    #[error("degenerate box [{0}, {1}, {2}, {3}]")]
    Degenerate(f64, f64, f64, f64),
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("box exceeds {width}x{height} image")]
    OutOfImage { width: usize, height: usize },
}

/// Axis-aligned pixel box. A pixel `(u, v)` belongs to it when
/// `u_min ≤ u < u_max` and `v_min ≤ v < v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub class_id: ClassId,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(
        coords: [f64; 4],
        class_id: ClassId,
        confidence: f64,
    ) -> Result<Self, BoxError> {
        let [u_min, v_min, u_max, v_max] = coords;
        if !(u_min < u_max && v_min < v_max) || coords.iter().any(|c| !c.is_finite()) {
            return Err(BoxError::Degenerate(u_min, v_min, u_max, v_max));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(BoxError::Confidence(confidence));
        }
        Ok(Self {
            u_min,
            v_min,
            u_max,
            v_max,
            class_id,
            confidence,
        })
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.u_min, self.v_min, self.u_max, self.v_max]
    }

    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min).max(0.0) * (self.v_max - self.v_min).max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.u_min + self.u_max) / 2.0, (self.v_min + self.v_max) / 2.0)
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.u_min >= 0.0 && self.v_min >= 0.0 && self.u_max <= width as f64 && self.v_max <= height as f64
    }

    /// Box clipped to the image, or `None` if nothing remains.
    pub fn clipped(&self, width: usize, height: usize) -> Option<Self> {
        let b = Self {
            u_min: self.u_min.max(0.0),
            v_min: self.v_min.max(0.0),
            u_max: self.u_max.min(width as f64),
            v_max: self.v_max.min(height as f64),
            ..*self
        };
        (b.u_min < b.u_max && b.v_min < b.v_max).then_some(b)
    }

    /// Pixels covered after moving each side inward by `shrink` of the
    /// extent along that axis.
    pub fn pixel_rect(&self, shrink: f64) -> PixelRect {
        let du = shrink * (self.u_max - self.u_min);
        let dv = shrink * (self.v_max - self.v_min);
        let u0 = (self.u_min + du).ceil().max(0.0) as usize;
        let u1 = (self.u_max - du).ceil().max(0.0) as usize;
        let v0 = (self.v_min + dv).ceil().max(0.0) as usize;
        let v1 = (self.v_max - dv).ceil().max(0.0) as usize;
        PixelRect {
            u0,
            v0,
            width: u1.saturating_sub(u0),
            height: v1.saturating_sub(v0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Detection {
    pub boxes: Vec<BoundingBox>,
    pub timestamp: f64,
}

/// Geometry an RGB frame was rendered from, used by the oracle detector.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneView {
    pub scene: SceneState,
    pub camera: Pose6DoF,
}

/// RGB frame. Pixel content is not simulated; a synthetic frame carries the
/// scene view it was captured from instead.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    pub view: Option<SceneView>,
}

pub trait Detector {
    fn detect(&mut self, rgb: &RgbFrame) -> Detection;
}

/// Detector that replays a fixed detection list, matched by timestamp.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    pub detections: Vec<Detection>,
}

impl Detector for ReplayDetector {
    fn detect(&mut self, rgb: &RgbFrame) -> Detection {
        self.detections
            .iter()
            .find(|d| d.timestamp == rgb.timestamp)
            .cloned()
            .unwrap_or(Detection {
                boxes: Vec::new(),
                timestamp: rgb.timestamp,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    pub rgb_rate: f64,
    pub depth_rate: f64,
    pub detect_rate: f64,
    pub min_confidence: f64,
    pub roi_shrink: f64,
    pub orientation: OrientationMode,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            rgb_rate: 30.0,
            depth_rate: 15.0,
            detect_rate: 10.0,
            min_confidence: 0.5,
            roi_shrink: 0.1,
            orientation: OrientationMode::PointPca,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [
            ("rgb_rate", self.rgb_rate),
            ("depth_rate", self.depth_rate),
            ("detect_rate", self.detect_rate),
        ] {
            if !(r > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.detect_rate > self.rgb_rate {
            return Err("detect_rate must not exceed rgb_rate".into());
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err("min_confidence must be in [0, 1]".into());
        }
        if !(0.0..0.5).contains(&self.roi_shrink) {
            return Err("roi_shrink must be in [0, 0.5)".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(c: [f64; 4]) -> BoundingBox {
        BoundingBox::new(c, ClassId::DockingModule, 0.9).unwrap()
    }

    #[test]
    fn pixel_rect_shrink() {
        let r = bb([10.0, 20.0, 110.0, 120.0]).pixel_rect(0.1);
        assert_eq!((r.u0, r.v0, r.width, r.height), (20, 30, 80, 80));
        let r = bb([10.0, 20.0, 110.0, 120.0]).pixel_rect(0.0);
        assert_eq!((r.u0, r.v0, r.width, r.height), (10, 20, 100, 100));
        let r = bb([10.2, 20.5, 10.9, 21.5]).pixel_rect(0.0);
        assert_eq!((r.width, r.height), (0, 1));
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::new([5.0, 0.0, 5.0, 1.0], ClassId::Box, 0.5).is_err());
        assert!(BoundingBox::new([0.0, 0.0, 1.0, 1.0], ClassId::Box, 1.5).is_err());
        let b = bb([-3.0, 2.0, 50.0, 500.0]);
        assert!(!b.within(320, 240));
        let c = b.clipped(320, 240).unwrap();
        assert_eq!(c.coords(), [0.0, 2.0, 50.0, 240.0]);
        assert!(bb([400.0, 0.0, 410.0, 5.0]).clipped(320, 240).is_none());
    }

    #[test]
    fn class_serialization() {
        assert_eq!(serde_json::to_string(&ClassId::DockingModule).unwrap(), "\"docking_module\"");
        assert_eq!(serde_json::from_str::<ClassId>("\"box\"").unwrap(), ClassId::Box);
    }

    #[test]
    fn config_validation() {
        assert!(PerceptionConfig::default().validate().is_ok());
        let bad = PerceptionConfig {
            detect_rate: 40.0,
            ..PerceptionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
