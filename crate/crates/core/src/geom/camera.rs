use super::{GeomError, Point3};
use serde::{Deserialize, Serialize};

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeomError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let bad = |m: &str| Err(GeomError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fx.is_finite()) {
            return bad("fx must be positive");
        }
        if !(self.fy > 0.0 && self.fy.is_finite()) {
            return bad("fy must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be nonzero");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx must lie in [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy must lie in [0, height)");
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Forward pinhole model: camera-frame point to `(u, v, depth)`.
    pub fn project(&self, p: &Point3) -> (f64, f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        )
    }
}

/// Back-projects a pixel with known z-depth into the camera frame.
pub fn project_pixel(u: f64, v: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3, GeomError> {
    if !(depth > 0.0) {
        return Err(GeomError::NonPositiveDepth(depth));
    }
    if !k.contains(u, v) {
        return Err(GeomError::OutOfBounds {
            u,
            v,
            width: k.width,
            height: k.height,
        });
    }
    Ok(Point3::new(
        (u - k.cx) * depth / k.fx,
        (v - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Integer pixel rectangle `[u0, u0 + width) x [v0, v0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub u0: usize,
    pub v0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

/// Row-major depth image with validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
}

impl DepthFrame {
    /// Builds a frame from raw depths; entries `<= 0` or non-finite become invalid.
    pub fn from_depths(
        mut data: Vec<f64>,
        timestamp: f64,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, GeomError> {
        if data.len() != intrinsics.width * intrinsics.height {
            return Err(GeomError::InvalidFrame(format!(
                "expected {} depth values, got {}",
                intrinsics.width * intrinsics.height,
                data.len()
            )));
        }
        let valid: Vec<bool> = data.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        for (d, ok) in data.iter_mut().zip(&valid) {
            if !ok {
                *d = 0.0;
            }
        }
        Ok(Self {
            data,
            valid,
            timestamp,
            intrinsics,
        })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn depth(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width() + u;
        self.valid[i].then(|| self.data[i])
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect {
            u0: 0,
            v0: 0,
            width: self.width(),
            height: self.height(),
        }
    }

    /// Copies a sub-rectangle. The rectangle is clipped to the image.
    pub fn crop(&self, rect: PixelRect) -> DepthRoi {
        let u1 = (rect.u0 + rect.width).min(self.width());
        let v1 = (rect.v0 + rect.height).min(self.height());
        let u0 = rect.u0.min(u1);
        let v0 = rect.v0.min(v1);
        let rect = PixelRect {
            u0,
            v0,
            width: u1 - u0,
            height: v1 - v0,
        };
        let mut data = Vec::with_capacity(rect.area());
        let mut valid = Vec::with_capacity(rect.area());
        for v in v0..v1 {
            let row = v * self.width();
            data.extend_from_slice(&self.data[row + u0..row + u1]);
            valid.extend_from_slice(&self.valid[row + u0..row + u1]);
        }
        DepthRoi {
            rect,
            data,
            valid,
            timestamp: self.timestamp,
        }
    }
}

/// A rectangular window of a [`DepthFrame`], keeping absolute pixel offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRoi {
    pub rect: PixelRect,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
    pub timestamp: f64,
}

impl DepthRoi {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Depth at ROI-local coordinates.
    pub fn depth(&self, i: usize, j: usize) -> Option<f64> {
        let idx = j * self.rect.width + i;
        self.valid[idx].then(|| self.data[idx])
    }
}
