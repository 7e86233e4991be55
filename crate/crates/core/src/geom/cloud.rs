use super::{project_pixel, CameraIntrinsics, DepthRoi, GeomError, PixelRect, Point3, Vec3};

/// Point cloud that keeps the pixel grid of the depth window it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedPointCloud {
    pub width: usize,
    pub height: usize,
    /// Row-major, `None` where the source pixel had no depth.
    pub points: Vec<Option<Point3>>,
    pub origin_bbox: PixelRect,
    pub timestamp: f64,
}

impl OrderedPointCloud {
    pub fn get(&self, i: usize, j: usize) -> Option<&Point3> {
        if i >= self.width || j >= self.height {
            return None;
        }
        self.points[j * self.width + i].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter().flatten()
    }

    pub fn present_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

/// Unit surface normals, each paired with the point it was computed at.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalCloud {
    pub normals: Vec<Vec3>,
    pub sources: Vec<Point3>,
}

impl NormalCloud {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }
}

pub fn unproject_cloud(roi: &DepthRoi, k: &CameraIntrinsics) -> Result<OrderedPointCloud, GeomError> {
    if roi.rect.is_empty() || roi.valid_count() == 0 {
        return Err(GeomError::EmptyRoi);
    }
    let mut points = Vec::with_capacity(roi.rect.area());
    for j in 0..roi.rect.height {
        for i in 0..roi.rect.width {
            let p = match roi.depth(i, j) {
                Some(d) => Some(project_pixel(
                    (roi.rect.u0 + i) as f64,
                    (roi.rect.v0 + j) as f64,
                    d,
                    k,
                )?),
                None => None,
            };
            points.push(p);
        }
    }
    Ok(OrderedPointCloud {
        width: roi.rect.width,
        height: roi.rect.height,
        points,
        origin_bbox: roi.rect,
        timestamp: roi.timestamp,
    })
}

/// Forward-difference normals: `t_x` to the right neighbor, `t_y` to the one
/// below, `n = t_x × t_y`, oriented so that `n · (-p) > 0`.
pub fn compute_normals(cloud: &OrderedPointCloud) -> Result<NormalCloud, GeomError> {
    let mut out = NormalCloud::default();
    for j in 0..cloud.height.saturating_sub(1) {
        for i in 0..cloud.width.saturating_sub(1) {
            let (Some(p), Some(right), Some(down)) =
                (cloud.get(i, j), cloud.get(i + 1, j), cloud.get(i, j + 1))
            else {
                continue;
            };
            let tx = right - p;
            let ty = down - p;
            let n = tx.cross(&ty);
            let norm = n.norm();
            if !(norm > 0.0) {
                continue;
            }
            let mut n = n / norm;
            let facing = -n.dot(&p.coords);
            if facing == 0.0 {
                // Grazing: no defined side.
                continue;
            }
            if facing < 0.0 {
                n = -n;
            }
            out.normals.push(n);
            out.sources.push(*p);
        }
    }
    if out.len() < 3 {
        return Err(GeomError::DegenerateCloud(out.len()));
    }
    Ok(out)
}
